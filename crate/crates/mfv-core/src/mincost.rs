//! Exact solver for the balanced transportation problem.
//!
//! Successive shortest paths with Johnson potentials on the dense bipartite
//! graph: every augmentation follows a Dijkstra shortest path in the residual
//! network, so the final flow is an optimal basic solution of the
//! transportation LP. Supplies and demands are real-valued; each augmentation
//! saturates a source, a sink, or a residual arc, and mass below `DUST` is
//! dropped at the end (well inside the marginal tolerances the callers check).
//!
//! All tie-breaks are index-ordered, so the solver is deterministic.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Mass below this threshold is treated as exhausted.
const DUST: f64 = 1e-14;

pub(crate) struct TransportSolution {
    pub cost: f64,
    /// Flow matrix indexed `[source][sink]`.
    pub flow: Vec<Vec<f64>>,
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Solve `min sum c[i][j] f[i][j]` subject to row sums `supply`, column sums
/// `demand`, `f >= 0`. Supplies and demands must be nonnegative and have equal
/// totals up to construction tolerance; the largest demand absorbs the
/// difference so the instance balances exactly.
pub(crate) fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
) -> Result<TransportSolution> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(Error::InvalidPlan("empty marginal".into()));
    }

    let mut rem_s = supply.to_vec();
    let mut rem_d = demand.to_vec();
    let imbalance = rem_s.iter().sum::<f64>() - rem_d.iter().sum::<f64>();
    let k = rem_d
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    rem_d[k] += imbalance;
    if rem_d[k] < 0.0 {
        return Err(Error::InvalidPlan("marginal totals disagree".into()));
    }

    let mut flow = vec![vec![0.0f64; m]; n];
    // Node indexing: 0..n sources, n..n+m sinks.
    let mut pi = vec![0.0f64; n + m];
    let mut dist = vec![f64::INFINITY; n + m];
    // Parent of a sink is the source it was reached from and vice versa.
    let mut parent = vec![usize::MAX; n + m];

    let max_rounds = 64 * (n + m) + 1024;
    let mut rounds = 0usize;

    while rem_s.iter().sum::<f64>() > 1e-13 {
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::InvalidPlan(
                "transport solver failed to converge".into(),
            ));
        }

        dist.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        let mut heap = BinaryHeap::new();
        for (i, &r) in rem_s.iter().enumerate() {
            if r > DUST {
                dist[i] = 0.0;
                heap.push(Reverse(HeapItem { dist: 0.0, node: i }));
            }
        }

        let mut settled = vec![false; n + m];
        while let Some(Reverse(HeapItem { dist: du, node: u })) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            if u < n {
                // Forward arcs source -> every sink.
                for j in 0..m {
                    let v = n + j;
                    if settled[v] {
                        continue;
                    }
                    let rc = (cost[u][j] + pi[u] - pi[v]).max(0.0);
                    let cand = du + rc;
                    if cand < dist[v] {
                        dist[v] = cand;
                        parent[v] = u;
                        heap.push(Reverse(HeapItem {
                            dist: cand,
                            node: v,
                        }));
                    }
                }
            } else {
                // Backward arcs sink -> sources currently carrying flow.
                let j = u - n;
                for i in 0..n {
                    if settled[i] || flow[i][j] <= 0.0 {
                        continue;
                    }
                    let rc = (-cost[i][j] + pi[u] - pi[i]).max(0.0);
                    let cand = du + rc;
                    if cand < dist[i] {
                        dist[i] = cand;
                        parent[i] = u;
                        heap.push(Reverse(HeapItem {
                            dist: cand,
                            node: i,
                        }));
                    }
                }
            }
        }

        // Cheapest sink that still needs mass.
        let mut target = usize::MAX;
        for (j, &r) in rem_d.iter().enumerate() {
            if r > DUST
                && dist[n + j] < f64::INFINITY
                && (target == usize::MAX || dist[n + j] < dist[n + target])
            {
                target = j;
            }
        }
        if target == usize::MAX {
            // All remaining demand is dust; the loop guard ends next round.
            break;
        }
        let t = n + target;
        let dt = dist[t];

        for v in 0..n + m {
            pi[v] += dist[v].min(dt);
        }

        // Bottleneck along the augmenting path.
        let mut delta = rem_d[target];
        let mut v = t;
        loop {
            let p = parent[v];
            if v >= n {
                // Arrived via a forward arc from source p.
                if parent[p] == usize::MAX {
                    delta = delta.min(rem_s[p]);
                    break;
                }
            } else {
                // Arrived via a backward arc from sink p.
                delta = delta.min(flow[v][p - n]);
            }
            v = p;
        }

        let mut v = t;
        loop {
            let p = parent[v];
            if v >= n {
                flow[p][v - n] += delta;
                if parent[p] == usize::MAX {
                    rem_s[p] -= delta;
                    break;
                }
            } else {
                flow[v][p - n] -= delta;
            }
            v = p;
        }
        rem_d[target] -= delta;
    }

    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            if flow[i][j] > 0.0 {
                total += flow[i][j] * cost[i][j];
            }
        }
    }
    Ok(TransportSolution { cost: total, flow })
}
