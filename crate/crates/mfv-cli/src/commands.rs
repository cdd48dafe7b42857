//! Subcommand implementations: each returns the process exit code, printing
//! a one-line summary on stdout.
//!
//! Exit codes separate scientific negatives from failures: 0 means the
//! computation succeeded and the answer is positive (tangent / condition
//! found / solve completed / all checks pass), 2 means it succeeded with a
//! negative answer, and 1 (raised as an error) means the run itself failed.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde_json::json;

use mfv_core::{
    difference_quotient, evaluate, feasibility_residual, lifted_metric, shift, solution_residual,
    solve_forward, solve_viable, tangency_estimate_with_threshold, viability_condition_check,
    wasserstein1, wasserstein1_cost, AtomicMeasure, Error as CoreError, LiftedMeasure,
    MeasureSetOracle, PathBundle, SolveMode, SolveResult, TangencyVerdict, ViabilityCheckParams,
};

use crate::config::{
    check_schema, read_json, CheckJobConfig, RunManifest, SolveJobConfig, TangencyJobConfig,
    RUN_SCHEMA,
};

/// Compact display of a float for summary lines: sensible fixed form for
/// ordinary magnitudes, scientific for extremes. File outputs keep full
/// round-trip precision; this only affects stdout.
fn fmt(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if !(1e-4..1e7).contains(&a) {
        return format!("{x:.6e}");
    }
    let mut s = format!("{x:.9}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

pub fn metric(a: &Path, b: &Path) -> anyhow::Result<i32> {
    let m1: AtomicMeasure = read_json(a)?;
    let m2: AtomicMeasure = read_json(b)?;
    let (w, _) = wasserstein1(&m1, &m2)?;
    println!("W1 = {}", fmt(w));
    Ok(0)
}

pub fn lifted_metric_cmd(a: &Path, b: &Path, p: f64) -> anyhow::Result<i32> {
    let b1: LiftedMeasure = read_json(a)?;
    let b2: LiftedMeasure = read_json(b)?;
    let w = lifted_metric(&b1, &b2, p)?;
    println!("W = {} (p = {p})", fmt(w));
    Ok(0)
}

pub fn tangency(config: &Path, out: Option<&Path>, seed: Option<u64>) -> anyhow::Result<i32> {
    let cfg: TangencyJobConfig = read_json(config)?;
    check_schema(&cfg.schema)?;
    let seed = seed.unwrap_or(cfg.seed);
    let k = cfg.k.build()?;
    let report =
        tangency_estimate_with_threshold(&cfg.beta, &k, cfg.tau0, cfg.levels, cfg.threshold)?;

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_pretty(&dir.join("tangency_report.json"), &report)?;
        let manifest = RunManifest {
            schema: RUN_SCHEMA.into(),
            command: "tangency".into(),
            seed,
            config: serde_json::to_value(&cfg)?,
            outputs: json!({ "report": "tangency_report.json" }),
            summary: json!({
                "verdict": report.verdict,
                "final_ratio": report.final_ratio(),
            }),
        };
        write_pretty(&dir.join("manifest.json"), &manifest)?;
    }

    let verdict_text = serde_json::to_value(report.verdict)?;
    println!(
        "tangency: verdict={} final_ratio={} threshold={}",
        verdict_text.as_str().unwrap(),
        fmt(report.final_ratio()),
        fmt(report.threshold)
    );
    Ok(if report.verdict == TangencyVerdict::Tangent {
        0
    } else {
        2
    })
}

pub fn check(config: &Path, out: Option<&Path>, seed: Option<u64>) -> anyhow::Result<i32> {
    let cfg: CheckJobConfig = read_json(config)?;
    check_schema(&cfg.schema)?;
    let seed = seed.unwrap_or(cfg.seed);
    let sys = cfg.system.build(cfg.m.dim())?;
    let k = cfg.k.build()?;
    let params = ViabilityCheckParams {
        tau0: cfg.tau0,
        levels: cfg.witness.levels,
        threshold: cfg.witness.threshold,
        restarts: cfg.witness.restarts,
        seed,
    };
    let outcome = viability_condition_check(&cfg.m, &k, &sys, &params)?;

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_pretty(&dir.join("witness.json"), &outcome.witness)?;
        write_pretty(&dir.join("tangency_report.json"), &outcome.report)?;
        let manifest = RunManifest {
            schema: RUN_SCHEMA.into(),
            command: "check".into(),
            seed,
            config: serde_json::to_value(&cfg)?,
            outputs: json!({
                "witness": "witness.json",
                "report": "tangency_report.json",
            }),
            summary: json!({ "found": outcome.found, "score": outcome.score }),
        };
        write_pretty(&dir.join("manifest.json"), &manifest)?;
    }

    println!(
        "check: found={} score={} threshold={}",
        outcome.found,
        fmt(outcome.score),
        fmt(params.threshold)
    );
    Ok(if outcome.found { 0 } else { 2 })
}

pub fn solve(config: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<i32> {
    let cfg: SolveJobConfig = read_json(config)?;
    check_schema(&cfg.schema)?;
    let seed = seed.unwrap_or(cfg.seed);
    let sys = cfg.system.build(cfg.m0.dim())?;
    let solver_cfg = cfg.solver_config(seed);

    let result = match cfg.mode.as_str() {
        "forward-selector" => {
            let selector = cfg
                .selector
                .as_ref()
                .context("forward-selector mode needs a `selector` block")?
                .build()?;
            solve_forward(&cfg.m0, &sys, &selector, &solver_cfg)
        }
        "viable-tracking" => {
            let k = cfg
                .k
                .as_ref()
                .context("viable-tracking mode needs a `k` block")?
                .build()?;
            solve_viable(&cfg.m0, &sys, &k, &solver_cfg)
        }
        other => anyhow::bail!("unknown mode {other:?}"),
    };

    let result = match result {
        Ok(r) => r,
        Err(err @ CoreError::ViabilityViolated { .. }) => {
            println!("solve: {err}");
            return Ok(2);
        }
        Err(err) => return Err(err.into()),
    };

    fs::create_dir_all(out)?;
    fs::write(out.join("particles.csv"), result.bundle.to_csv())?;
    fs::write(out.join("flow.csv"), flow_csv(&result))?;

    let res_full = solution_residual(&result, &sys, 0.0, *result.grid().last().unwrap())?;
    let total_merge: f64 = result.diagnostics.iter().map(|d| d.merge_error).sum();
    let manifest = RunManifest {
        schema: RUN_SCHEMA.into(),
        command: "solve".into(),
        seed,
        config: serde_json::to_value(&cfg)?,
        outputs: json!({
            "flow": "flow.csv",
            "particles": "particles.csv",
        }),
        summary: json!({
            "mode": cfg.mode,
            "steps": cfg.steps,
            "horizon": cfg.horizon,
            "trajectories": result.bundle.trajectories().len(),
            "max_dist_to_k": result.max_dist_to_k(),
            "final_dist_to_k": result.final_dist_to_k,
            "solution_residual": res_full,
            "max_segment_speed": result.max_segment_speed(),
            "total_merge_error": total_merge,
        }),
    };
    write_pretty(&out.join("manifest.json"), &manifest)?;

    match result.max_dist_to_k() {
        Some(d) => println!(
            "solve: mode={} steps={} max_dist_to_k={} residual={} out={}",
            cfg.mode,
            cfg.steps,
            fmt(d),
            fmt(res_full),
            out.display()
        ),
        None => println!(
            "solve: mode={} steps={} residual={} out={}",
            cfg.mode,
            cfg.steps,
            fmt(res_full),
            out.display()
        ),
    }
    Ok(0)
}

/// `t,dist_to_k,residual` per grid node; residuals are per-step diagnostics
/// (feasibility residual in viable mode, reachable-set defect in forward
/// mode) and the trailing node leaves them empty.
fn flow_csv(result: &SolveResult) -> String {
    let mut text = String::from("t,dist_to_K,residual\n");
    let grid = result.grid();
    for (j, &t) in grid.iter().enumerate() {
        let dist = if j < result.diagnostics.len() {
            result.diagnostics[j].dist_to_k
        } else {
            result.final_dist_to_k
        };
        let residual = if j < result.diagnostics.len() {
            let d = &result.diagnostics[j];
            d.feasibility_residual.or(d.aumann_residual)
        } else {
            None
        };
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        text.push_str(&format!("{t},{},{}\n", fmt(dist), fmt(residual)));
    }
    text
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Re-derive every invariant of a finished run directory from its own files.
pub fn verify(run_dir: &Path) -> anyhow::Result<i32> {
    let manifest: RunManifest = read_json(&run_dir.join("manifest.json"))?;
    if manifest.schema != RUN_SCHEMA {
        anyhow::bail!("unsupported run schema {:?}", manifest.schema);
    }
    if manifest.command != "solve" {
        anyhow::bail!("verify expects a solve run, found {:?}", manifest.command);
    }
    let cfg: SolveJobConfig = serde_json::from_value(manifest.config.clone())?;
    let sys = cfg.system.build(cfg.m0.dim())?;
    let csv_text = fs::read_to_string(run_dir.join("particles.csv"))?;
    let bundle = PathBundle::from_csv(&csv_text)?;
    let grid = bundle.grid().to_vec();
    let flow: Vec<AtomicMeasure> = grid
        .iter()
        .map(|&t| evaluate(&bundle, t))
        .collect::<Result<Vec<_>, _>>()?;
    let oracle = cfg.k.as_ref().map(|k| k.build()).transpose()?;
    let viable = cfg.mode == "viable-tracking";
    let result = SolveResult {
        mode: if viable {
            SolveMode::ViableTracking
        } else {
            SolveMode::ForwardSelector
        },
        bundle,
        flow,
        diagnostics: Vec::new(),
        final_dist_to_k: None,
    };

    let r = sys.bound_r();
    let l = sys.lipschitz_l();
    let horizon = *grid.last().unwrap() - grid[0];
    let steps = grid.len() - 1;
    let dt = horizon / steps as f64;
    let mut checks: Vec<Check> = Vec::new();

    let speed = result.max_segment_speed();
    checks.push(Check {
        name: "segment-speed",
        pass: speed <= r + 1e-12,
        detail: format!("max speed {speed} vs bound {r}"),
    });

    let excess = result.flow_lipschitz_excess(r)?;
    checks.push(Check {
        name: "flow-lipschitz",
        pass: excess <= 1e-9,
        detail: format!("worst W1 excess over R |t'-t''| is {excess}"),
    });

    for mult in [1usize, 2, 4] {
        let tau = mult as f64 * dt;
        if tau > horizon + 1e-12 {
            continue;
        }
        let beta = difference_quotient(&result.bundle, tau)?;
        let residual = feasibility_residual(&beta, &sys)?;
        let bound = l * r * tau + 1e-6;
        checks.push(Check {
            name: "difference-quotient-feasibility",
            pass: residual <= bound,
            detail: format!("tau={tau}: residual {residual} vs bound {bound}"),
        });
        let shifted = shift(&beta, tau)?;
        let target = evaluate(&result.bundle, grid[0] + tau)?;
        let gap = wasserstein1_cost(&shifted, &target)?;
        checks.push(Check {
            name: "shift-identity",
            pass: gap <= 1e-13,
            detail: format!("tau={tau}: W1 gap {gap}"),
        });
    }

    if let Some(k) = &oracle {
        let mut max_dist = 0.0f64;
        for m in &result.flow {
            let (d, _) = k.project(m)?;
            max_dist = max_dist.max(d);
        }
        let bound = (horizon + r) / steps as f64 + k.resolution();
        checks.push(Check {
            name: "distance-to-constraint",
            pass: max_dist <= bound,
            detail: format!("max dist {max_dist} vs bound {bound}"),
        });

        let res = solution_residual(&result, &sys, grid[0], *grid.last().unwrap())?;
        let res_bound = horizon * (1.0 + 2.0 * l * horizon + 2.0 * l * r) / steps as f64 + 1e-6;
        checks.push(Check {
            name: "solution-residual",
            pass: res <= res_bound,
            detail: format!("residual {res} vs bound {res_bound}"),
        });
    }

    let mut all_pass = true;
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!("verify {}: {status} ({})", c.name, c.detail);
        all_pass &= c.pass;
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    println!(
        "verify: {} ({passed}/{} checks)",
        if all_pass { "PASS" } else { "FAIL" },
        checks.len()
    );
    Ok(if all_pass { 0 } else { 2 })
}

fn write_pretty<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
