use clap::Parser;

fn main() {
    let cli = mfv_cli::Cli::parse();
    match mfv_cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
