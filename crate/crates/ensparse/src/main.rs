use clap::Parser;

use ensparse::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli, std::env::vars()) {
        eprintln!("error: {e}");
        if let ensparse::Error::Core(core) = &e {
            if let Some(kkt) = core.kkt_residual() {
                eprintln!("KKT residual: {kkt:e}");
            }
        }
        std::process::exit(e.exit_code());
    }
}
