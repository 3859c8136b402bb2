use clap::Parser;
use ffpe::cli::{execute, exit_code, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("ffpe: {e}");
        std::process::exit(exit_code(&e));
    }
}
