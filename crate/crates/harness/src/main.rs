use clap::Parser;

use seqopt_harness::cli::{error_line, execute, exit_code, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("{}", error_line(&e));
        std::process::exit(exit_code(&e));
    }
}
