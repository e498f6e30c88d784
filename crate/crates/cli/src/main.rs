use clap::Parser;
use pnpmm_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(text) => print!("{text}"),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
