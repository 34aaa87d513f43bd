use clap::Parser;

use foray::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("foray: {}", e.message);
            std::process::exit(e.code);
        }
    }
}
