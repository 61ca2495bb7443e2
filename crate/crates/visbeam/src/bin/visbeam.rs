use clap::Parser;
use visbeam::cli::{run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("{}", e.one_line());
        std::process::exit(e.exit_code());
    }
}
