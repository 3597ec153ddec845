mod cli;

use clap::Parser;

fn main() {
    let args = cli::Cli::parse();
    if let Err(f) = cli::run(args.command) {
        eprintln!("error: {}", f.message());
        std::process::exit(f.exit_code());
    }
}
