use clap::Parser;
use perlat_cli::{resolve_config, run_to_exit, Cli};

fn main() {
    let cli = Cli::parse();
    std::process::exit(run_to_exit(resolve_config(cli.command, &cli.shared)));
}
