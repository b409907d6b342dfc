use clap::Parser;
use pinn_forge::cli::{run, Cli};

fn main() {
    pinn_forge::init_threads();
    std::process::exit(run(Cli::parse()));
}
