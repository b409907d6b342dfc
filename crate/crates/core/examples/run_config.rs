//! Round trip of a run configuration: parse TOML, fill defaults, apply a
//! sweep axis and print the digest that identifies the run.

use pinn_forge::cli::{apply_axis, RunConfig};

const TEXT: &str = r#"
case = "manufactured:poisson_gamma"
seed = 4

[poisson]
n_observations = 20

[[schedule]]
optimizer = "adam"
epochs = 500
lr = 1e-3

[[schedule]]
optimizer = "bfgs"
epochs = 200
line_search = "armijo"
"#;

fn main() -> pinn_forge::Result<()> {
    let cfg = RunConfig::parse(TEXT)?;
    println!("{}", cfg.to_toml()?);
    println!("digest {}", cfg.digest());
    println!("output {}", cfg.default_out().display());

    let swapped = apply_axis(&cfg, "optimizer", "lbfgs_wolfe")?;
    println!("with L-BFGS: digest {}", swapped.digest());
    for phase in &swapped.schedule().phases {
        println!("  {phase:?}");
    }

    match RunConfig::parse("case = \"parametric_cavity\"\nsede = 1\n") {
        Ok(_) => println!("typo accepted?"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
