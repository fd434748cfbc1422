//! Drives a campaign from a TOML configuration, as the command-line tool
//! does, and prints the key-value summary.
//!
//! ```text
//! cargo run --release --example run_config
//! ```

use spde_picard::campaign::{run, Command, ExitStatus, RunConfig};

const CONFIG: &str = r#"
example = "delay-equation"
paths = 50
seed = 7
threads = 2

[simulate]
dump_paths = 2
stride = 100

[delay_equation]
cells = 8
"#;

fn main() -> spde_picard::Result<()> {
    let mut cfg = RunConfig::from_toml_str(CONFIG)?;
    cfg.output = std::env::temp_dir().join("spde-picard-run-config");
    let outcome = run(Command::Simulate, &cfg);
    let status = ExitStatus::of(&outcome);
    let summary = outcome?;
    print!("{}", summary.render()?);
    println!("files in {}: {:?}", cfg.output.display(), summary.files);
    println!("exit status {}", status.code());
    Ok(())
}
