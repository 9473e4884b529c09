//! Drive the command layer from code: the same runs `wavectl` performs,
//! written to a temporary run directory with a manifest.
//!
//! cargo run --release --example workbench

use wavectl::workbench::{run, Command, RunOptions};

fn main() {
    let root = std::env::temp_dir().join("wavectl-example");
    for (cmd, scenario) in [
        (Command::OracleCheck, None),
        (Command::Simulate, Some("fig4b")),
        (Command::Rays, Some("two-disc")),
    ] {
        let opts = RunOptions {
            scenario: scenario.map(String::from),
            out: Some(root.join(cmd.as_str())),
            ..Default::default()
        };
        let outcome = run(cmd, &opts);
        println!("{} -> exit {}: {}", cmd.as_str(), outcome.exit_code, outcome.message);
        if let Some(dir) = outcome.out_dir {
            let manifest = std::fs::read_to_string(dir.join("manifest.json")).unwrap_or_default();
            let files = manifest.matches("\"sha256\"").count();
            println!("   {} artifacts listed in {}", files, dir.join("manifest.json").display());
        }
    }
}
