//! Trains a short run, writes a checkpoint, restores it, and keeps
//! training from the restored state.

use std::path::Path;

use vgcrl::config::parse_config_str;
use vgcrl::trainer::Trainer;

const CONFIG: &str = r#"
preset = "table2-g10-sn"

[train]
total_env_steps = 4000
warmup_env_steps = 400
eval_interval = 1000

[eval]
episodes = 20
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = parse_config_str(CONFIG, Path::new("inline"))?.config;
    let mut trainer = Trainer::new(&config, 0)?;
    trainer.run_until(Some(2000), |_, _| Ok(()))?;

    let dir = std::env::temp_dir().join("vgcrl-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("checkpoint.json");
    trainer.write_checkpoint(&path)?;
    println!("wrote {} at {} env steps", path.display(), trainer.env_steps());

    let mut resumed = Trainer::from_checkpoint(Trainer::read_checkpoint(&path)?)?;
    println!("restored at {} env steps, {} evaluations", resumed.env_steps(), resumed.history().len());
    for r in resumed.run()? {
        println!("  {:>5} steps  F {:+.3}  LGR(z) {:.2}", r.env_steps, r.objective, r.lgr_z);
    }
    Ok(())
}
