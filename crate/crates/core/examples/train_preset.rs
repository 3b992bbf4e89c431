//! Trains one seed of a shipped preset and prints each evaluation.
//!
//! ```text
//! cargo run --release --example train_preset -- agcrl-windy-2d 0 [env_steps] [overrides]
//! ```
//!
//! `overrides` is TOML layered on the preset, e.g. `"[agent]\nbatch_size = 32"`.

use std::path::Path;
use std::time::Instant;

use vgcrl::config::parse_config_str;
use vgcrl::envs::Env;
use vgcrl::metrics::projection_recovery;
use vgcrl::trainer::{TrainEvent, Trainer};

fn main() -> vgcrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "agcrl-windy-2d".into());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let steps: Option<u64> = args.next().and_then(|s| s.parse().ok());
    let overrides = args.next().unwrap_or_default().replace("\\n", "\n");

    let text = format!("preset = \"{preset}\"\n{overrides}\n");
    let config = parse_config_str(&text, Path::new("inline"))?.config;
    let mut trainer = Trainer::new(&config, seed)?;
    let start = Instant::now();
    trainer.run_until(steps, |t, event| {
        if let TrainEvent::Evaluated(r) = event {
            println!(
                "{:>7} steps {:>6.1}s  F={:+.3} lgr_z={:.3} top1={} sigma={:?} A={:?}",
                r.env_steps,
                start.elapsed().as_secs_f64(),
                r.objective,
                r.lgr_z,
                r.disc_top1.map_or("-".into(), |a| format!("{a:.3}")),
                r.posterior.sigma,
                r.posterior.a_matrix,
            );
            if let (Env::Projected(env), Some(a)) = (t.env(), t.posterior().a_matrix()) {
                let report = projection_recovery(a, env.projection().matrix())?;
                println!("        recovery defect {:.3} {:?}", report.defect, report.singular_values);
            }
        }
        Ok(())
    })?;
    if let (Env::Projected(env), Some(a)) = (trainer.env(), trainer.posterior().a_matrix()) {
        let report = projection_recovery(a, env.projection().matrix())?;
        println!("recovery defect {:.3}, singular values {:?}", report.defect, report.singular_values);
    }
    Ok(())
}
