//! Command implementations behind the `vgcrl` binary: seeded training runs
//! with on-disk outputs, checkpoint evaluation, and preset listing.
//!
//! A run named `name` with seeds `[0, 1]` writes
//!
//! ```text
//! <root>/name/config.toml          resolved config, all seeds
//! <root>/name/summary.csv|json     mean and std per column across seeds
//! <root>/name/seed_0/config.toml   resolved config for this seed alone
//! <root>/name/seed_0/metrics.csv   one row per evaluation
//! <root>/name/seed_0/metrics.json
//! <root>/name/seed_0/checkpoint.json
//! ```
//!
//! `<root>` is `output.directory`, or `$VGCRL_OUT` when set.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OutputFormat, ResolvedConfig};
use crate::envs::Environment;
use crate::metrics::{csv_columns, lgr_state, Greedy, HoldStill, LgrStateReport, MetricsRecord, Policy, TargetStateSet};
use crate::trainer::{TrainEvent, Trainer};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Run only this seed instead of the configured list.
    pub seed: Option<u64>,
    /// Replace existing outputs.
    pub force: bool,
    /// Overrides the output root (and `$VGCRL_OUT`).
    pub output_root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub directory: PathBuf,
    pub history: Vec<MetricsRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub directory: PathBuf,
    pub seeds: Vec<SeedResult>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if occupied && !force {
            return Err(Error::InvalidArgument(format!(
                "output directory {} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Trains every requested seed in turn, writing outputs as evaluations
/// arrive. Progress lines go to `log`.
pub fn train(resolved: &ResolvedConfig, options: &TrainOptions, log: &mut dyn Write) -> Result<RunResult> {
    let config = &resolved.config;
    config.validate()?;
    let root = options.output_root.clone().unwrap_or_else(|| config.output_root());
    let run_dir = root.join(config.run_name());
    let seeds = options.seed.map_or_else(|| config.train.seeds.clone(), |s| vec![s]);

    let seed_dirs: Vec<PathBuf> = seeds.iter().map(|s| run_dir.join(format!("seed_{s}"))).collect();
    if !options.force {
        for dir in &seed_dirs {
            if dir.exists() {
                return Err(Error::InvalidArgument(format!(
                    "output directory {} already exists; pass --force to overwrite",
                    dir.display()
                )));
            }
        }
    }
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    write_file(&run_dir.join("config.toml"), config.to_toml())?;

    let mut results = Vec::new();
    for (&seed, dir) in seeds.iter().zip(&seed_dirs) {
        prepare_dir(dir, options.force)?;
        let history = train_seed(config, seed, dir, log)?;
        results.push(SeedResult {
            seed,
            directory: dir.clone(),
            history,
        });
    }
    if results.len() > 1 {
        let (header, rows) = summarize(&results)?;
        write_outputs(&run_dir, "summary", &config.output.formats, &header, &rows)?;
    }
    Ok(RunResult {
        directory: run_dir,
        seeds: results,
    })
}

fn write_outputs(dir: &Path, stem: &str, formats: &[OutputFormat], header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    if formats.contains(&OutputFormat::Csv) {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|x| if x.is_nan() { String::new() } else { x.to_string() }).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        write_file(&dir.join(format!("{stem}.csv")), text)?;
    }
    if formats.contains(&OutputFormat::Json) {
        let records: Vec<serde_json::Map<String, serde_json::Value>> = rows
            .iter()
            .map(|row| {
                header
                    .iter()
                    .zip(row)
                    .map(|(k, v)| (k.clone(), serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, Into::into)))
                    .collect()
            })
            .collect();
        write_file(&dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&records).expect("json"))?;
    }
    Ok(())
}

fn train_seed(config: &ExperimentConfig, seed: u64, dir: &Path, log: &mut dyn Write) -> Result<Vec<MetricsRecord>> {
    let mut single = config.clone();
    single.train.seeds = vec![seed];
    write_file(&dir.join("config.toml"), single.to_toml())?;

    let mut trainer = Trainer::new(config, seed)?;
    let columns = csv_columns(trainer.posterior()).join(",");
    let formats = config.output.formats.clone();
    let csv_path = dir.join("metrics.csv");
    let mut csv = format!("{columns}\n");
    let _ = writeln!(log, "seed {seed}: training to {} env steps in {}", config.train.total_env_steps, dir.display());

    trainer.run_until(None, |t, event| {
        match event {
            TrainEvent::Iteration(_) => {}
            TrainEvent::Evaluated(record) => {
                let _ = writeln!(
                    log,
                    "seed {seed} step {:>8}  F {:+.4}  lgr_z {:.4}{}{}",
                    record.env_steps,
                    record.objective,
                    record.lgr_z,
                    record.lgr_s.map_or(String::new(), |v| format!("  lgr_s {v:.4}")),
                    record.disc_top1.map_or(String::new(), |v| format!("  top1 {v:.3}")),
                );
                if formats.contains(&OutputFormat::Csv) {
                    csv.push_str(&record.csv_row());
                    csv.push('\n');
                    write_file(&csv_path, &csv)?;
                }
                if formats.contains(&OutputFormat::Json) {
                    let json = serde_json::to_string_pretty(t.history()).expect("records serialize");
                    write_file(&dir.join("metrics.json"), json)?;
                }
            }
            TrainEvent::CheckpointDue => t.write_checkpoint(&dir.join("checkpoint.json"))?,
        }
        Ok(())
    })?;
    Ok(trainer.history().to_vec())
}

/// Parses a metrics CSV cell; blanks become NaN.
fn cells(record: &MetricsRecord) -> Vec<f64> {
    record
        .csv_row()
        .split(',')
        .map(|c| c.parse().unwrap_or(f64::NAN))
        .collect()
}

/// Mean and sample std per column across seeds, aligned by evaluation index.
pub fn summarize(results: &[SeedResult]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to summarize".into()))?;
    let n_rows = first.history.len();
    if results.iter().any(|r| r.history.len() != n_rows) {
        return Err(Error::InvalidArgument("seeds have different evaluation counts".into()));
    }
    let sample = first
        .history
        .first()
        .ok_or_else(|| Error::InvalidArgument("no evaluations to summarize".into()))?;
    let n_cols = cells(sample).len();
    let posterior_cols = posterior_columns(sample);
    let base = ["env_steps", "F", "lgr_z", "lgr_s", "disc_top1"];
    let names: Vec<String> = base.iter().map(|s| s.to_string()).chain(posterior_cols).collect();
    let mut header = vec!["env_steps".to_string(), "seeds".to_string()];
    for name in &names[1..] {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    let mut rows = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let table: Vec<Vec<f64>> = results.iter().map(|r| cells(&r.history[i])).collect();
        let mut row = vec![table[0][0], results.len() as f64];
        for c in 1..n_cols {
            let xs: Vec<f64> = table.iter().map(|t| t[c]).filter(|x| !x.is_nan()).collect();
            let (mean, std) = mean_std(&xs);
            row.push(mean);
            row.push(std);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn posterior_columns(record: &MetricsRecord) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(sigma) = &record.posterior.sigma {
        out.extend((0..sigma.len()).map(|i| format!("sigma_{i}")));
    }
    if let Some(a) = &record.posterior.a_matrix {
        for (r, row) in a.iter().enumerate() {
            out.extend((0..row.len()).map(|c| format!("a_{r}_{c}")));
        }
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Which controller `eval` rolls out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalPolicy {
    /// The checkpoint's deterministic policy.
    #[default]
    Agent,
    /// Zero actions.
    HoldStill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub env_steps: u64,
    pub policy: EvalPolicy,
    #[serde(flatten)]
    pub report: LgrStateReport,
}

/// Goal reaching in state space for a saved checkpoint. Deterministic: the
/// same checkpoint and targets always give the same report.
pub fn eval(checkpoint: &Path, targets: &Path, mask: Option<Vec<usize>>, policy: EvalPolicy) -> Result<EvalReport> {
    let targets = TargetStateSet::from_file(targets)?;
    let trainer = Trainer::from_checkpoint(Trainer::read_checkpoint(checkpoint)?)?;
    let report = eval_trainer(&trainer, &targets.with_mask(mask), policy)?;
    Ok(EvalReport {
        checkpoint: checkpoint.to_path_buf(),
        env_steps: trainer.env_steps(),
        policy,
        report,
    })
}

pub fn eval_trainer(trainer: &Trainer, targets: &TargetStateSet, policy: EvalPolicy) -> Result<LgrStateReport> {
    let mut env = trainer.goal_reaching_env()?;
    let spec = env.spec();
    let config = trainer.config();
    let horizon = config.eval.lgr_state_horizon.unwrap_or(spec.horizon);
    let greedy = Greedy(trainer.agent());
    let still = HoldStill {
        action_dim: spec.action_dim,
    };
    let controller: &dyn Policy = match policy {
        EvalPolicy::Agent => &greedy,
        EvalPolicy::HoldStill => &still,
    };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(trainer.seed());
    lgr_state(controller, trainer.posterior(), &mut env, targets, horizon, config.eval.embedding, &mut rng)
}

/// `name  summary` lines for every shipped preset.
pub fn presets_list() -> String {
    crate::presets::PRESETS
        .iter()
        .map(|(name, summary, _)| format!("{name:<20} {summary}\n"))
        .collect()
}

#[cfg(test)]
mod tests;
