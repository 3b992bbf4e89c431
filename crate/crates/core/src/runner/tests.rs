use std::path::Path;

use super::*;
use crate::config::parse_config_str;

const TINY: &str = r#"
name = "tiny"

[env]
kind = "windy"
horizon = 10

[posterior]
family = "adaptive_variance_gaussian"
goal_dim = 2
state_slice = [0, 1]

[agent]
hidden = [8]
batch_size = 16

[train]
total_env_steps = 80
warmup_env_steps = 40
episodes_per_iteration = 2
discriminator_steps_per_iteration = 2
discriminator_batch_size = 16
eval_interval = 40
seeds = [0, 1, 2]

[eval]
episodes = 2
"#;

fn resolved(text: &str) -> ResolvedConfig {
    parse_config_str(text, Path::new("tiny.toml")).unwrap()
}

fn options(root: &Path, seed: Option<u64>, force: bool) -> TrainOptions {
    TrainOptions {
        seed,
        force,
        output_root: Some(root.to_path_buf()),
    }
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn seeds_get_directories_and_a_summary() {
    let root = tempfile::tempdir().unwrap();
    let run = train(&resolved(TINY), &options(root.path(), None, false), &mut Vec::new()).unwrap();
    assert_eq!(run.seeds.len(), 3);
    for s in 0..3 {
        let dir = run.directory.join(format!("seed_{s}"));
        let csv = read(dir.join("metrics.csv"));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "env_steps,F,lgr_z,lgr_s,disc_top1,sigma_0,sigma_1");
        assert_eq!(lines.len(), 3);
        assert!(dir.join("checkpoint.json").exists());
        assert!(dir.join("metrics.json").exists());
    }
    let summary = read(run.directory.join("summary.csv"));
    let header = summary.lines().next().unwrap();
    assert!(header.starts_with("env_steps,seeds,F_mean,F_std,lgr_z_mean"), "{header}");
    assert!(header.ends_with("sigma_1_mean,sigma_1_std"));
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(2).unwrap().starts_with("80,3,"));
}

#[test]
fn same_seed_gives_identical_csv_and_collisions_need_force() {
    let root = tempfile::tempdir().unwrap();
    let cfg = resolved(TINY);
    train(&cfg, &options(root.path(), Some(1), false), &mut Vec::new()).unwrap();
    let first = read(root.path().join("tiny/seed_1/metrics.csv"));
    let err = train(&cfg, &options(root.path(), Some(1), false), &mut Vec::new()).unwrap_err();
    assert!(err.to_string().contains("--force"), "{err}");
    train(&cfg, &options(root.path(), Some(1), true), &mut Vec::new()).unwrap();
    assert_eq!(first, read(root.path().join("tiny/seed_1/metrics.csv")));
}

#[test]
fn saved_config_reproduces_the_run() {
    let root = tempfile::tempdir().unwrap();
    train(&resolved(TINY), &options(root.path(), Some(2), false), &mut Vec::new()).unwrap();
    let saved = root.path().join("tiny/seed_2/config.toml");
    let again = crate::config::parse_config(&saved).unwrap();
    assert_eq!(again.config.train.seeds, vec![2]);
    let other = tempfile::tempdir().unwrap();
    train(&again, &options(other.path(), None, false), &mut Vec::new()).unwrap();
    assert_eq!(
        read(root.path().join("tiny/seed_2/metrics.csv")),
        read(other.path().join("tiny/seed_2/metrics.csv"))
    );
}

fn trained_checkpoint(root: &Path) -> PathBuf {
    train(&resolved(TINY), &options(root, Some(0), false), &mut Vec::new()).unwrap();
    root.join("tiny/seed_0/checkpoint.json")
}

#[test]
fn hold_still_on_self_targets_scores_zero() {
    let root = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint(root.path());
    let trainer = Trainer::from_checkpoint(Trainer::read_checkpoint(&ckpt).unwrap()).unwrap();
    let starts = trainer.goal_reaching_env().unwrap().upcoming_initial_observations(5);
    let text: String = starts
        .iter()
        .map(|s| s.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let targets = root.path().join("targets.csv");
    fs::write(&targets, text).unwrap();
    let report = eval(&ckpt, &targets, None, EvalPolicy::HoldStill).unwrap();
    assert_eq!(report.report.mean_distance, 0.0);
    assert_eq!(report.report.distances.len(), 5);
}

#[test]
fn agent_eval_is_repeatable_and_checks_inputs() {
    let root = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint(root.path());
    let targets = root.path().join("targets.csv");
    fs::write(&targets, "x,y,vx,vy\n0.5,0.5,0,0\n-0.5,0.2,0,0\n").unwrap();
    let a = eval(&ckpt, &targets, None, EvalPolicy::Agent).unwrap();
    let b = eval(&ckpt, &targets, None, EvalPolicy::Agent).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.report.mask, vec![0, 1]);

    let masked = eval(&ckpt, &targets, Some(vec![0]), EvalPolicy::Agent).unwrap();
    assert_eq!(masked.report.mask, vec![0]);

    fs::write(&targets, "# nothing\n").unwrap();
    assert!(eval(&ckpt, &targets, None, EvalPolicy::Agent).is_err());

    fs::write(&targets, "0.5,0.5,0\n").unwrap();
    let err = eval(&ckpt, &targets, None, EvalPolicy::Agent).unwrap_err().to_string();
    assert!(err.contains("target observation"), "{err}");
}

#[test]
fn preset_listing_names_every_preset() {
    let list = presets_list();
    for name in crate::presets::preset_names() {
        assert!(list.contains(name));
    }
    assert_eq!(list.lines().count(), crate::presets::PRESETS.len());
}
