use std::path::Path;

use super::*;
use crate::config::parse_config_str;

fn tiny(extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"
[env]
kind = "windy"
horizon = 10

[posterior]
family = "categorical"
goal_dim = 4
state_slice = [0, 1]
hidden = [8]

[agent]
hidden = [8]
batch_size = 16

[train]
total_env_steps = 120
warmup_env_steps = 40
episodes_per_iteration = 2
discriminator_steps_per_iteration = 2
discriminator_batch_size = 16
eval_interval = 40

[eval]
episodes = 3
{extra}
"#
    );
    parse_config_str(&text, Path::new("tiny.toml")).unwrap().config
}

#[test]
fn runs_evaluate_on_schedule() {
    let mut t = Trainer::new(&tiny(""), 0).unwrap();
    let history = t.run().unwrap().to_vec();
    let steps: Vec<u64> = history.iter().map(|r| r.env_steps).collect();
    assert_eq!(steps, vec![40, 80, 120]);
    assert!(t.is_finished());
    assert!(history.iter().all(|r| r.disc_top1.is_some() && r.lgr_s.is_none()));
    assert_eq!(t.buffer().len(), 120);
}

#[test]
fn same_seed_same_history() {
    let cfg = tiny("");
    let a = Trainer::new(&cfg, 3).unwrap().run().unwrap().to_vec();
    let b = Trainer::new(&cfg, 3).unwrap().run().unwrap().to_vec();
    assert_eq!(a, b);
    let c = Trainer::new(&cfg, 4).unwrap().run().unwrap().to_vec();
    assert_ne!(a, c);
}

#[test]
fn evaluation_does_not_perturb_training() {
    let cfg = tiny("");
    let mut a = Trainer::new(&cfg, 1).unwrap();
    let mut b = Trainer::new(&cfg, 1).unwrap();
    for _ in 0..4 {
        a.run_iteration().unwrap();
        b.evaluate().unwrap();
        b.run_iteration().unwrap();
    }
    assert_eq!(a.checkpoint().params, b.checkpoint().params);
}

#[test]
fn warmup_skips_agent_updates() {
    let mut t = Trainer::new(&tiny(""), 0).unwrap();
    let first = t.run_iteration().unwrap();
    assert_eq!(first.env_steps, 20);
    assert_eq!(first.agent_updates, 0);
    t.run_iteration().unwrap();
    let third = t.run_iteration().unwrap();
    assert_eq!(third.agent_updates, 20);
    assert!(third.last_losses.is_some());
}

#[test]
fn fractional_update_ratio_carries_over() {
    let mut cfg = tiny("");
    cfg.train.warmup_env_steps = 0;
    cfg.train.agent_updates_per_env_step = 0.15;
    let mut t = Trainer::new(&cfg, 0).unwrap();
    let counts: Vec<usize> = (0..4).map(|_| t.run_iteration().unwrap().agent_updates).collect();
    assert_eq!(counts.iter().sum::<usize>(), 12);
    assert_eq!(counts, vec![3, 3, 3, 3]);
}

#[test]
fn checkpoint_restores_parameters_and_counters() {
    let cfg = tiny("lgr_state_targets = 3");
    let mut t = Trainer::new(&cfg, 2).unwrap();
    t.run_until(Some(80), |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    t.write_checkpoint(&path).unwrap();
    let restored = Trainer::from_checkpoint(Trainer::read_checkpoint(&path).unwrap()).unwrap();
    assert_eq!(restored.env_steps(), 80);
    assert_eq!(restored.history(), t.history());
    assert_eq!(restored.checkpoint().params, t.checkpoint().params);
    assert_eq!(restored.evaluate().unwrap(), t.evaluate().unwrap());
    let mut resumed = restored;
    resumed.run().unwrap();
    assert_eq!(resumed.history().len(), 3);
    assert!(resumed.history()[2].lgr_s.is_some());
}

#[test]
fn bad_checkpoint_format_is_rejected() {
    let t = Trainer::new(&tiny(""), 0).unwrap();
    let mut c = t.checkpoint();
    c.format = "other".into();
    assert!(Trainer::from_checkpoint(c).is_err());
}

#[test]
fn eval_interval_must_align_with_iterations() {
    let text = "[env]\nkind = \"windy\"\nhorizon = 10\n[posterior]\nfamily = \"categorical\"\n[train]\neval_interval = 55\n";
    let err = parse_config_str(text, Path::new("x.toml")).unwrap_err().to_string();
    assert!(err.contains("train.eval_interval"), "{err}");
}

#[test]
fn state_relabeling_and_goal_reaching_targets() {
    let text = r#"
[env]
kind = "windy"
horizon = 10
[posterior]
family = "fixed_identity_gaussian"
goal_dim = 2
state_slice = [0, 1]
[agent]
hidden = [8]
batch_size = 16
relabel = "state"
[train]
total_env_steps = 40
warmup_env_steps = 20
episodes_per_iteration = 2
discriminator_steps_per_iteration = 0
eval_interval = 20
[eval]
episodes = 2
lgr_state_targets = 4
"#;
    let cfg = parse_config_str(text, Path::new("g.toml")).unwrap().config;
    let mut t = Trainer::new(&cfg, 0).unwrap();
    let mut relabeled = 0;
    t.run_until(None, |_, e| {
        if let TrainEvent::Iteration(s) = e {
            relabeled += s.relabeled;
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(relabeled, 8 * 40);
    let last = t.history().last().unwrap();
    assert!(last.lgr_s.unwrap() >= 0.0);
    assert!(last.disc_top1.is_none());
}
