//! Randomized invariants shared by the property tests and the acceptance run.
//! Each function runs `cases` proptest cases and panics with the shrunk
//! counterexample on failure.

use std::path::Path;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vgcrl::agent::{goal_relabel_her, pher_relabel, AnchorStrategy, PosteriorDraw, ReplayBuffer, Transition};
use vgcrl::config::parse_config_str;
use vgcrl::posterior::{LatentGoal, Posterior, PosteriorConfig, PosteriorFamily, Prior};
use vgcrl::trainer::Trainer;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(name: &str, cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>)
where
    S::Value: std::fmt::Debug,
{
    if let Err(e) = runner(cases).run(&strategy, test) {
        panic!("{name}: {e}");
    }
}

const CONTINUOUS: [PosteriorFamily; 5] = [
    PosteriorFamily::FixedIdentityGaussian,
    PosteriorFamily::AdaptiveVarianceGaussian,
    PosteriorFamily::LinearGaussian,
    PosteriorFamily::MlpGaussian,
    PosteriorFamily::Gmm,
];

fn small_config(family: PosteriorFamily, goal_dim: usize) -> PosteriorConfig {
    PosteriorConfig {
        hidden: vec![8],
        gmm_components: 3,
        ..PosteriorConfig::new(family, goal_dim)
    }
}

/// Densities integrate to one over the goal space; categorical
/// probabilities sum to one.
pub fn posterior_normalization(cases: u32) {
    let strategy = (0usize..6, any::<u64>(), -1.0f64..1.0, 0.3f64.ln()..10f64.ln(), any::<bool>());
    run("posterior normalization", cases, strategy, |(k, seed, s, log_sigma, squash)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if k == 5 {
            let p = Posterior::new(small_config(PosteriorFamily::Categorical, 7), 2, &mut rng).unwrap();
            let obs = [s, -s];
            let total: f64 = (0..7)
                .map(|i| p.log_prob(&LatentGoal::Discrete(i), &obs).unwrap().exp())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12, "categorical sums to {total}");
            return Ok(());
        }
        let family = CONTINUOUS[k];
        let cfg = PosteriorConfig {
            init_log_sigma: log_sigma,
            squash: family.uses_mlp().then_some(squash),
            ..small_config(family, 1)
        };
        let p = Posterior::new(cfg, 1, &mut rng).unwrap();
        let dist = p.distribution(&[s]).unwrap();
        let (lo, hi, n) = if p.squashed() { (-1.0, 1.0, 200_000) } else { (-80.0, 80.0, 200_000) };
        let h = (hi - lo) / n as f64;
        let total: f64 = (0..n)
            .map(|i| dist.log_prob(&LatentGoal::Continuous(vec![lo + (i as f64 + 0.5) * h])).unwrap().exp() * h)
            .sum();
        prop_assert!((total - 1.0).abs() < 2e-3, "{family:?} squash={} integrates to {total}", p.squashed());
        Ok(())
    });
}

/// Global log sigma stays inside its clip range whatever the data.
pub fn log_sigma_clipping(cases: u32) {
    let strategy = (any::<u64>(), -3.0f64..3.0, 1usize..20);
    run("log sigma clipping", cases, strategy, |(seed, log_scale, steps)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = PosteriorConfig {
            learning_rate: 0.5,
            ..PosteriorConfig::new(PosteriorFamily::AdaptiveVarianceGaussian, 2)
        };
        let mut p = Posterior::new(cfg, 2, &mut rng).unwrap();
        let scale = 10f64.powf(log_scale);
        let pairs: Vec<_> = (0..64)
            .map(|_| {
                let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s = z.iter().map(|x| x + scale * rng.gen_range(-1.0..1.0)).collect();
                (LatentGoal::Continuous(z), s)
            })
            .collect();
        for _ in 0..steps {
            p.fit_discriminator_step(&pairs).unwrap();
            for sigma in p.sigma().unwrap() {
                prop_assert!((0.3 - 1e-12..=10.0 + 1e-9).contains(&sigma), "sigma {sigma} at scale {scale}");
            }
        }
        Ok(())
    });
}

fn random_buffer(rng: &mut ChaCha8Rng, prior: &Prior, obs_dim: usize, episodes: usize, magnitude: f64) -> ReplayBuffer {
    let mut buffer = ReplayBuffer::new(10_000).unwrap();
    for _ in 0..episodes {
        let goal = prior.sample(rng);
        let len = rng.gen_range(1..8);
        let episode = (0..len)
            .map(|_| Transition {
                obs: (0..obs_dim).map(|_| magnitude * rng.gen_range(-1.0..1.0)).collect(),
                action: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                next_obs: (0..obs_dim).map(|_| magnitude * rng.gen_range(-1.0..1.0)).collect(),
                goal: goal.clone(),
                done: false,
            })
            .collect();
        buffer.store_episode(episode).unwrap();
    }
    buffer
}

const STRATEGIES: [AnchorStrategy; 3] = [AnchorStrategy::Final, AnchorStrategy::Future, AnchorStrategy::Episode];

/// Relabeled goals lie in the prior's support, exactly `round(f * B)` are
/// replaced, and the rest keep their rollout goal.
pub fn relabeled_goals_in_support(cases: u32) {
    let families = [
        PosteriorFamily::FixedIdentityGaussian,
        PosteriorFamily::LinearGaussian,
        PosteriorFamily::MlpGaussian,
        PosteriorFamily::Gmm,
        PosteriorFamily::Categorical,
    ];
    let strategy = (any::<u64>(), 0usize..5, 0.0f64..=1.0, 0usize..3, any::<bool>(), 0.1f64..100.0, any::<bool>());
    run("relabel support", cases, strategy, |(seed, f, fraction, a, mode, magnitude, state_her)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let family = families[f];
        let goal_dim = if family.is_discrete() { 5 } else { 2 };
        let posterior = Posterior::new(small_config(family, goal_dim), 2, &mut rng).unwrap();
        let prior = posterior.prior().unwrap();
        let buffer = random_buffer(&mut rng, &prior, 2, 6, magnitude);
        let mut batch = buffer.sample(32, &mut rng).unwrap();
        let original = batch.clone();
        let draw = if mode { PosteriorDraw::Mode } else { PosteriorDraw::Sample };
        let n = if state_her && !family.is_discrete() {
            goal_relabel_her(&buffer, &[0, 1], &prior, &mut batch, fraction, STRATEGIES[a], &mut rng).unwrap()
        } else {
            pher_relabel(&buffer, &posterior, &prior, &mut batch, fraction, STRATEGIES[a], draw, &mut rng).unwrap()
        };
        prop_assert_eq!(n, (fraction * 32.0).round() as usize);
        prop_assert_eq!(batch.iter().filter(|s| s.relabeled).count(), n);
        for (s, o) in batch.iter().zip(&original) {
            prop_assert!(prior.contains(s.goal()), "{:?} outside {:?}", s.goal(), prior);
            if !s.relabeled {
                prop_assert_eq!(&s.transition, &o.transition);
            }
            prop_assert_eq!(s.index, o.index);
        }
        Ok(())
    });
}

/// Relabeling never touches stored transitions, so the discriminator's
/// pairs always carry the goals the episodes were rolled out with.
pub fn discriminator_pairs_are_on_policy(cases: u32) {
    let strategy = (any::<u64>(), 0.0f64..=1.0, 1usize..64);
    run("on-policy discriminator pairs", cases, strategy, |(seed, fraction, window)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let posterior = Posterior::new(small_config(PosteriorFamily::Categorical, 4), 2, &mut rng).unwrap();
        let prior = posterior.prior().unwrap();
        let buffer = random_buffer(&mut rng, &prior, 2, 8, 1.0);
        let before: Vec<_> = buffer.iter().map(|(i, t)| (i, t.clone())).collect();
        for _ in 0..3 {
            let mut batch = buffer.sample(16, &mut rng).unwrap();
            pher_relabel(&buffer, &posterior, &prior, &mut batch, fraction, AnchorStrategy::Future, PosteriorDraw::Sample, &mut rng)
                .unwrap();
        }
        let after: Vec<_> = buffer.iter().map(|(i, t)| (i, t.clone())).collect();
        prop_assert_eq!(&before, &after);
        let pairs = buffer.recent_pairs(window);
        let expected: Vec<_> = before
            .iter()
            .skip(before.len().saturating_sub(window))
            .map(|(i, t)| {
                let first = buffer.episode_range(*i).unwrap().start;
                (buffer.get(first).unwrap().goal.clone(), t.next_obs.clone())
            })
            .collect();
        prop_assert_eq!(pairs, expected);
        Ok(())
    });
}

/// Stored transitions read back unchanged, by index and through serde,
/// and eviction keeps the newest `capacity`.
pub fn buffer_round_trip(cases: u32) {
    let strategy = (any::<u64>(), 1usize..40, 1usize..12);
    run("buffer round trip", cases, strategy, |(seed, capacity, episodes)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = Prior::new_box(2).unwrap();
        let mut buffer = ReplayBuffer::new(capacity).unwrap();
        let mut all = Vec::new();
        for _ in 0..episodes {
            let goal = prior.sample(&mut rng);
            let len = rng.gen_range(1..6);
            let episode: Vec<Transition> = (0..len)
                .map(|t| Transition {
                    obs: vec![rng.gen(), rng.gen()],
                    action: vec![rng.gen_range(-1.0..1.0)],
                    next_obs: vec![rng.gen(), rng.gen()],
                    goal: goal.clone(),
                    done: t + 1 == len,
                })
                .collect();
            all.extend(episode.iter().cloned());
            buffer.store_episode(episode).unwrap();
        }
        prop_assert_eq!(buffer.total_stored(), all.len() as u64);
        prop_assert_eq!(buffer.len(), all.len().min(capacity));
        let range = buffer.index_range();
        prop_assert_eq!(range.end, all.len() as u64);
        for i in range {
            let t = buffer.get(i).unwrap();
            prop_assert_eq!(t, &all[i as usize]);
            let json = serde_json::to_string(t).unwrap();
            let back: Transition = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&back, t);
        }
        Ok(())
    });
}

const TINY_RUN: &str = r#"
[env]
kind = "windy"
horizon = 8
wind = [0.0, 5.0]

[posterior]
family = "adaptive_variance_gaussian"
goal_dim = 2
state_slice = [0, 1]

[agent]
hidden = [8]
batch_size = 8
relabel = "posterior"

[train]
total_env_steps = 48
warmup_env_steps = 16
episodes_per_iteration = 2
discriminator_steps_per_iteration = 2
discriminator_batch_size = 8
eval_interval = 16

[eval]
episodes = 2
"#;

/// Two full runs from the same seed agree bit for bit.
pub fn seeded_runs_are_deterministic(cases: u32) {
    let config = parse_config_str(TINY_RUN, Path::new("tiny.toml")).unwrap().config;
    run("seeded determinism", cases, any::<u64>(), |seed| {
        let mut a = Trainer::new(&config, seed).unwrap();
        let mut b = Trainer::new(&config, seed).unwrap();
        a.run().unwrap();
        b.run().unwrap();
        prop_assert_eq!(a.history(), b.history());
        prop_assert_eq!(
            serde_json::to_string(&a.checkpoint()).unwrap(),
            serde_json::to_string(&b.checkpoint()).unwrap()
        );
        Ok(())
    });
}

/// `(name, property, cases)` for every invariant suite.
#[allow(dead_code)]
pub const SUITES: &[(&str, fn(u32), u32)] = &[
    ("posterior normalization", posterior_normalization, 24),
    ("log-sigma clipping", log_sigma_clipping, 64),
    ("relabeled goals in prior support", relabeled_goals_in_support, 128),
    ("on-policy discriminator batches", discriminator_pairs_are_on_policy, 64),
    ("buffer round trip", buffer_round_trip, 128),
    ("seeded bit-determinism of full runs", seeded_runs_are_deterministic, 8),
];
