//! Evaluation: the objective `F = E[log q(z|s) - log p(z)]`, latent goal
//! reaching in state space and latent space, and discriminator accuracy.

mod analysis;
mod policies;
mod targets;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::posterior::{intrinsic_rewards, LatentGoal, Posterior, PosteriorSnapshot, Prior};
use crate::{Error, Result};

pub use analysis::{projection_recovery, singular_values, spearman, symmetric_eigenvalues, RecoveryReport};
pub use policies::{Greedy, HoldStill, Policy, ProportionalExpert, Stochastic, UniformRandom};
pub use targets::{masked_sq_distance, TargetStateSet};

/// One episode with a fixed goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub goal: LatentGoal,
    pub initial_obs: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    /// `s_1 .. s_T`.
    pub observations: Vec<Vec<f64>>,
}

impl Rollout {
    pub fn final_obs(&self) -> &[f64] {
        self.observations.last().map_or(&self.initial_obs, Vec::as_slice)
    }
}

/// Resets `env` and runs `policy` with `goal` for `steps` steps, or until
/// the episode ends when `steps` is `None`.
pub fn rollout<E: Environment + ?Sized>(
    env: &mut E,
    policy: &dyn Policy,
    goal: LatentGoal,
    steps: Option<usize>,
    rng: &mut dyn RngCore,
) -> Result<Rollout> {
    let initial_obs = env.reset();
    let limit = steps.unwrap_or(env.spec().horizon);
    let mut obs = initial_obs.clone();
    let mut actions = Vec::with_capacity(limit);
    let mut observations = Vec::with_capacity(limit);
    for _ in 0..limit {
        let a = policy.action(&obs, &goal, rng)?;
        let step = env.step(&a)?;
        actions.push(a);
        obs = step.observation;
        observations.push(obs.clone());
        if steps.is_none() && step.done {
            break;
        }
    }
    Ok(Rollout {
        goal,
        initial_obs,
        actions,
        observations,
    })
}

/// Rolls out `n` full episodes with goals drawn from `prior`.
pub fn collect_rollouts<E: Environment + ?Sized>(
    env: &mut E,
    policy: &dyn Policy,
    prior: &Prior,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Rollout>> {
    (0..n)
        .map(|_| {
            let z = prior.sample(rng);
            rollout(env, policy, z, None, rng)
        })
        .collect()
}

/// Monte-Carlo `F` over every `(z, s_t)` pair, `t >= 1`, of the rollouts.
pub fn estimate_objective(posterior: &Posterior, prior: &Prior, rollouts: &[Rollout]) -> Result<f64> {
    let mut goals = Vec::new();
    let mut states: Vec<&[f64]> = Vec::new();
    for r in rollouts {
        for s in &r.observations {
            goals.push(r.goal.clone());
            states.push(s);
        }
    }
    if goals.is_empty() {
        return Err(Error::InvalidArgument("no rollout states to estimate the objective".into()));
    }
    let rewards = intrinsic_rewards(posterior, prior, &goals, &states)?;
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// How a target observation is turned into a goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    /// Posterior expectation `E[z | s]`.
    #[default]
    Mean,
    /// Posterior mode `argmax_z q(z | s)`.
    Mode,
}

pub fn embed(posterior: &Posterior, obs: &[f64], embedding: Embedding) -> Result<LatentGoal> {
    match embedding {
        Embedding::Mean => posterior.mean(obs),
        Embedding::Mode => posterior.mode(obs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgrStateReport {
    /// Mean squared distance over the episodes that ran.
    pub mean_distance: f64,
    /// Per target, in input order; `None` for failed episodes.
    pub distances: Vec<Option<f64>>,
    pub failures: Vec<String>,
    pub mask: Vec<usize>,
    pub horizon: usize,
}

/// Goal reaching in state space: embed each target, roll the policy out
/// for `horizon` steps from a fresh reset, and average the masked squared
/// distance between target and final state.
pub fn lgr_state<E: Environment + ?Sized>(
    policy: &dyn Policy,
    posterior: &Posterior,
    env: &mut E,
    targets: &TargetStateSet,
    horizon: usize,
    embedding: Embedding,
    rng: &mut dyn RngCore,
) -> Result<LgrStateReport> {
    let spec = env.spec();
    let mask = targets.resolve_mask(spec.obs_dim, env.position_dims())?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("goal-reaching horizon must be >= 1".into()));
    }
    let mut distances = Vec::with_capacity(targets.len());
    let mut failures = Vec::new();
    for (i, target) in targets.targets.iter().enumerate() {
        let z = embed(posterior, target, embedding)?;
        match rollout(env, policy, z, Some(horizon), rng) {
            Ok(r) => distances.push(Some(masked_sq_distance(target, r.final_obs(), &mask))),
            Err(e) => {
                failures.push(format!("target {}: {e}", i + 1));
                distances.push(None);
            }
        }
    }
    let ok: Vec<f64> = distances.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "every goal-reaching episode failed: {}",
            failures.join("; ")
        )));
    }
    Ok(LgrStateReport {
        mean_distance: ok.iter().sum::<f64>() / ok.len() as f64,
        distances,
        failures,
        mask,
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgrLatentReport {
    /// Top-1 accuracy (discrete) or mean squared distance (continuous).
    pub value: f64,
    /// `(z, s_T)` per episode.
    pub pairs: Vec<(LatentGoal, Vec<f64>)>,
}

/// Goal reaching in latent space: `z ~ p(z)`, roll out, then compare `z`
/// with the posterior mode at the final state.
pub fn lgr_latent<E: Environment + ?Sized>(
    policy: &dyn Policy,
    posterior: &Posterior,
    prior: &Prior,
    env: &mut E,
    n_episodes: usize,
    horizon: Option<usize>,
    rng: &mut dyn RngCore,
) -> Result<LgrLatentReport> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("need at least one episode".into()));
    }
    let rollouts = (0..n_episodes)
        .map(|_| {
            let z = prior.sample(rng);
            rollout(env, policy, z, horizon, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    lgr_latent_from_rollouts(posterior, prior, &rollouts)
}

/// Latent goal reaching scored on rollouts that were already collected.
pub fn lgr_latent_from_rollouts(posterior: &Posterior, prior: &Prior, rollouts: &[Rollout]) -> Result<LgrLatentReport> {
    if rollouts.is_empty() {
        return Err(Error::InvalidArgument("need at least one episode".into()));
    }
    let n_episodes = rollouts.len();
    let pairs: Vec<(LatentGoal, Vec<f64>)> = rollouts.iter().map(|r| (r.goal.clone(), r.final_obs().to_vec())).collect();
    let finals: Vec<&[f64]> = pairs.iter().map(|(_, s)| s.as_slice()).collect();
    let modes: Vec<LatentGoal> = posterior.distributions(&finals)?.iter().map(|d| d.mode()).collect();
    let value = if prior.is_discrete() {
        let hits = pairs.iter().zip(&modes).filter(|((z, _), m)| z == *m).count();
        hits as f64 / n_episodes as f64
    } else {
        pairs
            .iter()
            .zip(&modes)
            .map(|((z, _), m)| {
                let (a, b) = (z.vector().expect("continuous"), m.vector().expect("continuous"));
                a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / n_episodes as f64
    };
    Ok(LgrLatentReport { value, pairs })
}

/// Fraction of labeled pairs whose posterior argmax equals the label.
pub fn disc_top1<S: AsRef<[f64]>>(posterior: &Posterior, pairs: &[(LatentGoal, S)]) -> Result<f64> {
    if !posterior.family().is_discrete() {
        return Err(Error::Unsupported {
            operation: "top-1 accuracy".into(),
            family: posterior.family().name().into(),
        });
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no labeled pairs".into()));
    }
    let mut hits = 0;
    for (z, s) in pairs {
        let logits = match posterior.distribution(s.as_ref())? {
            crate::posterior::Distribution::Categorical { logits } => logits,
            _ => unreachable!("discrete family"),
        };
        let best = logits
            .iter()
            .enumerate()
            .fold(0, |b, (i, &l)| if l > logits[b] { i } else { b });
        if z.index() == Some(best) {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub env_steps: u64,
    pub objective: f64,
    pub lgr_z: f64,
    pub lgr_s: Option<f64>,
    pub disc_top1: Option<f64>,
    pub posterior: PosteriorSnapshot,
}

/// CSV columns for a posterior layout. Depends only on the family and its
/// dimensions.
pub fn csv_columns(posterior: &Posterior) -> Vec<String> {
    let mut cols: Vec<String> = ["env_steps", "F", "lgr_z", "lgr_s", "disc_top1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if posterior.family().has_global_sigma() {
        cols.extend((0..posterior.goal_dim()).map(|i| format!("sigma_{i}")));
    }
    if let Some(a) = posterior.a_matrix() {
        for r in 0..a.rows() {
            cols.extend((0..a.cols()).map(|c| format!("a_{r}_{c}")));
        }
    }
    cols
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        let mut cells = vec![
            self.env_steps.to_string(),
            self.objective.to_string(),
            self.lgr_z.to_string(),
            opt(self.lgr_s),
            opt(self.disc_top1),
        ];
        if let Some(sigma) = &self.posterior.sigma {
            cells.extend(sigma.iter().map(f64::to_string));
        }
        if let Some(a) = &self.posterior.a_matrix {
            cells.extend(a.iter().flatten().map(f64::to_string));
        }
        cells.join(",")
    }
}
