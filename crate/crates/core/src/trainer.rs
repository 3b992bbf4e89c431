//! The alternating loop: collect episodes with `z ~ p(z)`, fit the
//! discriminator on the newest on-policy pairs, then run SAC updates on
//! relabeled batches whose rewards come from the freshly fitted posterior.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{goal_relabel_her, pher_relabel, RelabelKind, ReplayBuffer, SacAgent, SacLosses, SacOptimizers, Transition};
use crate::config::ExperimentConfig;
use crate::envs::{Env, Environment};
use crate::metrics::{
    collect_rollouts, disc_top1, estimate_objective, lgr_latent_from_rollouts, lgr_state, Embedding, Greedy,
    MetricsRecord, Policy, Stochastic, TargetStateSet, UniformRandom,
};
use crate::ndmath::checkpoint::{load_into, to_param_map, ParamMap};
use crate::ndmath::{AdamState, Module};
use crate::posterior::{Posterior, Prior};
use crate::{Error, Result};

mod defaults {
    pub fn total_env_steps() -> u64 {
        100_000
    }
    pub fn episodes_per_iteration() -> usize {
        4
    }
    pub fn discriminator_steps() -> usize {
        32
    }
    pub fn discriminator_batch() -> usize {
        256
    }
    pub fn discriminator_window() -> usize {
        2048
    }
    pub fn updates_per_step() -> f64 {
        1.0
    }
    pub fn eval_interval() -> u64 {
        10_000
    }
    pub fn seeds() -> Vec<u64> {
        vec![0]
    }
    pub fn eval_episodes() -> usize {
        256
    }
    pub fn yes() -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::total_env_steps")]
    pub total_env_steps: u64,
    #[serde(default = "defaults::episodes_per_iteration")]
    pub episodes_per_iteration: usize,
    #[serde(default = "defaults::discriminator_steps")]
    pub discriminator_steps_per_iteration: usize,
    #[serde(default = "defaults::discriminator_batch")]
    pub discriminator_batch_size: usize,
    /// Discriminator minibatches come from this many newest `(z, s)` pairs.
    #[serde(default = "defaults::discriminator_window")]
    pub discriminator_window: usize,
    /// May be fractional; leftovers carry over between iterations.
    #[serde(default = "defaults::updates_per_step")]
    pub agent_updates_per_env_step: f64,
    /// Initial env steps collected with uniform random actions and no
    /// agent updates.
    #[serde(default)]
    pub warmup_env_steps: u64,
    #[serde(default = "defaults::eval_interval")]
    pub eval_interval: u64,
    /// Defaults to `eval_interval`.
    #[serde(default)]
    pub checkpoint_interval: Option<u64>,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        toml::from_str("").expect("all train fields have defaults")
    }
}

impl TrainConfig {
    /// `steps_per_iteration` is `episodes_per_iteration * horizon`.
    pub fn validate(&self, steps_per_iteration: usize) -> Result<()> {
        let positive = [
            ("train.total_env_steps", self.total_env_steps as f64),
            ("train.episodes_per_iteration", self.episodes_per_iteration as f64),
            ("train.discriminator_batch_size", self.discriminator_batch_size as f64),
            ("train.discriminator_window", self.discriminator_window as f64),
            ("train.agent_updates_per_env_step", self.agent_updates_per_env_step),
            ("train.eval_interval", self.eval_interval as f64),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        let per_iter = steps_per_iteration as u64;
        if !self.eval_interval.is_multiple_of(per_iter) {
            return Err(Error::config(
                "train.eval_interval",
                format!("must be a multiple of the {per_iter} env steps per iteration"),
            ));
        }
        if let Some(c) = self.checkpoint_interval {
            if c == 0 || !c.is_multiple_of(self.eval_interval) {
                return Err(Error::config("train.checkpoint_interval", "must be a positive multiple of eval_interval"));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::config("train.seeds", "need at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("train.seeds", "seeds must be distinct"));
        }
        Ok(())
    }

    pub fn checkpoint_interval(&self) -> u64 {
        self.checkpoint_interval.unwrap_or(self.eval_interval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Episodes per evaluation for the objective and latent reaching.
    #[serde(default = "defaults::eval_episodes")]
    pub episodes: usize,
    /// Evaluate the policy mean instead of sampling.
    #[serde(default = "defaults::yes")]
    pub deterministic: bool,
    /// Random at-rest targets for state-space goal reaching; 0 disables it.
    #[serde(default)]
    pub lgr_state_targets: usize,
    /// Steps per goal-reaching episode; defaults to the env horizon.
    #[serde(default)]
    pub lgr_state_horizon: Option<usize>,
    #[serde(default)]
    pub embedding: Embedding,
    /// Observation indices for goal-reaching distances; positions by default.
    #[serde(default)]
    pub mask: Option<Vec<usize>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        toml::from_str("").expect("all eval fields have defaults")
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("eval.episodes", "must be >= 1"));
        }
        if self.lgr_state_horizon == Some(0) {
            return Err(Error::config("eval.lgr_state_horizon", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-iteration bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    pub env_steps: u64,
    pub discriminator_loss: Option<f64>,
    pub agent_updates: usize,
    pub relabeled: usize,
    pub last_losses: Option<SacLosses>,
}

pub enum TrainEvent<'a> {
    Iteration(&'a IterationStats),
    Evaluated(&'a MetricsRecord),
    CheckpointDue,
}

/// Serializable training state. The replay buffer is not included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub env_steps: u64,
    pub iteration: u64,
    pub evaluations: u64,
    pub updates_owed: f64,
    pub params: ParamMap,
    pub posterior_optimizer: Option<AdamState>,
    pub agent_optimizers: SacOptimizers,
    pub rng: ChaCha8Rng,
    pub history: Vec<MetricsRecord>,
}

pub const CHECKPOINT_FORMAT: &str = "vgcrl-checkpoint-1";

/// Independent deterministic streams derived from a run seed.
pub(crate) mod streams {
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const ENV: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const TARGETS: u64 = 5;
    pub const REACH: u64 = 6;

    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    }

    pub fn sub_seed(seed: u64, stream: u64) -> u64 {
        rng(seed, stream).next_u64()
    }
}

pub struct Trainer {
    config: ExperimentConfig,
    seed: u64,
    env: Env,
    prior: Prior,
    posterior: Posterior,
    agent: SacAgent,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: u64,
    iteration: u64,
    evaluations: u64,
    updates_owed: f64,
    history: Vec<MetricsRecord>,
    lgr_targets: Option<TargetStateSet>,
}

impl Trainer {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let env = config.env.build(seed, streams::sub_seed(seed, streams::ENV))?;
        let spec = env.spec();
        let mut init = streams::rng(seed, streams::INIT);
        let posterior = Posterior::new(config.posterior.clone(), spec.obs_dim, &mut init)?;
        let prior = posterior.prior()?;
        let agent = SacAgent::new(config.agent.clone(), spec.obs_dim, spec.action_dim, &prior, &mut init)?;
        let buffer = ReplayBuffer::new(config.agent.buffer_capacity)?;
        let lgr_targets = Self::make_targets(config, &env, seed)?;
        Ok(Self {
            config: config.clone(),
            seed,
            env,
            prior,
            posterior,
            agent,
            buffer,
            rng: streams::rng(seed, streams::TRAIN),
            env_steps: 0,
            iteration: 0,
            evaluations: 0,
            updates_owed: 0.0,
            history: Vec::new(),
            lgr_targets,
        })
    }

    /// At-rest targets with positions uniform in `[-1, 1]`.
    fn make_targets(config: &ExperimentConfig, env: &Env, seed: u64) -> Result<Option<TargetStateSet>> {
        let n = config.eval.lgr_state_targets;
        if n == 0 {
            return Ok(None);
        }
        let mut rng = streams::rng(seed, streams::TARGETS);
        let dims = env.state().positions.len();
        let targets = (0..n)
            .map(|_| {
                let p: Vec<f64> = (0..dims).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                env.observation_at_rest(&p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(TargetStateSet::new(targets, config.eval.mask.clone())?))
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn agent(&self) -> &SacAgent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// A fresh environment for standalone goal-reaching evaluation. Its
    /// episode sequence depends only on the run seed.
    pub fn goal_reaching_env(&self) -> Result<Env> {
        self.config.env.build(self.seed, streams::sub_seed(self.seed, streams::REACH))
    }

    pub fn history(&self) -> &[MetricsRecord] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.config.train.total_env_steps
    }

    fn collect_episode(&mut self) -> Result<usize> {
        let goal = self.prior.sample(&mut self.rng);
        let warm = self.env_steps < self.config.train.warmup_env_steps;
        let random = UniformRandom {
            action_dim: self.agent.action_dim(),
        };
        let stochastic = Stochastic(&self.agent);
        let policy: &dyn Policy = if warm { &random } else { &stochastic };
        let mut obs = self.env.reset();
        let mut episode = Vec::with_capacity(self.env.spec().horizon);
        loop {
            let action = policy.action(&obs, &goal, &mut self.rng)?;
            let step = self.env.step(&action)?;
            let action = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
            episode.push(Transition {
                obs: std::mem::replace(&mut obs, step.observation.clone()),
                action,
                next_obs: step.observation,
                goal: goal.clone(),
                done: step.done,
            });
            if step.done {
                break;
            }
        }
        let n = episode.len();
        self.buffer.store_episode(episode)?;
        self.env_steps += n as u64;
        Ok(n)
    }

    fn fit_discriminator(&mut self) -> Result<Option<f64>> {
        let steps = self.config.train.discriminator_steps_per_iteration;
        if steps == 0 {
            return Ok(None);
        }
        let window = self.buffer.recent_pairs(self.config.train.discriminator_window);
        let batch = self.config.train.discriminator_batch_size;
        let mut total = 0.0;
        for _ in 0..steps {
            let pairs: Vec<_> = (0..batch)
                .map(|_| window[self.rng.gen_range(0..window.len())].clone())
                .collect();
            total += self.posterior.fit_discriminator_step(&pairs)?;
        }
        Ok(Some(total / steps as f64))
    }

    fn agent_updates(&mut self, new_steps: usize) -> Result<(usize, usize, Option<SacLosses>)> {
        if self.env_steps < self.config.train.warmup_env_steps {
            return Ok((0, 0, None));
        }
        self.updates_owed += self.config.train.agent_updates_per_env_step * new_steps as f64;
        let n = self.updates_owed.floor() as usize;
        self.updates_owed -= n as f64;
        let cfg = self.config.agent.clone();
        let mut relabeled = 0;
        let mut last = None;
        for _ in 0..n {
            let mut batch = self.buffer.sample(cfg.batch_size, &mut self.rng)?;
            relabeled += match cfg.relabel {
                RelabelKind::None => 0,
                RelabelKind::Posterior => pher_relabel(
                    &self.buffer,
                    &self.posterior,
                    &self.prior,
                    &mut batch,
                    cfg.relabel_fraction,
                    cfg.relabel_strategy,
                    cfg.relabel_draw,
                    &mut self.rng,
                )?,
                RelabelKind::State => goal_relabel_her(
                    &self.buffer,
                    self.posterior.state_slice(),
                    &self.prior,
                    &mut batch,
                    cfg.relabel_fraction,
                    cfg.relabel_strategy,
                    &mut self.rng,
                )?,
            };
            last = Some(self.agent.sac_update(&self.posterior, &self.prior, &batch, &mut self.rng)?);
        }
        Ok((n, relabeled, last))
    }

    /// Collect, fit the discriminator, then update the agent.
    pub fn run_iteration(&mut self) -> Result<IterationStats> {
        let iteration = self.iteration;
        let wrap = |e: Error| Error::Iteration {
            iteration,
            source: Box::new(e),
        };
        let mut collected = 0;
        for _ in 0..self.config.train.episodes_per_iteration {
            collected += self.collect_episode().map_err(wrap)?;
        }
        let discriminator_loss = self.fit_discriminator().map_err(wrap)?;
        let (agent_updates, relabeled, last_losses) = self.agent_updates(collected).map_err(wrap)?;
        self.iteration += 1;
        Ok(IterationStats {
            iteration,
            env_steps: self.env_steps,
            discriminator_loss,
            agent_updates,
            relabeled,
            last_losses,
        })
    }

    /// Scores the current policy and posterior on a fresh evaluation env.
    /// Uses its own RNG streams, so it never perturbs training.
    pub fn evaluate(&self) -> Result<MetricsRecord> {
        self.evaluate_with(self.evaluations)
    }

    fn evaluate_with(&self, index: u64) -> Result<MetricsRecord> {
        let eval_seed = streams::sub_seed(self.seed, streams::EVAL).wrapping_add(index);
        let mut rng = streams::rng(eval_seed, streams::EVAL);
        let mut env = self.config.env.build(self.seed, eval_seed)?;
        let greedy = Greedy(&self.agent);
        let stochastic = Stochastic(&self.agent);
        let policy: &dyn Policy = if self.config.eval.deterministic { &greedy } else { &stochastic };
        let rollouts = collect_rollouts(&mut env, policy, &self.prior, self.config.eval.episodes, &mut rng)?;
        let objective = estimate_objective(&self.posterior, &self.prior, &rollouts)?;
        let lgr_z = lgr_latent_from_rollouts(&self.posterior, &self.prior, &rollouts)?.value;
        let disc = if self.prior.is_discrete() {
            let pairs: Vec<_> = rollouts
                .iter()
                .flat_map(|r| r.observations.iter().map(|s| (r.goal.clone(), s.as_slice())))
                .collect();
            Some(disc_top1(&self.posterior, &pairs)?)
        } else {
            None
        };
        let lgr_s = match &self.lgr_targets {
            Some(targets) => {
                let horizon = self.config.eval.lgr_state_horizon.unwrap_or(self.config.env.horizon);
                let report = lgr_state(
                    policy,
                    &self.posterior,
                    &mut env,
                    targets,
                    horizon,
                    self.config.eval.embedding,
                    &mut rng,
                )?;
                Some(report.mean_distance)
            }
            None => None,
        };
        Ok(MetricsRecord {
            env_steps: self.env_steps,
            objective,
            lgr_z,
            lgr_s,
            disc_top1: disc,
            posterior: self.posterior.describe(),
        })
    }

    /// Runs iterations until the budget (or `stop_at` env steps) is reached,
    /// evaluating every `eval_interval` steps and at the end.
    pub fn run_until(
        &mut self,
        stop_at: Option<u64>,
        mut on_event: impl FnMut(&Trainer, TrainEvent<'_>) -> Result<()>,
    ) -> Result<()> {
        let total = self.config.train.total_env_steps;
        let limit = stop_at.map_or(total, |s| s.min(total));
        let eval_every = self.config.train.eval_interval;
        let ckpt_every = self.config.train.checkpoint_interval();
        while self.env_steps < limit {
            let before = self.env_steps;
            let stats = self.run_iteration()?;
            on_event(self, TrainEvent::Iteration(&stats))?;
            let crossed = |every: u64| before / every != self.env_steps / every;
            let finished = self.env_steps >= total;
            if crossed(eval_every) || finished {
                let record = self.evaluate()?;
                self.evaluations += 1;
                self.history.push(record);
                on_event(self, TrainEvent::Evaluated(self.history.last().expect("pushed")))?;
            }
            if crossed(ckpt_every) || finished {
                on_event(self, TrainEvent::CheckpointDue)?;
            }
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<&[MetricsRecord]> {
        self.run_until(None, |_, _| Ok(()))?;
        Ok(&self.history)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let params = to_param_map(self.posterior.params().into_iter().chain(self.agent.params()));
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            seed: self.seed,
            env_steps: self.env_steps,
            iteration: self.iteration,
            evaluations: self.evaluations,
            updates_owed: self.updates_owed,
            params,
            posterior_optimizer: self.posterior.optimizer().cloned(),
            agent_optimizers: self.agent.optimizers().clone(),
            rng: self.rng.clone(),
            history: self.history.clone(),
        }
    }

    /// Restores parameters, optimizers, counters and RNG. The replay buffer
    /// starts empty and the environment is reseeded from the iteration
    /// count, so a resumed run continues with matching step counters but
    /// is not bit-identical to an uninterrupted one.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown checkpoint format {:?}", ckpt.format)));
        }
        let mut t = Self::new(&ckpt.config, ckpt.seed)?;
        t.load_params(&ckpt.params)?;
        if let Some(opt) = ckpt.posterior_optimizer {
            t.posterior.set_optimizer(opt);
        }
        t.agent.restore_optimizers(ckpt.agent_optimizers);
        t.env = ckpt.config.env.build(
            ckpt.seed,
            streams::sub_seed(ckpt.seed, streams::ENV).wrapping_add(ckpt.iteration),
        )?;
        t.rng = ckpt.rng;
        t.env_steps = ckpt.env_steps;
        t.iteration = ckpt.iteration;
        t.evaluations = ckpt.evaluations;
        t.updates_owed = ckpt.updates_owed;
        t.history = ckpt.history;
        Ok(t)
    }

    /// Loads posterior and agent parameters by name.
    pub fn load_params(&mut self, params: &ParamMap) -> Result<()> {
        load_into(params, self.posterior.params_mut())?;
        load_into(params, self.agent.params_mut())?;
        self.posterior.after_update()?;
        Ok(())
    }

    pub fn write_checkpoint(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(&self.checkpoint()).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: &std::path::Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests;
