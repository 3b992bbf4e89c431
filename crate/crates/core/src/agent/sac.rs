use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::buffer::SampledTransition;
use super::AgentConfig;
use crate::ndmath::{AdamConfig, AdamState, Mlp, MlpBinding, MlpSpec, Module, Param, Tape, Tensor, Var};
use crate::posterior::{intrinsic_rewards, LatentGoal, Posterior, Prior};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Network inputs for one update. Rows of `inputs` and `next_inputs` are
/// `[observation, encoded goal]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SacBatch {
    pub inputs: Tensor,
    pub actions: Tensor,
    pub next_inputs: Tensor,
    pub rewards: Vec<f64>,
}

/// Standard-normal draws for the reparameterized policy samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SacNoise {
    pub current: Tensor,
    pub next: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SacLosses {
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
    pub mean_q: f64,
    pub mean_reward: f64,
    /// Monte-Carlo policy entropy `-E[log pi]`.
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacOptimizers {
    pub actor: AdamState,
    pub critic: AdamState,
    pub alpha: AdamState,
    pub updates: u64,
}

/// Squashed-Gaussian policy and twin critics over `[s, z]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    config: AgentConfig,
    obs_dim: usize,
    action_dim: usize,
    goal_width: usize,
    target_entropy: f64,
    policy: Mlp,
    q1: Mlp,
    q2: Mlp,
    q1_target: Mlp,
    q2_target: Mlp,
    log_alpha: Param,
    opt: SacOptimizers,
}

struct PolicySample {
    action: Var,
    log_prob: Var,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(
        config: AgentConfig,
        obs_dim: usize,
        action_dim: usize,
        prior: &Prior,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if obs_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidArgument("observation and action dims must be >= 1".into()));
        }
        let goal_width = prior.encoding_dim();
        let input = obs_dim + goal_width;
        let spec = |i, o| MlpSpec::new(i, config.hidden.clone(), config.activation, o);
        let policy = Mlp::new("policy", spec(input, 2 * action_dim), rng)?;
        let q1 = Mlp::new("q1", spec(input + action_dim, 1), rng)?;
        let q2 = Mlp::new("q2", spec(input + action_dim, 1), rng)?;
        let mut q1_target = Mlp::new("q1_target", spec(input + action_dim, 1), rng)?;
        let mut q2_target = Mlp::new("q2_target", spec(input + action_dim, 1), rng)?;
        q1.polyak_into(&mut q1_target, 1.0);
        q2.polyak_into(&mut q2_target, 1.0);
        let log_alpha = Param::new("log_alpha", Tensor::scalar(config.init_alpha.max(f64::MIN_POSITIVE).ln()));
        let critic_params: Vec<&Param> = q1.params().into_iter().chain(q2.params()).collect();
        let opt = SacOptimizers {
            actor: AdamState::new(AdamConfig::with_lr(config.actor_lr), &policy.params()),
            critic: AdamState::new(AdamConfig::with_lr(config.critic_lr), &critic_params),
            alpha: AdamState::new(AdamConfig::with_lr(config.alpha_lr), &[&log_alpha]),
            updates: 0,
        };
        Ok(Self {
            target_entropy: config.target_entropy.unwrap_or(-(action_dim as f64)),
            config,
            obs_dim,
            action_dim,
            goal_width,
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            opt,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn updates(&self) -> u64 {
        self.opt.updates
    }

    /// Current entropy temperature.
    pub fn alpha(&self) -> f64 {
        if self.config.auto_temperature {
            self.log_alpha.value.item().exp()
        } else {
            self.config.init_alpha
        }
    }

    pub fn optimizers(&self) -> &SacOptimizers {
        &self.opt
    }

    pub fn restore_optimizers(&mut self, opt: SacOptimizers) {
        self.opt = opt;
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn critics(&self) -> [&Mlp; 2] {
        [&self.q1, &self.q2]
    }

    pub fn target_critics(&self) -> [&Mlp; 2] {
        [&self.q1_target, &self.q2_target]
    }

    /// Writes `[obs, encode(goal)]` into `out`.
    pub fn encode_input(&self, obs: &[f64], goal: &LatentGoal, out: &mut Vec<f64>) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::DimMismatch {
                context: "policy observation".into(),
                expected: self.obs_dim,
                actual: obs.len(),
            });
        }
        match goal {
            LatentGoal::Discrete(i) if *i >= self.goal_width => {
                return Err(Error::OutOfSupport {
                    goal: goal.to_string(),
                    support: format!("{} skills", self.goal_width),
                })
            }
            LatentGoal::Continuous(v) if v.len() != self.goal_width => {
                return Err(Error::DimMismatch {
                    context: "policy goal".into(),
                    expected: self.goal_width,
                    actual: v.len(),
                })
            }
            _ => {}
        }
        out.extend_from_slice(obs);
        goal.encode_into(self.goal_width, out);
        Ok(())
    }

    /// Samples an action in `[-1, 1]^action_dim`, or returns the squashed
    /// mean when `deterministic`.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        goal: &LatentGoal,
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.obs_dim + self.goal_width);
        self.encode_input(obs, goal, &mut x)?;
        let out = self.policy.predict(&Tensor::row(x))?;
        let a = self.action_dim;
        let row = out.data();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy output".into()));
        }
        Ok((0..a)
            .map(|j| {
                let mean = row[j];
                if deterministic {
                    mean.tanh()
                } else {
                    let std = row[a + j].clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
                    let e: f64 = StandardNormal.sample(rng);
                    (mean + std * e).tanh()
                }
            })
            .collect())
    }

    /// Assembles network inputs from sampled transitions and their rewards.
    pub fn make_batch(&self, samples: &[SampledTransition], rewards: Vec<f64>) -> Result<SacBatch> {
        if samples.is_empty() || samples.len() != rewards.len() {
            return Err(Error::InvalidArgument(format!(
                "batch of {} transitions with {} rewards",
                samples.len(),
                rewards.len()
            )));
        }
        let b = samples.len();
        let width = self.obs_dim + self.goal_width;
        let mut inputs = Vec::with_capacity(b * width);
        let mut next = Vec::with_capacity(b * width);
        let mut actions = Vec::with_capacity(b * self.action_dim);
        for s in samples {
            let t = &s.transition;
            self.encode_input(&t.obs, &t.goal, &mut inputs)?;
            self.encode_input(&t.next_obs, &t.goal, &mut next)?;
            if t.action.len() != self.action_dim {
                return Err(Error::DimMismatch {
                    context: "stored action".into(),
                    expected: self.action_dim,
                    actual: t.action.len(),
                });
            }
            actions.extend_from_slice(&t.action);
        }
        Ok(SacBatch {
            inputs: Tensor::matrix(b, width, inputs)?,
            actions: Tensor::matrix(b, self.action_dim, actions)?,
            next_inputs: Tensor::matrix(b, width, next)?,
            rewards,
        })
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> SacNoise {
        let mut draw = || {
            let data = (0..batch * self.action_dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
            Tensor::matrix(batch, self.action_dim, data).expect("sized")
        };
        SacNoise {
            current: draw(),
            next: draw(),
        }
    }

    /// Reparameterized `tanh(mean + std * eps)` and its log-density.
    fn policy_sample(&self, tape: &mut Tape, binding: &MlpBinding, x: Var, eps: Var) -> Result<PolicySample> {
        let a = self.action_dim;
        let out = self.policy.forward(tape, binding, x)?;
        let mean = tape.slice_cols(out, 0, a)?;
        let raw = tape.slice_cols(out, a, 2 * a)?;
        let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(log_std);
        let noise = tape.mul(std, eps)?;
        let u = tape.add(mean, noise)?;
        let action = tape.tanh(u);

        let e2 = tape.square(eps);
        let half = tape.scale(e2, -0.5);
        let gauss = tape.sub(half, log_std)?;
        // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
        let m2u = tape.scale(u, -2.0);
        let sp = tape.softplus(m2u);
        let usp = tape.add(u, sp)?;
        let scaled = tape.scale(usp, -2.0);
        let log_jac = tape.add_scalar(scaled, 2.0 * std::f64::consts::LN_2);
        let per_dim = tape.sub(gauss, log_jac)?;
        let summed = tape.sum_cols(per_dim);
        let log_prob = tape.add_scalar(summed, -(a as f64) * HALF_LN_2PI);
        Ok(PolicySample { action, log_prob })
    }

    fn twin_q(
        &self,
        tape: &mut Tape,
        nets: [&Mlp; 2],
        trainable: bool,
        x: Var,
        action: Var,
    ) -> Result<([Var; 2], [MlpBinding; 2])> {
        let input = tape.concat(&[x, action])?;
        let b1 = nets[0].bind(tape, trainable)?;
        let b2 = nets[1].bind(tape, trainable)?;
        let v1 = nets[0].forward(tape, &b1, input)?;
        let v2 = nets[1].forward(tape, &b2, input)?;
        Ok(([v1, v2], [b1, b2]))
    }

    /// Soft Bellman targets `r + gamma * (min Q_target(s', a') - alpha log pi(a'|s'))`.
    /// Episodes end only by time limit, so every target bootstraps.
    pub fn td_targets(&self, batch: &SacBatch, noise: &SacNoise) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.next_inputs.clone())?;
        let eps = tape.constant(noise.next.clone())?;
        let pb = self.policy.bind(&mut tape, false)?;
        let next = self.policy_sample(&mut tape, &pb, x, eps)?;
        let ([t1, t2], _) = self.twin_q(&mut tape, [&self.q1_target, &self.q2_target], false, x, next.action)?;
        let qmin = tape.min(t1, t2)?;
        let alpha = self.alpha();
        let gamma = self.config.gamma;
        let q = tape.value(qmin).data();
        let lp = tape.value(next.log_prob).data();
        Ok(batch
            .rewards
            .iter()
            .zip(q.iter().zip(lp))
            .map(|(r, (q, lp))| r + gamma * (q - alpha * lp))
            .collect())
    }

    /// `0.5 * (mse(Q1, y) + mse(Q2, y))` as a graph over the online critics.
    fn critic_graph(&self, tape: &mut Tape, batch: &SacBatch, targets: &[f64]) -> Result<(Var, Var, [MlpBinding; 2])> {
        let x = tape.constant(batch.inputs.clone())?;
        let a = tape.constant(batch.actions.clone())?;
        let ([v1, v2], bindings) = self.twin_q(tape, [&self.q1, &self.q2], true, x, a)?;
        let y = tape.constant(Tensor::column(targets.to_vec()))?;
        let d1 = tape.sub(v1, y)?;
        let d2 = tape.sub(v2, y)?;
        let s1 = tape.square(d1);
        let s2 = tape.square(d2);
        let m1 = tape.mean(s1);
        let m2 = tape.mean(s2);
        let total = tape.add(m1, m2)?;
        Ok((tape.scale(total, 0.5), v1, bindings))
    }

    /// `mean(alpha * log pi(a|s) - min Q(s, a))` with `a` reparameterized.
    fn actor_graph(&self, tape: &mut Tape, batch: &SacBatch, noise: &SacNoise) -> Result<(Var, Var, MlpBinding)> {
        let x = tape.constant(batch.inputs.clone())?;
        let eps = tape.constant(noise.current.clone())?;
        let pb = self.policy.bind(tape, true)?;
        let sample = self.policy_sample(tape, &pb, x, eps)?;
        let ([v1, v2], _) = self.twin_q(tape, [&self.q1, &self.q2], false, x, sample.action)?;
        let qmin = tape.min(v1, v2)?;
        let weighted = tape.scale(sample.log_prob, self.alpha());
        let diff = tape.sub(weighted, qmin)?;
        Ok((tape.mean(diff), sample.log_prob, pb))
    }

    pub fn critic_loss(&self, batch: &SacBatch, targets: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, _, _) = self.critic_graph(&mut tape, batch, targets)?;
        Ok(tape.value(loss).item())
    }

    pub fn actor_loss(&self, batch: &SacBatch, noise: &SacNoise) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, _, _) = self.actor_graph(&mut tape, batch, noise)?;
        Ok(tape.value(loss).item())
    }

    /// Critic-loss gradients for `[q1 params.., q2 params..]` and
    /// actor-loss gradients for the policy params, without updating.
    pub fn loss_gradients(
        &self,
        batch: &SacBatch,
        targets: &[f64],
        noise: &SacNoise,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut scratch = self.clone();
        scratch.q1.zero_grad();
        scratch.q2.zero_grad();
        scratch.policy.zero_grad();
        scratch.critic_backward(batch, targets)?;
        scratch.actor_backward(batch, noise)?;
        let collect = |ps: Vec<&Param>| {
            ps.iter()
                .map(|p| p.value.grad().map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec))
                .collect::<Vec<_>>()
        };
        let critic = collect(scratch.q1.params().into_iter().chain(scratch.q2.params()).collect());
        Ok((critic, collect(scratch.policy.params())))
    }

    fn critic_backward(&mut self, batch: &SacBatch, targets: &[f64]) -> Result<(f64, f64)> {
        let mut tape = Tape::new();
        let (loss, q1v, [b1, b2]) = self.critic_graph(&mut tape, batch, targets)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite("critic loss".into()));
        }
        let mean_q = tape.value(q1v).data().iter().sum::<f64>() / batch.rewards.len() as f64;
        let grads = tape.backward(loss)?;
        self.q1.accumulate_grads(&grads, &b1)?;
        self.q2.accumulate_grads(&grads, &b2)?;
        Ok((value, mean_q))
    }

    fn actor_backward(&mut self, batch: &SacBatch, noise: &SacNoise) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let (loss, log_prob, pb) = self.actor_graph(&mut tape, batch, noise)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite("actor loss".into()));
        }
        let lp = tape.value(log_prob).data().to_vec();
        let grads = tape.backward(loss)?;
        self.policy.accumulate_grads(&grads, &pb)?;
        Ok((value, lp))
    }

    /// One critic, actor and temperature step followed by a Polyak update
    /// of the target critics.
    pub fn update(&mut self, batch: &SacBatch, noise: &SacNoise) -> Result<SacLosses> {
        let targets = self.td_targets(batch, noise)?;

        self.q1.zero_grad();
        self.q2.zero_grad();
        let (critic, mean_q) = self.critic_backward(batch, &targets)?;
        {
            let mut params = self.q1.params_mut();
            params.extend(self.q2.params_mut());
            self.opt.critic.step(&mut params)?;
        }

        self.policy.zero_grad();
        let (actor, log_probs) = self.actor_backward(batch, noise)?;
        self.opt.actor.step(&mut self.policy.params_mut())?;

        let mean_lp = log_probs.iter().sum::<f64>() / log_probs.len() as f64;
        let mut alpha_loss = 0.0;
        if self.config.auto_temperature {
            let la = self.log_alpha.value.item();
            alpha_loss = -la * (mean_lp + self.target_entropy);
            self.log_alpha.value.zero_grad();
            self.log_alpha.value.accumulate_grad(&[-(mean_lp + self.target_entropy)])?;
            self.opt.alpha.step(&mut [&mut self.log_alpha])?;
        }

        let tau = self.config.tau;
        self.q1.polyak_into(&mut self.q1_target, tau);
        self.q2.polyak_into(&mut self.q2_target, tau);
        self.opt.updates += 1;

        Ok(SacLosses {
            critic,
            actor,
            alpha: alpha_loss,
            mean_q,
            mean_reward: batch.rewards.iter().sum::<f64>() / batch.rewards.len() as f64,
            entropy: -mean_lp,
        })
    }

    /// Recomputes `log q(z|s') - log p(z)` with the current posterior for
    /// every (possibly relabeled) transition, then updates.
    pub fn sac_update<R: Rng + ?Sized>(
        &mut self,
        posterior: &Posterior,
        prior: &Prior,
        samples: &[SampledTransition],
        rng: &mut R,
    ) -> Result<SacLosses> {
        let goals: Vec<LatentGoal> = samples.iter().map(|s| s.transition.goal.clone()).collect();
        let next: Vec<&[f64]> = samples.iter().map(|s| s.transition.next_obs.as_slice()).collect();
        let rewards = intrinsic_rewards(posterior, prior, &goals, &next)?;
        let batch = self.make_batch(samples, rewards)?;
        let noise = self.sample_noise(samples.len(), rng);
        self.update(&batch, &noise)
    }
}

impl Module for SacAgent {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.policy.params();
        for net in [&self.q1, &self.q2, &self.q1_target, &self.q2_target] {
            out.extend(net.params());
        }
        out.push(&self.log_alpha);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.policy.params_mut();
        for net in [&mut self.q1, &mut self.q2, &mut self.q1_target, &mut self.q2_target] {
            out.extend(net.params_mut());
        }
        out.push(&mut self.log_alpha);
        out
    }
}
