//! Variational posteriors `q(z | s)`, priors `p(z)` and the intrinsic reward
//! `log q(z | s) - log p(z)`.
//!
//! Every family exposes the same queries (density, sampling, mode, mean) via
//! a per-observation [`Distribution`], and a batched differentiable density
//! used for maximum-likelihood fitting.
//!
//! | family                       | mean `mu(s)`  | scale            | trained      |
//! |------------------------------|---------------|------------------|--------------|
//! | `fixed_identity_gaussian`    | `s`           | `sigma_fixed`    | nothing      |
//! | `adaptive_variance_gaussian` | `s`           | global diagonal  | `log sigma`  |
//! | `linear_gaussian`            | `A s`         | `sigma_fixed`    | `A`          |
//! | `mlp_gaussian`               | MLP head      | MLP head         | MLP          |
//! | `categorical`                | softmax logits of an MLP       || MLP          |
//! | `gmm`                        | `K` MLP heads | MLP heads        | MLP          |
//!
//! Continuous families may be squashed by `tanh` so that the density lives
//! on `(-1, 1)^d`; the change of variables contributes
//! `-sum_i log(1 - z_i^2)`.

mod dist;
mod prior;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ndmath::{Activation, AdamConfig, AdamState, Mlp, MlpBinding, MlpSpec, Module, Param, Tape, Tensor, Var};
use crate::{Error, Result};

pub use dist::{Distribution, SQUASH_EPS};
pub use prior::{LatentGoal, Prior};

use dist::{unsquash, HALF_LN_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorFamily {
    FixedIdentityGaussian,
    AdaptiveVarianceGaussian,
    LinearGaussian,
    MlpGaussian,
    Categorical,
    Gmm,
}

impl PosteriorFamily {
    pub fn name(self) -> &'static str {
        match self {
            PosteriorFamily::FixedIdentityGaussian => "fixed_identity_gaussian",
            PosteriorFamily::AdaptiveVarianceGaussian => "adaptive_variance_gaussian",
            PosteriorFamily::LinearGaussian => "linear_gaussian",
            PosteriorFamily::MlpGaussian => "mlp_gaussian",
            PosteriorFamily::Categorical => "categorical",
            PosteriorFamily::Gmm => "gmm",
        }
    }

    pub fn is_discrete(self) -> bool {
        self == PosteriorFamily::Categorical
    }

    pub fn uses_mlp(self) -> bool {
        matches!(
            self,
            PosteriorFamily::MlpGaussian | PosteriorFamily::Categorical | PosteriorFamily::Gmm
        )
    }

    /// Families whose scale is a plain per-dimension vector.
    pub fn has_global_sigma(self) -> bool {
        matches!(
            self,
            PosteriorFamily::FixedIdentityGaussian
                | PosteriorFamily::AdaptiveVarianceGaussian
                | PosteriorFamily::LinearGaussian
        )
    }

    /// The learned-network families squash by default; the GCRL-style
    /// families keep an unbounded Gaussian.
    pub fn default_squash(self) -> bool {
        matches!(self, PosteriorFamily::MlpGaussian | PosteriorFamily::Gmm)
    }

    pub fn prior(self, goal_dim: usize) -> Result<Prior> {
        if self.is_discrete() {
            Prior::new_categorical(goal_dim)
        } else {
            Prior::new_box(goal_dim)
        }
    }
}

mod defaults {
    pub fn goal_dim() -> usize {
        2
    }
    pub fn sigma_fixed() -> f64 {
        1.0
    }
    pub fn log_sigma_clip() -> [f64; 2] {
        [0.3f64.ln(), 10f64.ln()]
    }
    pub fn gmm_components() -> usize {
        8
    }
    pub fn hidden() -> Vec<usize> {
        vec![256, 256]
    }
    pub fn learning_rate() -> f64 {
        3e-4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorConfig {
    pub family: PosteriorFamily,
    /// Number of skills (categorical) or goal-vector dimension.
    #[serde(default = "defaults::goal_dim")]
    pub goal_dim: usize,
    #[serde(default = "defaults::sigma_fixed")]
    pub sigma_fixed: f64,
    #[serde(default = "defaults::log_sigma_clip")]
    pub log_sigma_clip: [f64; 2],
    #[serde(default = "defaults::gmm_components")]
    pub gmm_components: usize,
    /// Lipschitz coefficient of spectrally normalized layers.
    #[serde(default)]
    pub spectral_norm: Option<f64>,
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Observation indices fed to the posterior; all by default.
    #[serde(default)]
    pub state_slice: Option<Vec<usize>>,
    /// Overrides [`PosteriorFamily::default_squash`].
    #[serde(default)]
    pub squash: Option<bool>,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Initial `log sigma` of the adaptive-variance family.
    #[serde(default)]
    pub init_log_sigma: f64,
}

impl PosteriorConfig {
    pub fn new(family: PosteriorFamily, goal_dim: usize) -> Self {
        Self {
            family,
            goal_dim,
            sigma_fixed: defaults::sigma_fixed(),
            log_sigma_clip: defaults::log_sigma_clip(),
            gmm_components: defaults::gmm_components(),
            spectral_norm: None,
            hidden: defaults::hidden(),
            activation: Activation::Relu,
            state_slice: None,
            squash: None,
            learning_rate: defaults::learning_rate(),
            init_log_sigma: 0.0,
        }
    }

    pub fn squash(&self) -> bool {
        !self.family.is_discrete() && self.squash.unwrap_or_else(|| self.family.default_squash())
    }

    pub fn validate(&self, obs_dim: usize) -> Result<()> {
        if self.goal_dim == 0 {
            return Err(Error::config("posterior.goal_dim", "must be >= 1"));
        }
        if !(self.sigma_fixed > 0.0) {
            return Err(Error::config("posterior.sigma_fixed", "must be > 0"));
        }
        let [lo, hi] = self.log_sigma_clip;
        if !(lo < hi) {
            return Err(Error::config("posterior.log_sigma_clip", "need lo < hi"));
        }
        if self.gmm_components == 0 {
            return Err(Error::config("posterior.gmm_components", "must be >= 1"));
        }
        if let Some(c) = self.spectral_norm {
            if !(c > 0.0) {
                return Err(Error::config("posterior.spectral_norm", "coefficient must be > 0"));
            }
            if !self.family.uses_mlp() {
                return Err(Error::config(
                    "posterior.spectral_norm",
                    format!("{} has no network to normalize", self.family.name()),
                ));
            }
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::config("posterior.learning_rate", "must be >= 0"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("posterior.hidden", "hidden sizes must be >= 1"));
        }
        let input = match &self.state_slice {
            Some(slice) => {
                if slice.is_empty() || slice.iter().any(|&i| i >= obs_dim) {
                    return Err(Error::config(
                        "posterior.state_slice",
                        format!("indices must be in 0..{obs_dim} and nonempty"),
                    ));
                }
                slice.len()
            }
            None => obs_dim,
        };
        if matches!(
            self.family,
            PosteriorFamily::FixedIdentityGaussian | PosteriorFamily::AdaptiveVarianceGaussian
        ) && input != self.goal_dim
        {
            return Err(Error::config(
                "posterior.state_slice",
                format!(
                    "{} needs the posterior input ({input} dims) to match goal_dim {}",
                    self.family.name(),
                    self.goal_dim
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    FixedIdentity,
    Adaptive { log_sigma: Param },
    Linear { a: Param },
    Gaussian { net: Mlp },
    Categorical { net: Mlp },
    Mixture { net: Mlp },
}

enum Bound {
    Nothing,
    Leaf(Var),
    Net(MlpBinding),
}

/// Read-only diagnostic view of the learned quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub family: PosteriorFamily,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_sigmas: Option<Vec<f64>>,
}

/// A posterior family instance bound to an observation space.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    config: PosteriorConfig,
    obs_dim: usize,
    slice: Vec<usize>,
    squash: bool,
    model: Model,
    optimizer: Option<AdamState>,
}

impl Posterior {
    pub fn new<R: Rng + ?Sized>(config: PosteriorConfig, obs_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate(obs_dim)?;
        let slice = config.state_slice.clone().unwrap_or_else(|| (0..obs_dim).collect());
        let input = slice.len();
        let d = config.goal_dim;
        let net = |out: usize, rng: &mut R| -> Result<Mlp> {
            let spec = MlpSpec::new(input, config.hidden.clone(), config.activation, out);
            let mlp = Mlp::new("posterior.net", spec, rng)?;
            Ok(match config.spectral_norm {
                Some(c) => mlp.with_spectral_norm(c, rng.gen())?,
                None => mlp,
            })
        };
        let model = match config.family {
            PosteriorFamily::FixedIdentityGaussian => Model::FixedIdentity,
            PosteriorFamily::AdaptiveVarianceGaussian => {
                let [lo, hi] = config.log_sigma_clip;
                let init = config.init_log_sigma.clamp(lo, hi);
                Model::Adaptive {
                    log_sigma: Param::new("posterior.log_sigma", Tensor::row(vec![init; d])),
                }
            }
            PosteriorFamily::LinearGaussian => {
                let bound = 1.0 / (input as f64).sqrt();
                let data = (0..d * input).map(|_| rng.gen_range(-bound..bound)).collect();
                Model::Linear {
                    a: Param::new("posterior.A", Tensor::matrix(d, input, data)?),
                }
            }
            PosteriorFamily::MlpGaussian => Model::Gaussian { net: net(2 * d, rng)? },
            PosteriorFamily::Categorical => Model::Categorical { net: net(d, rng)? },
            PosteriorFamily::Gmm => {
                let k = config.gmm_components;
                Model::Mixture {
                    net: net(k + 2 * k * d, rng)?,
                }
            }
        };
        let squash = config.squash();
        let mut posterior = Self {
            config,
            obs_dim,
            slice,
            squash,
            model,
            optimizer: None,
        };
        if !posterior.params().is_empty() {
            let opt = AdamState::new(
                AdamConfig::with_lr(posterior.config.learning_rate),
                &posterior.params(),
            );
            posterior.optimizer = Some(opt);
        }
        Ok(posterior)
    }

    pub fn config(&self) -> &PosteriorConfig {
        &self.config
    }

    pub fn family(&self) -> PosteriorFamily {
        self.config.family
    }

    pub fn goal_dim(&self) -> usize {
        self.config.goal_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn squashed(&self) -> bool {
        self.squash
    }

    /// Observation indices the posterior reads.
    pub fn state_slice(&self) -> &[usize] {
        &self.slice
    }

    pub fn prior(&self) -> Result<Prior> {
        self.config.family.prior(self.config.goal_dim)
    }

    pub fn optimizer(&self) -> Option<&AdamState> {
        self.optimizer.as_ref()
    }

    pub fn set_optimizer(&mut self, state: AdamState) {
        self.optimizer = Some(state);
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::DimMismatch {
                context: "posterior observation".into(),
                expected: self.obs_dim,
                actual: obs.len(),
            });
        }
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("posterior observation".into()));
        }
        Ok(())
    }

    fn input_matrix<S: AsRef<[f64]>>(&self, obs: &[S]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(obs.len() * self.slice.len());
        for s in obs {
            let s = s.as_ref();
            self.check_obs(s)?;
            data.extend(self.slice.iter().map(|&i| s[i]));
        }
        Ok(Tensor::matrix(obs.len(), self.slice.len(), data)?)
    }

    fn clip_row(&self, row: &[f64]) -> Vec<f64> {
        let [lo, hi] = self.config.log_sigma_clip;
        row.iter().map(|x| x.clamp(lo, hi)).collect()
    }

    /// `q(. | s)` for each observation, computed in one batched pass.
    pub fn distributions<S: AsRef<[f64]>>(&self, obs: &[S]) -> Result<Vec<Distribution>> {
        let x = self.input_matrix(obs)?;
        let d = self.config.goal_dim;
        let n = obs.len();
        let fixed_log_sigma = vec![self.config.sigma_fixed.ln(); d];
        let out = match &self.model {
            Model::FixedIdentity => (0..n)
                .map(|i| Distribution::Gaussian {
                    mean: x.row_slice(i).to_vec(),
                    log_sigma: fixed_log_sigma.clone(),
                    squash: self.squash,
                })
                .collect(),
            Model::Adaptive { log_sigma } => (0..n)
                .map(|i| Distribution::Gaussian {
                    mean: x.row_slice(i).to_vec(),
                    log_sigma: log_sigma.value.data().to_vec(),
                    squash: self.squash,
                })
                .collect(),
            Model::Linear { a } => {
                let mean = x.matmul(&a.value.transpose()?)?;
                (0..n)
                    .map(|i| Distribution::Gaussian {
                        mean: mean.row_slice(i).to_vec(),
                        log_sigma: fixed_log_sigma.clone(),
                        squash: self.squash,
                    })
                    .collect()
            }
            Model::Gaussian { net } => {
                let y = net.predict(&x)?;
                (0..n)
                    .map(|i| {
                        let row = y.row_slice(i);
                        Distribution::Gaussian {
                            mean: row[..d].to_vec(),
                            log_sigma: self.clip_row(&row[d..]),
                            squash: self.squash,
                        }
                    })
                    .collect()
            }
            Model::Categorical { net } => {
                let y = net.predict(&x)?;
                (0..n)
                    .map(|i| Distribution::Categorical {
                        logits: y.row_slice(i).to_vec(),
                    })
                    .collect()
            }
            Model::Mixture { net } => {
                let y = net.predict(&x)?;
                let k = self.config.gmm_components;
                (0..n)
                    .map(|i| {
                        let row = y.row_slice(i);
                        let means = (0..k).map(|c| row[k + c * d..k + (c + 1) * d].to_vec()).collect();
                        let off = k + k * d;
                        let log_sigmas = (0..k)
                            .map(|c| self.clip_row(&row[off + c * d..off + (c + 1) * d]))
                            .collect();
                        Distribution::Mixture {
                            log_weights: row[..k].to_vec(),
                            means,
                            log_sigmas,
                            squash: self.squash,
                        }
                    })
                    .collect()
            }
        };
        Ok(out)
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<Distribution> {
        Ok(self.distributions(&[obs])?.pop().expect("one row"))
    }

    /// `log q(z | s)`.
    pub fn log_prob(&self, z: &LatentGoal, obs: &[f64]) -> Result<f64> {
        self.check_goal(z)?;
        self.distribution(obs)?.log_prob(z)
    }

    pub fn log_prob_batch<S: AsRef<[f64]>>(&self, goals: &[LatentGoal], obs: &[S]) -> Result<Vec<f64>> {
        if goals.len() != obs.len() {
            return Err(Error::DimMismatch {
                context: "goal/observation batch".into(),
                expected: obs.len(),
                actual: goals.len(),
            });
        }
        let dists = self.distributions(obs)?;
        goals
            .iter()
            .zip(&dists)
            .map(|(z, d)| {
                self.check_goal(z)?;
                d.log_prob(z)
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<LatentGoal> {
        Ok(self.distribution(obs)?.sample(rng))
    }

    /// `argmax_z q(z | s)`.
    pub fn mode(&self, obs: &[f64]) -> Result<LatentGoal> {
        Ok(self.distribution(obs)?.mode())
    }

    /// `E[z | s]` under the posterior.
    pub fn mean(&self, obs: &[f64]) -> Result<LatentGoal> {
        Ok(self.distribution(obs)?.mean())
    }

    fn check_goal(&self, z: &LatentGoal) -> Result<()> {
        match (self.family().is_discrete(), z) {
            (true, LatentGoal::Discrete(i)) if *i >= self.goal_dim() => Err(Error::OutOfSupport {
                goal: z.to_string(),
                support: format!("{} categories", self.goal_dim()),
            }),
            (true, LatentGoal::Discrete(_)) => Ok(()),
            (false, LatentGoal::Continuous(v)) if v.len() == self.goal_dim() => Ok(()),
            (false, LatentGoal::Continuous(v)) => Err(Error::DimMismatch {
                context: "continuous goal".into(),
                expected: self.goal_dim(),
                actual: v.len(),
            }),
            _ => Err(Error::InvalidArgument(format!(
                "goal {z} does not match the {} posterior",
                self.family().name()
            ))),
        }
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<Bound> {
        let leaf = |tape: &mut Tape, p: &Param| -> Result<Var> {
            Ok(if trainable {
                tape.param(&p.value)?
            } else {
                tape.constant(p.value.clone())?
            })
        };
        Ok(match &self.model {
            Model::FixedIdentity => Bound::Nothing,
            Model::Adaptive { log_sigma } => Bound::Leaf(leaf(tape, log_sigma)?),
            Model::Linear { a } => Bound::Leaf(leaf(tape, a)?),
            Model::Gaussian { net } | Model::Categorical { net } | Model::Mixture { net } => {
                Bound::Net(net.bind(tape, trainable)?)
            }
        })
    }

    /// Diagonal-Gaussian row log-density of pre-squash targets `u`.
    fn gaussian_rows(tape: &mut Tape, mean: Var, log_sigma: Var, u: Var, d: usize) -> Result<Var> {
        let diff = tape.sub(u, mean)?;
        let neg = tape.neg(log_sigma);
        let inv = tape.exp(neg);
        let scaled = tape.mul(diff, inv)?;
        let sq = tape.square(scaled);
        let half = tape.scale(sq, -0.5);
        let terms = tape.sub(half, log_sigma)?;
        let rows = tape.sum_cols(terms);
        Ok(tape.add_scalar(rows, -(d as f64) * HALF_LN_2PI))
    }

    /// Batched `log q(z_i | s_i)` as a `B x 1` node.
    fn log_prob_graph(&self, tape: &mut Tape, bound: &Bound, x: Var, goals: &[LatentGoal]) -> Result<Var> {
        let d = self.config.goal_dim;
        let b = goals.len();
        let [lo, hi] = self.config.log_sigma_clip;

        if let Model::Categorical { net } = &self.model {
            let Bound::Net(binding) = bound else { unreachable!() };
            let logits = net.forward(tape, binding, x)?;
            let lsm = tape.log_softmax(logits);
            let idx = goals
                .iter()
                .map(|z| {
                    self.check_goal(z)?;
                    Ok(z.index().expect("checked"))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(tape.gather(lsm, idx)?);
        }

        let mut u = Vec::with_capacity(b * d);
        let mut corrections = Vec::with_capacity(b);
        for z in goals {
            self.check_goal(z)?;
            let (uz, c) = unsquash(z.vector().expect("checked"), self.squash)?;
            u.extend(uz);
            corrections.push(c);
        }
        let u = tape.constant(Tensor::matrix(b, d, u)?)?;

        let base = match (&self.model, bound) {
            (Model::FixedIdentity, _) => {
                let ls = tape.constant(Tensor::row(vec![self.config.sigma_fixed.ln(); d]))?;
                Self::gaussian_rows(tape, x, ls, u, d)?
            }
            (Model::Adaptive { .. }, Bound::Leaf(ls)) => Self::gaussian_rows(tape, x, *ls, u, d)?,
            (Model::Linear { .. }, Bound::Leaf(a)) => {
                let at = tape.transpose(*a);
                let mean = tape.matmul(x, at)?;
                let ls = tape.constant(Tensor::row(vec![self.config.sigma_fixed.ln(); d]))?;
                Self::gaussian_rows(tape, mean, ls, u, d)?
            }
            (Model::Gaussian { net }, Bound::Net(binding)) => {
                let y = net.forward(tape, binding, x)?;
                let mean = tape.slice_cols(y, 0, d)?;
                let raw = tape.slice_cols(y, d, 2 * d)?;
                let ls = tape.clamp(raw, lo, hi);
                Self::gaussian_rows(tape, mean, ls, u, d)?
            }
            (Model::Mixture { net }, Bound::Net(binding)) => {
                let k = self.config.gmm_components;
                let y = net.forward(tape, binding, x)?;
                let logits = tape.slice_cols(y, 0, k)?;
                let log_w = tape.log_softmax(logits);
                let mut comps = Vec::with_capacity(k);
                for c in 0..k {
                    let mean = tape.slice_cols(y, k + c * d, k + (c + 1) * d)?;
                    let raw = tape.slice_cols(y, k + k * d + c * d, k + k * d + (c + 1) * d)?;
                    let ls = tape.clamp(raw, lo, hi);
                    comps.push(Self::gaussian_rows(tape, mean, ls, u, d)?);
                }
                let comps = tape.concat(&comps)?;
                let joint = tape.add(comps, log_w)?;
                tape.logsumexp_cols(joint)
            }
            _ => unreachable!("binding matches model"),
        };
        if self.squash {
            let c = tape.constant(Tensor::column(corrections))?;
            Ok(tape.add(base, c)?)
        } else {
            Ok(base)
        }
    }

    /// Negative mean log-likelihood of `(z, s)` pairs, differentiable in the
    /// learnable parameters. Returns the loss node and the binding used.
    fn nll_graph(&self, tape: &mut Tape, pairs: &[(LatentGoal, Vec<f64>)], trainable: bool) -> Result<(Var, Bound)> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty discriminator batch".into()));
        }
        let obs: Vec<&[f64]> = pairs.iter().map(|(_, s)| s.as_slice()).collect();
        let goals: Vec<LatentGoal> = pairs.iter().map(|(z, _)| z.clone()).collect();
        let x = tape.constant(self.input_matrix(&obs)?)?;
        let bound = self.bind(tape, trainable)?;
        let lp = self.log_prob_graph(tape, &bound, x, &goals)?;
        let mean = tape.mean(lp);
        Ok((tape.neg(mean), bound))
    }

    /// Loss `-mean log q(z | s)` without updating anything.
    pub fn nll(&self, pairs: &[(LatentGoal, Vec<f64>)]) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, _) = self.nll_graph(&mut tape, pairs, false)?;
        Ok(tape.value(loss).item())
    }

    /// Gradient of [`Posterior::nll`] with respect to each learnable
    /// parameter, in [`Module::params`] order.
    pub fn nll_gradients(&self, pairs: &[(LatentGoal, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
        let mut scratch = self.clone();
        scratch.zero_grad();
        scratch.accumulate_nll_grads(pairs)?;
        Ok(scratch
            .params()
            .iter()
            .map(|p| p.value.grad().map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec))
            .collect())
    }

    fn accumulate_nll_grads(&mut self, pairs: &[(LatentGoal, Vec<f64>)]) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, bound) = self.nll_graph(&mut tape, pairs, true)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite("discriminator loss".into()));
        }
        if self.params().is_empty() {
            return Ok(value);
        }
        let grads = tape.backward(loss)?;
        match (&mut self.model, bound) {
            (Model::Adaptive { log_sigma: p }, Bound::Leaf(v)) | (Model::Linear { a: p }, Bound::Leaf(v)) => {
                if let Some(g) = grads.get(v) {
                    p.value.accumulate_grad(g)?;
                }
            }
            (
                Model::Gaussian { net } | Model::Categorical { net } | Model::Mixture { net },
                Bound::Net(binding),
            ) => net.accumulate_grads(&grads, &binding)?,
            _ => {}
        }
        Ok(value)
    }

    /// One maximum-likelihood step on `(z, s)` pairs; returns the loss
    /// before the update. The fixed family only reports the loss.
    pub fn fit_discriminator_step(&mut self, pairs: &[(LatentGoal, Vec<f64>)]) -> Result<f64> {
        self.zero_grad();
        let loss = self.accumulate_nll_grads(pairs)?;
        let Some(mut opt) = self.optimizer.take() else {
            return Ok(loss);
        };
        let result = opt.step(&mut self.params_mut());
        self.optimizer = Some(opt);
        result?;
        self.after_update()?;
        Ok(loss)
    }

    /// Re-applies constraints after parameters change: log-sigma clipping
    /// and fresh spectral-norm estimates.
    pub fn after_update(&mut self) -> Result<()> {
        let [lo, hi] = self.config.log_sigma_clip;
        match &mut self.model {
            Model::Adaptive { log_sigma } => {
                for x in log_sigma.value.data_mut() {
                    *x = x.clamp(lo, hi);
                }
            }
            Model::Gaussian { net } | Model::Categorical { net } | Model::Mixture { net } => {
                net.refresh_spectral()?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Weight matrices as applied in the forward pass (after spectral
    /// normalization), for network families.
    pub fn effective_weights(&self) -> Vec<Tensor> {
        match &self.model {
            Model::Gaussian { net } | Model::Categorical { net } | Model::Mixture { net } => net.effective_weights(),
            _ => Vec::new(),
        }
    }

    /// Current global `sigma` vector for the Gaussian GCRL-style families.
    pub fn sigma(&self) -> Option<Vec<f64>> {
        let d = self.config.goal_dim;
        match &self.model {
            Model::FixedIdentity | Model::Linear { .. } => Some(vec![self.config.sigma_fixed; d]),
            Model::Adaptive { log_sigma } => Some(log_sigma.value.data().iter().map(|x| x.exp()).collect()),
            _ => None,
        }
    }

    /// The linear mean map `A` (`goal_dim x input`), for the linear family.
    pub fn a_matrix(&self) -> Option<&Tensor> {
        match &self.model {
            Model::Linear { a } => Some(&a.value),
            _ => None,
        }
    }

    pub fn describe(&self) -> PosteriorSnapshot {
        PosteriorSnapshot {
            family: self.config.family,
            sigma: self.sigma(),
            a_matrix: self
                .a_matrix()
                .map(|a| (0..a.rows()).map(|r| a.row_slice(r).to_vec()).collect()),
            spectral_sigmas: match &self.model {
                Model::Gaussian { net } | Model::Categorical { net } | Model::Mixture { net } => net.spectral_sigmas(),
                _ => None,
            },
        }
    }
}

impl Module for Posterior {
    fn params(&self) -> Vec<&Param> {
        match &self.model {
            Model::FixedIdentity => Vec::new(),
            Model::Adaptive { log_sigma } => vec![log_sigma],
            Model::Linear { a } => vec![a],
            Model::Gaussian { net } | Model::Categorical { net } | Model::Mixture { net } => net.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.model {
            Model::FixedIdentity => Vec::new(),
            Model::Adaptive { log_sigma } => vec![log_sigma],
            Model::Linear { a } => vec![a],
            Model::Gaussian { net } | Model::Categorical { net } | Model::Mixture { net } => net.params_mut(),
        }
    }
}

/// `log q(z | s) - log p(z)`.
pub fn intrinsic_reward(posterior: &Posterior, prior: &Prior, z: &LatentGoal, obs: &[f64]) -> Result<f64> {
    Ok(posterior.log_prob(z, obs)? - prior.log_density(z)?)
}

/// Batched [`intrinsic_reward`].
pub fn intrinsic_rewards<S: AsRef<[f64]>>(
    posterior: &Posterior,
    prior: &Prior,
    goals: &[LatentGoal],
    obs: &[S],
) -> Result<Vec<f64>> {
    let lq = posterior.log_prob_batch(goals, obs)?;
    goals
        .iter()
        .zip(lq)
        .map(|(z, l)| Ok(l - prior.log_density(z)?))
        .collect()
}

#[cfg(test)]
mod tests;
