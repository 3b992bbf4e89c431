use rand::{Rng, RngCore};

use crate::agent::SacAgent;
use crate::posterior::LatentGoal;
use crate::{Error, Result};

/// Anything that maps `(s, z)` to an action in `[-1, 1]^action_dim`.
pub trait Policy {
    fn action(&self, obs: &[f64], goal: &LatentGoal, rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

/// The SAC policy's squashed mean.
pub struct Greedy<'a>(pub &'a SacAgent);

/// Samples from the SAC policy.
pub struct Stochastic<'a>(pub &'a SacAgent);

impl Policy for Greedy<'_> {
    fn action(&self, obs: &[f64], goal: &LatentGoal, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.0.act(obs, goal, true, rng)
    }
}

impl Policy for Stochastic<'_> {
    fn action(&self, obs: &[f64], goal: &LatentGoal, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.0.act(obs, goal, false, rng)
    }
}

/// Always outputs zero acceleration.
pub struct HoldStill {
    pub action_dim: usize,
}

impl Policy for HoldStill {
    fn action(&self, _: &[f64], _: &LatentGoal, _: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.action_dim])
    }
}

/// Uniform actions, ignoring the goal.
pub struct UniformRandom {
    pub action_dim: usize,
}

impl Policy for UniformRandom {
    fn action(&self, _: &[f64], _: &LatentGoal, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok((0..self.action_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
    }
}

/// Scripted PD controller treating a continuous goal as target positions:
/// `a = clip(kp (z - x) - kd v)`.
#[derive(Debug, Clone)]
pub struct ProportionalExpert {
    pub kp: f64,
    pub kd: f64,
    pub position_dims: Vec<usize>,
    pub velocity_dims: Vec<usize>,
}

impl ProportionalExpert {
    /// Gains giving a critically damped response for the default point-mass
    /// dynamics (acceleration `10 a`).
    pub fn for_point_mass(dims: usize) -> Self {
        Self {
            kp: 1.0,
            kd: 2.0 * (10.0f64).sqrt() / 10.0,
            position_dims: (0..dims).collect(),
            velocity_dims: (dims..2 * dims).collect(),
        }
    }
}

impl Policy for ProportionalExpert {
    fn action(&self, obs: &[f64], goal: &LatentGoal, _: &mut dyn RngCore) -> Result<Vec<f64>> {
        let z = goal
            .vector()
            .ok_or_else(|| Error::InvalidArgument("the PD expert needs a continuous goal".into()))?;
        if z.len() != self.position_dims.len() {
            return Err(Error::DimMismatch {
                context: "PD expert goal".into(),
                expected: self.position_dims.len(),
                actual: z.len(),
            });
        }
        Ok(self
            .position_dims
            .iter()
            .zip(&self.velocity_dims)
            .zip(z)
            .map(|((&p, &v), &g)| (self.kp * (g - obs[p]) - self.kd * obs[v]).clamp(-1.0, 1.0))
            .collect())
    }
}
