//! Point-mass control tasks.
//!
//! Both environments share the same per-dimension dynamics: explicit Euler
//! integration of a unit mass, accelerations `action_scale * a_i` plus an
//! optional uniform random force, and walls at `±1.5` that clamp the
//! position and stop that dimension.

mod config;
mod projected;
mod windy;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use config::{EnvConfig, EnvKind};
pub use projected::{ObservationProjection, ProjectedPointMass};
pub use windy::{windy_reset, windy_step, WindProfile, WindyPointMass};

pub const ARENA_HALF_WIDTH: f64 = 1.5;

/// Integration constants shared by the point-mass tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub dt: f64,
    pub action_scale: f64,
    pub horizon: usize,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            dt: 0.05,
            action_scale: 10.0,
            horizon: 100,
        }
    }
}

impl Dynamics {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.action_scale >= 0.0) {
            return Err(Error::config("env.dt", "dt and action_scale must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::config("env.horizon", "horizon must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub t: usize,
}

impl EnvState {
    pub fn at_rest(positions: Vec<f64>) -> Self {
        let n = positions.len();
        Self {
            positions,
            velocities: vec![0.0; n],
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub done: bool,
}

/// Episodic control task with seeded randomness.
pub trait Environment {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Step>;
    fn state(&self) -> &EnvState;
    fn observation(&self) -> Vec<f64>;
    /// Observation indices that carry position information.
    fn position_dims(&self) -> Vec<usize>;
}

pub(crate) fn uniform_positions(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(-ARENA_HALF_WIDTH..ARENA_HALF_WIDTH))
        .collect()
}

pub(crate) fn check_action(action: &[f64], dims: usize) -> Result<()> {
    if action.len() != dims {
        return Err(Error::DimMismatch {
            context: "action".into(),
            expected: dims,
            actual: action.len(),
        });
    }
    if action.iter().any(|a| a.is_nan()) {
        return Err(Error::NonFinite("action".into()));
    }
    Ok(())
}

/// Advances one Euler step with external accelerations `force`.
pub(crate) fn integrate(state: &EnvState, action: &[f64], force: &[f64], dynamics: &Dynamics) -> EnvState {
    let mut next = state.clone();
    for i in 0..state.positions.len() {
        let a = action[i].clamp(-1.0, 1.0);
        next.velocities[i] += dynamics.dt * (dynamics.action_scale * a + force[i]);
        next.positions[i] += dynamics.dt * next.velocities[i];
        if next.positions[i].abs() > ARENA_HALF_WIDTH {
            next.positions[i] = next.positions[i].clamp(-ARENA_HALF_WIDTH, ARENA_HALF_WIDTH);
            next.velocities[i] = 0.0;
        }
    }
    next.t += 1;
    next
}

/// Either supported task, behind one concrete type.
#[derive(Debug, Clone)]
pub enum Env {
    Windy(WindyPointMass),
    Projected(ProjectedPointMass),
}

impl Env {
    fn inner(&self) -> &dyn Environment {
        match self {
            Env::Windy(e) => e,
            Env::Projected(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            Env::Windy(e) => e,
            Env::Projected(e) => e,
        }
    }

    /// Initial observations of the next `n` resets, without disturbing `self`.
    /// Observation of a state with the given positions and zero velocity.
    pub fn observation_at_rest(&self, positions: &[f64]) -> Result<Vec<f64>> {
        let n = self.state().positions.len();
        if positions.len() != n {
            return Err(Error::DimMismatch {
                context: "rest positions".into(),
                expected: n,
                actual: positions.len(),
            });
        }
        let zeros = vec![0.0; n];
        Ok(match self {
            Env::Windy(_) => [positions, &zeros].concat(),
            Env::Projected(e) => {
                let mut obs = e.projection().apply(positions);
                let width = self.spec().obs_dim - obs.len();
                obs.extend(std::iter::repeat_n(0.0, width));
                obs
            }
        })
    }

    pub fn upcoming_initial_observations(&self, n: usize) -> Vec<Vec<f64>> {
        let mut probe = self.clone();
        (0..n).map(|_| probe.reset()).collect()
    }
}

impl Environment for Env {
    fn spec(&self) -> EnvSpec {
        self.inner().spec()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.inner_mut().reset()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.inner_mut().step(action)
    }

    fn state(&self) -> &EnvState {
        self.inner().state()
    }

    fn observation(&self) -> Vec<f64> {
        self.inner().observation()
    }

    fn position_dims(&self) -> Vec<usize> {
        self.inner().position_dims()
    }
}

/// `spec()` as a free function.
pub fn env_spec(env: &impl Environment) -> EnvSpec {
    env.spec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrate_fixed_point() {
        let s = EnvState::at_rest(vec![0.3, -0.2]);
        let next = integrate(&s, &[0.0, 0.0], &[0.0, 0.0], &Dynamics::default());
        assert_eq!(next.positions, s.positions);
        assert_eq!(next.velocities, s.velocities);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn wall_contact_clamps_and_stops() {
        let mut s = EnvState::at_rest(vec![1.49]);
        s.velocities[0] = 5.0;
        let next = integrate(&s, &[1.0], &[0.0], &Dynamics::default());
        assert_eq!(next.positions[0], ARENA_HALF_WIDTH);
        assert_eq!(next.velocities[0], 0.0);
    }

    #[test]
    fn actions_are_clipped() {
        let s = EnvState::at_rest(vec![0.0]);
        let d = Dynamics::default();
        let a = integrate(&s, &[5.0], &[0.0], &d);
        let b = integrate(&s, &[1.0], &[0.0], &d);
        assert_eq!(a, b);
    }
}
