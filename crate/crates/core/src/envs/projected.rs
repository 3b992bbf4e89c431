use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_action, integrate, uniform_positions, Dynamics, EnvSpec, EnvState, Environment, Step};
use crate::ndmath::Tensor;
use crate::{Error, Result};

/// Fixed `m x 2` matrix mapping the planar position to the observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationProjection {
    matrix: Tensor,
}

impl ObservationProjection {
    pub fn new(matrix: Tensor) -> Result<Self> {
        let (m, c) = matrix.dims2()?;
        if c != 2 || m < 2 {
            return Err(Error::config(
                "env.projection",
                format!("projection must be m x 2 with m >= 2, got {m} x {c}"),
            ));
        }
        Ok(Self { matrix })
    }

    /// Entries drawn from `N(0, 1)`; square draws with `|det| < 1e-6` are
    /// redrawn.
    pub fn random(rows: usize, seed: u64) -> Result<Self> {
        if rows < 2 {
            return Err(Error::config("env.projection_rows", "need at least 2 rows"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let data: Vec<f64> = (0..rows * 2).map(|_| StandardNormal.sample(&mut rng)).collect();
            if rows == 2 && (data[0] * data[3] - data[1] * data[2]).abs() < 1e-6 {
                continue;
            }
            return Self::new(Tensor::matrix(rows, 2, data)?);
        }
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|i| self.matrix.get(i, 0) * v[0] + self.matrix.get(i, 1) * v[1])
            .collect()
    }
}

/// Planar point mass observed through a random linear map.
///
/// The observation is `W * position` followed by the velocity, which is
/// passed raw unless `project_velocities` is set.
#[derive(Debug, Clone)]
pub struct ProjectedPointMass {
    projection: ObservationProjection,
    dynamics: Dynamics,
    project_velocities: bool,
    state: EnvState,
    init_rng: ChaCha8Rng,
}

impl ProjectedPointMass {
    pub fn new(
        projection: ObservationProjection,
        dynamics: Dynamics,
        project_velocities: bool,
        seed: u64,
    ) -> Result<Self> {
        dynamics.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let state = EnvState::at_rest(uniform_positions(2, &mut init_rng));
        Ok(Self {
            projection,
            dynamics,
            project_velocities,
            state,
            init_rng,
        })
    }

    pub fn projection(&self) -> &ObservationProjection {
        &self.projection
    }

    /// Resets and returns the first observation.
    pub fn projected_reset(&mut self) -> Vec<f64> {
        self.state = EnvState::at_rest(uniform_positions(2, &mut self.init_rng));
        self.observation()
    }

    pub fn projected_step(&mut self, action: &[f64]) -> Result<Step> {
        check_action(action, 2)?;
        self.state = integrate(&self.state, action, &[0.0, 0.0], &self.dynamics);
        Ok(Step {
            observation: self.observation(),
            done: self.state.t >= self.dynamics.horizon,
        })
    }
}

impl Environment for ProjectedPointMass {
    fn spec(&self) -> EnvSpec {
        let m = self.projection.rows();
        EnvSpec {
            obs_dim: m + if self.project_velocities { m } else { 2 },
            action_dim: 2,
            horizon: self.dynamics.horizon,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.projected_reset()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.projected_step(action)
    }

    fn state(&self) -> &EnvState {
        &self.state
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = self.projection.apply(&self.state.positions);
        if self.project_velocities {
            obs.extend(self.projection.apply(&self.state.velocities));
        } else {
            obs.extend_from_slice(&self.state.velocities);
        }
        obs
    }

    fn position_dims(&self) -> Vec<usize> {
        (0..self.projection.rows()).collect()
    }
}
