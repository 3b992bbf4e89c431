use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, integrate, uniform_positions, Dynamics, EnvSpec, EnvState, Environment, Step};
use crate::{Error, Result};

/// Per-dimension wind magnitudes `R_i`; the force on dimension `i` is drawn
/// from `U(-R_i, R_i)` every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindProfile {
    ranges: Vec<f64>,
}

impl WindProfile {
    pub fn new(ranges: Vec<f64>) -> Result<Self> {
        if ranges.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::config("env.wind", "wind ranges must be finite and >= 0"));
        }
        Ok(Self { ranges })
    }

    /// `R_i = slope * i`.
    pub fn linear(dims: usize, slope: f64) -> Result<Self> {
        Self::new((0..dims).map(|i| slope * i as f64).collect())
    }

    pub fn calm(dims: usize) -> Self {
        Self {
            ranges: vec![0.0; dims],
        }
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn dims(&self) -> usize {
        self.ranges.len()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|&r| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 })
            .collect()
    }
}

/// Uniform random start at rest. The observation is positions followed by
/// velocities.
pub fn windy_reset(dims: usize, rng: &mut ChaCha8Rng) -> Result<(EnvState, Vec<f64>)> {
    if dims < 1 {
        return Err(Error::config("env.dims", "need at least one dimension"));
    }
    let state = EnvState::at_rest(uniform_positions(dims, rng));
    let obs = observe(&state);
    Ok((state, obs))
}

/// One step of the windy point mass. `done` is set once `t` reaches the horizon.
pub fn windy_step(
    state: &EnvState,
    action: &[f64],
    profile: &WindProfile,
    dynamics: &Dynamics,
    rng: &mut ChaCha8Rng,
) -> Result<(EnvState, Vec<f64>, bool)> {
    let dims = state.positions.len();
    check_action(action, dims)?;
    if profile.dims() != dims {
        return Err(Error::DimMismatch {
            context: "wind profile".into(),
            expected: dims,
            actual: profile.dims(),
        });
    }
    let wind = profile.sample(rng);
    let next = integrate(state, action, &wind, dynamics);
    let obs = observe(&next);
    let done = next.t >= dynamics.horizon;
    Ok((next, obs, done))
}

fn observe(state: &EnvState) -> Vec<f64> {
    let mut obs = state.positions.clone();
    obs.extend_from_slice(&state.velocities);
    obs
}

/// N-dimensional point mass with per-dimension random wind.
///
/// Start positions and wind draw from separate streams, so the sequence of
/// initial states depends only on the seed and the number of resets.
#[derive(Debug, Clone)]
pub struct WindyPointMass {
    profile: WindProfile,
    dynamics: Dynamics,
    state: EnvState,
    init_rng: ChaCha8Rng,
    wind_rng: ChaCha8Rng,
}

impl WindyPointMass {
    pub fn new(profile: WindProfile, dynamics: Dynamics, seed: u64) -> Result<Self> {
        dynamics.validate()?;
        let dims = profile.dims();
        if dims < 1 {
            return Err(Error::config("env.dims", "need at least one dimension"));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let wind_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7769_6e64);
        let (state, _) = windy_reset(dims, &mut init_rng)?;
        Ok(Self {
            profile,
            dynamics,
            state,
            init_rng,
            wind_rng,
        })
    }

    pub fn profile(&self) -> &WindProfile {
        &self.profile
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }
}

impl Environment for WindyPointMass {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 2 * self.profile.dims(),
            action_dim: self.profile.dims(),
            horizon: self.dynamics.horizon,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        let (state, obs) = windy_reset(self.profile.dims(), &mut self.init_rng).expect("dims >= 1");
        self.state = state;
        obs
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let (next, observation, done) =
            windy_step(&self.state, action, &self.profile, &self.dynamics, &mut self.wind_rng)?;
        self.state = next;
        Ok(Step { observation, done })
    }

    fn state(&self) -> &EnvState {
        &self.state
    }

    fn observation(&self) -> Vec<f64> {
        observe(&self.state)
    }

    fn position_dims(&self) -> Vec<usize> {
        (0..self.profile.dims()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_is_two_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, obs) = windy_reset(2, &mut rng).unwrap();
        assert_eq!(obs.len(), 4);
        assert!(windy_reset(0, &mut rng).is_err());
    }

    #[test]
    fn seeded_reset_is_reproducible() {
        let a = windy_reset(3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = windy_reset(3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reset_is_uniform_over_arena() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let (s, _) = windy_reset(1, &mut rng).unwrap();
            assert!(s.positions[0].abs() <= 1.5);
            assert_eq!(s.velocities[0], 0.0);
            sum += s.positions[0];
        }
        assert!((sum / 10_000.0).abs() < 0.05);
    }

    #[test]
    fn profiles_from_the_windy_experiments() {
        let ten = WindProfile::linear(10, 11.0).unwrap();
        assert_eq!(ten.ranges()[0], 0.0);
        assert_eq!(ten.ranges()[9], 99.0);
        let two = WindProfile::new(vec![0.0, 40.0]).unwrap();
        assert_eq!(two.ranges(), &[0.0, 40.0]);
        assert!(WindProfile::new(vec![-1.0]).is_err());
    }

    #[test]
    fn calm_dimension_is_noise_free() {
        let profile = WindProfile::linear(10, 11.0).unwrap();
        let mut env = WindyPointMass::new(profile, Dynamics::default(), 4).unwrap();
        env.reset();
        let start = env.state().positions[0];
        for _ in 0..50 {
            env.step(&[0.0; 10]).unwrap();
        }
        assert_eq!(env.state().positions[0], start);
        assert_eq!(env.state().velocities[0], 0.0);
    }

    #[test]
    fn nan_action_is_an_error() {
        let mut env = WindyPointMass::new(WindProfile::calm(2), Dynamics::default(), 0).unwrap();
        assert!(env.step(&[f64::NAN, 0.0]).is_err());
        assert!(env.step(&[0.0]).is_err());
    }

    #[test]
    fn done_at_horizon() {
        let dynamics = Dynamics {
            horizon: 3,
            ..Dynamics::default()
        };
        let mut env = WindyPointMass::new(WindProfile::calm(1), dynamics, 0).unwrap();
        env.reset();
        assert!(!env.step(&[0.1]).unwrap().done);
        assert!(!env.step(&[0.1]).unwrap().done);
        assert!(env.step(&[0.1]).unwrap().done);
    }

    #[test]
    fn spec_for_ten_dims() {
        let env = WindyPointMass::new(WindProfile::linear(10, 11.0).unwrap(), Dynamics::default(), 0).unwrap();
        let spec = env.spec();
        assert_eq!((spec.obs_dim, spec.action_dim, spec.horizon), (20, 10, 100));
    }
}
