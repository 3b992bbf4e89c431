use serde::{Deserialize, Serialize};

use super::{Dynamics, Env, ObservationProjection, ProjectedPointMass, WindProfile, WindyPointMass};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Windy,
    Projected,
}

mod defaults {
    pub fn dims() -> usize {
        2
    }
    pub fn rows() -> usize {
        2
    }
    pub fn horizon() -> usize {
        100
    }
    pub fn dt() -> f64 {
        0.05
    }
    pub fn action_scale() -> f64 {
        10.0
    }
}

/// The `[env]` block of an experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Point-mass dimensions (windy only).
    #[serde(default = "defaults::dims")]
    pub dims: usize,
    /// Explicit wind ranges, one per dimension.
    #[serde(default)]
    pub wind: Option<Vec<f64>>,
    /// Linear wind profile `R_i = slope * i`, used when `wind` is absent.
    #[serde(default)]
    pub wind_slope: Option<f64>,
    /// Projected observation rows (projected only).
    #[serde(default = "defaults::rows")]
    pub projection_rows: usize,
    /// Fixed projection seed; derived from the run seed when absent.
    #[serde(default)]
    pub projection_seed: Option<u64>,
    #[serde(default)]
    pub project_velocities: bool,
    #[serde(default = "defaults::horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::action_scale")]
    pub action_scale: f64,
}

impl EnvConfig {
    pub fn windy(dims: usize) -> Self {
        toml::from_str::<Self>(&format!("kind = \"windy\"\ndims = {dims}")).expect("defaults")
    }

    pub fn projected(rows: usize) -> Self {
        toml::from_str::<Self>(&format!("kind = \"projected\"\nprojection_rows = {rows}")).expect("defaults")
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics {
            dt: self.dt,
            action_scale: self.action_scale,
            horizon: self.horizon,
        }
    }

    pub fn wind_profile(&self) -> Result<WindProfile> {
        match (&self.wind, self.wind_slope) {
            (Some(_), Some(_)) => Err(Error::config("env.wind", "give either wind or wind_slope, not both")),
            (Some(ranges), None) => {
                if ranges.len() != self.dims {
                    return Err(Error::config(
                        "env.wind",
                        format!("{} ranges for {} dims", ranges.len(), self.dims),
                    ));
                }
                WindProfile::new(ranges.clone())
            }
            (None, Some(slope)) => WindProfile::linear(self.dims, slope),
            (None, None) => Ok(WindProfile::calm(self.dims)),
        }
    }

    pub fn projection_seed(&self, run_seed: u64) -> u64 {
        self.projection_seed.unwrap_or(run_seed ^ 0x5052_4f4a)
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamics().validate()?;
        match self.kind {
            EnvKind::Windy => {
                if self.dims == 0 {
                    return Err(Error::config("env.dims", "must be >= 1"));
                }
                self.wind_profile()?;
            }
            EnvKind::Projected => {
                if self.projection_rows < 2 {
                    return Err(Error::config("env.projection_rows", "must be >= 2"));
                }
                if self.wind.is_some() || self.wind_slope.is_some() {
                    return Err(Error::config("env.wind", "the projected point mass has no wind"));
                }
            }
        }
        Ok(())
    }

    /// Builds the environment; `seed` drives initial states and wind.
    pub fn build(&self, run_seed: u64, seed: u64) -> Result<Env> {
        self.validate()?;
        Ok(match self.kind {
            EnvKind::Windy => Env::Windy(WindyPointMass::new(self.wind_profile()?, self.dynamics(), seed)?),
            EnvKind::Projected => {
                let w = ObservationProjection::random(self.projection_rows, self.projection_seed(run_seed))?;
                Env::Projected(ProjectedPointMass::new(w, self.dynamics(), self.project_velocities, seed)?)
            }
        })
    }
}
