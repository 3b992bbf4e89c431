use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A latent goal: a skill index or a point in `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentGoal {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl LatentGoal {
    pub fn index(&self) -> Option<usize> {
        match self {
            LatentGoal::Discrete(i) => Some(*i),
            LatentGoal::Continuous(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            LatentGoal::Discrete(_) => None,
            LatentGoal::Continuous(v) => Some(v),
        }
    }

    /// Policy-input encoding: one-hot over `width` for indices, the raw
    /// vector otherwise.
    pub fn encode_into(&self, width: usize, out: &mut Vec<f64>) {
        match self {
            LatentGoal::Discrete(i) => {
                let start = out.len();
                out.resize(start + width, 0.0);
                out[start + *i] = 1.0;
            }
            LatentGoal::Continuous(v) => out.extend_from_slice(v),
        }
    }

    pub fn encode(&self, width: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(width);
        self.encode_into(width, &mut out);
        out
    }
}

impl std::fmt::Display for LatentGoal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LatentGoal::Discrete(i) => write!(f, "#{i}"),
            LatentGoal::Continuous(v) => write!(f, "{v:?}"),
        }
    }
}

/// Uniform prior `p(z)` over the goal space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    UniformCategorical { n: usize },
    UniformBox { dim: usize },
}

impl Prior {
    pub fn new_categorical(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("posterior.goal_dim", "need at least one skill"));
        }
        Ok(Prior::UniformCategorical { n })
    }

    pub fn new_box(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("posterior.goal_dim", "goal dimension must be >= 1"));
        }
        Ok(Prior::UniformBox { dim })
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Prior::UniformCategorical { .. })
    }

    /// Number of skills, or the box dimension.
    pub fn goal_dim(&self) -> usize {
        match *self {
            Prior::UniformCategorical { n } => n,
            Prior::UniformBox { dim } => dim,
        }
    }

    /// Width of the encoded goal fed to the policy.
    pub fn encoding_dim(&self) -> usize {
        self.goal_dim()
    }

    /// `H(p) = -log p(z)`, constant over the support.
    pub fn entropy(&self) -> f64 {
        match *self {
            Prior::UniformCategorical { n } => (n as f64).ln(),
            Prior::UniformBox { dim } => dim as f64 * 2f64.ln(),
        }
    }

    pub fn contains(&self, z: &LatentGoal) -> bool {
        match (*self, z) {
            (Prior::UniformCategorical { n }, LatentGoal::Discrete(i)) => *i < n,
            (Prior::UniformBox { dim }, LatentGoal::Continuous(v)) => {
                v.len() == dim && v.iter().all(|x| (-1.0..=1.0).contains(x))
            }
            _ => false,
        }
    }

    pub fn check(&self, z: &LatentGoal) -> Result<()> {
        if self.contains(z) {
            Ok(())
        } else {
            Err(Error::OutOfSupport {
                goal: z.to_string(),
                support: format!("{self:?}"),
            })
        }
    }

    pub fn log_density(&self, z: &LatentGoal) -> Result<f64> {
        self.check(z)?;
        Ok(-self.entropy())
    }

    /// Continuous draws lie strictly inside `(-1, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentGoal {
        match *self {
            Prior::UniformCategorical { n } => LatentGoal::Discrete(rng.gen_range(0..n)),
            Prior::UniformBox { dim } => LatentGoal::Continuous(
                (0..dim)
                    .map(|_| loop {
                        let x = rng.gen_range(-1.0..1.0);
                        if x > -1.0 {
                            break x;
                        }
                    })
                    .collect(),
            ),
        }
    }

    /// Nearest point of the support (clamps continuous goals into the box).
    pub fn project(&self, z: LatentGoal) -> LatentGoal {
        match (*self, z) {
            (Prior::UniformBox { .. }, LatentGoal::Continuous(v)) => {
                LatentGoal::Continuous(v.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect())
            }
            (_, z) => z,
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn log_density_is_constant() {
        let p = Prior::new_categorical(10).unwrap();
        assert!((p.log_density(&LatentGoal::Discrete(3)).unwrap() + 10f64.ln()).abs() < 1e-15);
        assert!(p.log_density(&LatentGoal::Discrete(10)).is_err());
        let b = Prior::new_box(2).unwrap();
        let z = LatentGoal::Continuous(vec![0.1, -0.9]);
        assert!((b.log_density(&z).unwrap() + 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!(b.log_density(&LatentGoal::Continuous(vec![1.5, 0.0])).is_err());
    }

    #[test]
    fn samples_are_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in [Prior::new_categorical(7).unwrap(), Prior::new_box(3).unwrap()] {
            for _ in 0..1000 {
                assert!(p.contains(&p.sample(&mut rng)));
            }
        }
    }

    #[test]
    fn one_hot_encoding() {
        assert_eq!(LatentGoal::Discrete(2).encode(4), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(LatentGoal::Continuous(vec![0.5]).encode(1), vec![0.5]);
    }
}
