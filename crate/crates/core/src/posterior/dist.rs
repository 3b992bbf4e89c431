use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal, WeightedIndex};

use super::LatentGoal;
use crate::ndmath::logsumexp;
use crate::{Error, Result};

/// Squashed samples are kept this far inside `(-1, 1)`.
pub const SQUASH_EPS: f64 = 1e-6;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// The conditional distribution `q(. | s)` for one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// Diagonal Gaussian, optionally pushed through `tanh`.
    Gaussian {
        mean: Vec<f64>,
        log_sigma: Vec<f64>,
        squash: bool,
    },
    Categorical {
        logits: Vec<f64>,
    },
    /// Mixture of diagonal Gaussians sharing one squashing flag.
    Mixture {
        log_weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        log_sigmas: Vec<Vec<f64>>,
        squash: bool,
    },
}

fn continuous(z: &LatentGoal, dim: usize) -> Result<&[f64]> {
    match z {
        LatentGoal::Continuous(v) if v.len() == dim => Ok(v),
        LatentGoal::Continuous(v) => Err(Error::DimMismatch {
            context: "continuous goal".into(),
            expected: dim,
            actual: v.len(),
        }),
        LatentGoal::Discrete(_) => Err(Error::InvalidArgument(
            "discrete goal given to a continuous posterior".into(),
        )),
    }
}

/// Pre-squash coordinates and the log-Jacobian term `-sum log(1 - z^2)`.
pub(crate) fn unsquash(z: &[f64], squash: bool) -> Result<(Vec<f64>, f64)> {
    if !squash {
        return Ok((z.to_vec(), 0.0));
    }
    let mut correction = 0.0;
    let mut u = Vec::with_capacity(z.len());
    for &x in z {
        if !(x.abs() < 1.0) {
            return Err(Error::OutOfSupport {
                goal: format!("{z:?}"),
                support: "open box (-1, 1) of the squashed posterior".into(),
            });
        }
        u.push(x.atanh());
        correction -= (1.0 - x * x).ln();
    }
    Ok((u, correction))
}

fn gaussian_log_prob_unsquashed(mean: &[f64], log_sigma: &[f64], u: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let scaled = (u[i] - mean[i]) * (-log_sigma[i]).exp();
        lp += -HALF_LN_2PI - log_sigma[i] - 0.5 * scaled * scaled;
    }
    lp
}

fn squash_value(u: f64) -> f64 {
    u.tanh().clamp(-1.0 + SQUASH_EPS, 1.0 - SQUASH_EPS)
}

/// `E[tanh(mu + sigma * e)]` for standard normal `e`, by Simpson's rule on
/// `[-8, 8]`.
pub(crate) fn expected_tanh(mu: f64, sigma: f64) -> f64 {
    const N: usize = 256;
    let (a, b) = (-8.0, 8.0);
    let h = (b - a) / N as f64;
    let f = |t: f64| (mu + sigma * t).tanh() * (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    let mut acc = f(a) + f(b);
    for i in 1..N {
        let t = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
    }
    acc * h / 3.0
}

fn gaussian_sample<R: Rng + ?Sized>(mean: &[f64], log_sigma: &[f64], squash: bool, rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(log_sigma)
        .map(|(m, ls)| {
            let e: f64 = StandardNormal.sample(rng);
            let u = m + ls.exp() * e;
            if squash {
                squash_value(u)
            } else {
                u
            }
        })
        .collect()
}

fn gaussian_mode(mean: &[f64], squash: bool) -> Vec<f64> {
    if squash {
        mean.iter().map(|&m| squash_value(m)).collect()
    } else {
        mean.to_vec()
    }
}

fn gaussian_mean(mean: &[f64], log_sigma: &[f64], squash: bool) -> Vec<f64> {
    if squash {
        mean.iter()
            .zip(log_sigma)
            .map(|(&m, ls)| expected_tanh(m, ls.exp()).clamp(-1.0 + SQUASH_EPS, 1.0 - SQUASH_EPS))
            .collect()
    } else {
        mean.to_vec()
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Distribution {
    pub fn log_prob(&self, z: &LatentGoal) -> Result<f64> {
        match self {
            Distribution::Gaussian {
                mean,
                log_sigma,
                squash,
            } => {
                let z = continuous(z, mean.len())?;
                let (u, correction) = unsquash(z, *squash)?;
                Ok(gaussian_log_prob_unsquashed(mean, log_sigma, &u) + correction)
            }
            Distribution::Categorical { logits } => {
                let i = match z {
                    LatentGoal::Discrete(i) if *i < logits.len() => *i,
                    LatentGoal::Discrete(i) => {
                        return Err(Error::OutOfSupport {
                            goal: format!("#{i}"),
                            support: format!("{} categories", logits.len()),
                        })
                    }
                    LatentGoal::Continuous(_) => {
                        return Err(Error::InvalidArgument(
                            "continuous goal given to a categorical posterior".into(),
                        ))
                    }
                };
                Ok(logits[i] - logsumexp(logits))
            }
            Distribution::Mixture {
                log_weights,
                means,
                log_sigmas,
                squash,
            } => {
                let z = continuous(z, means[0].len())?;
                let (u, correction) = unsquash(z, *squash)?;
                let norm = logsumexp(log_weights);
                let terms: Vec<f64> = (0..log_weights.len())
                    .map(|k| log_weights[k] - norm + gaussian_log_prob_unsquashed(&means[k], &log_sigmas[k], &u))
                    .collect();
                Ok(logsumexp(&terms) + correction)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentGoal {
        match self {
            Distribution::Gaussian {
                mean,
                log_sigma,
                squash,
            } => LatentGoal::Continuous(gaussian_sample(mean, log_sigma, *squash, rng)),
            Distribution::Categorical { logits } => {
                LatentGoal::Discrete(sample_logits(logits, rng))
            }
            Distribution::Mixture {
                log_weights,
                means,
                log_sigmas,
                squash,
            } => {
                let k = sample_logits(log_weights, rng);
                LatentGoal::Continuous(gaussian_sample(&means[k], &log_sigmas[k], *squash, rng))
            }
        }
    }

    /// `argmax_z q(z | s)`; for mixtures, the squashed mean of the
    /// heaviest component, ties broken by mixture density.
    pub fn mode(&self) -> LatentGoal {
        match self {
            Distribution::Gaussian { mean, squash, .. } => LatentGoal::Continuous(gaussian_mode(mean, *squash)),
            Distribution::Categorical { logits } => LatentGoal::Discrete(argmax(logits)),
            Distribution::Mixture {
                log_weights,
                means,
                squash,
                ..
            } => {
                let top = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut best: Option<(f64, Vec<f64>)> = None;
                for (k, &w) in log_weights.iter().enumerate() {
                    if top - w > 1e-12 {
                        continue;
                    }
                    let candidate = gaussian_mode(&means[k], *squash);
                    let lp = self
                        .log_prob(&LatentGoal::Continuous(candidate.clone()))
                        .unwrap_or(f64::NEG_INFINITY);
                    if best.as_ref().is_none_or(|(b, _)| lp > *b) {
                        best = Some((lp, candidate));
                    }
                }
                LatentGoal::Continuous(best.expect("at least one component").1)
            }
        }
    }

    /// Posterior expectation of `z`. Categorical posteriors return the
    /// most likely index, since an average of indices is meaningless.
    pub fn mean(&self) -> LatentGoal {
        match self {
            Distribution::Gaussian {
                mean,
                log_sigma,
                squash,
            } => LatentGoal::Continuous(gaussian_mean(mean, log_sigma, *squash)),
            Distribution::Categorical { .. } => self.mode(),
            Distribution::Mixture {
                log_weights,
                means,
                log_sigmas,
                squash,
            } => {
                let norm = logsumexp(log_weights);
                let mut out = vec![0.0; means[0].len()];
                for k in 0..log_weights.len() {
                    let w = (log_weights[k] - norm).exp();
                    for (o, m) in out.iter_mut().zip(gaussian_mean(&means[k], &log_sigmas[k], *squash)) {
                        *o += w * m;
                    }
                }
                LatentGoal::Continuous(out)
            }
        }
    }
}

fn sample_logits<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    WeightedIndex::new(&weights).map_or(argmax(logits), |d| d.sample(rng))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn categorical_mode_is_argmax() {
        let d = Distribution::Categorical {
            logits: vec![0.1, 2.0, -1.0],
        };
        assert_eq!(d.mode(), LatentGoal::Discrete(1));
    }

    #[test]
    fn one_hot_logits_always_sample_their_index() {
        let d = Distribution::Categorical {
            logits: vec![-1e9, -1e9, 0.0, -1e9],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), LatentGoal::Discrete(2));
        }
    }

    #[test]
    fn squashed_mode_is_tanh_of_mean() {
        let d = Distribution::Gaussian {
            mean: vec![0.2, -0.3],
            log_sigma: vec![0.0, 0.0],
            squash: true,
        };
        assert_eq!(d.mode(), LatentGoal::Continuous(vec![0.2f64.tanh(), (-0.3f64).tanh()]));
    }

    #[test]
    fn expected_tanh_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mu, sigma) = (0.7, 0.9);
        let n = 200_000;
        let mc: f64 = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                (mu + sigma * e).tanh()
            })
            .sum::<f64>()
            / n as f64;
        assert!((expected_tanh(mu, sigma) - mc).abs() < 5e-3);
        assert!((expected_tanh(0.4, 1e-9) - 0.4f64.tanh()).abs() < 1e-9);
    }

    #[test]
    fn squashed_density_rejects_boundary() {
        let d = Distribution::Gaussian {
            mean: vec![0.0],
            log_sigma: vec![0.0],
            squash: true,
        };
        assert!(d.log_prob(&LatentGoal::Continuous(vec![1.0])).is_err());
        assert!(d.log_prob(&LatentGoal::Continuous(vec![0.999])).unwrap().is_finite());
    }
}
