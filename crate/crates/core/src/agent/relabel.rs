//! Hindsight goal relabeling of sampled batches.
//!
//! Relabeling happens when a batch is assembled, so posterior-based goals
//! always come from the current discriminator. Stored transitions keep the
//! goal they were collected with.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{AnchorStrategy, ReplayBuffer, SampledTransition};
use crate::posterior::{LatentGoal, Posterior, Prior};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelabelKind {
    None,
    /// Draw the new goal from `q(z | anchor)`.
    #[default]
    Posterior,
    /// Use the anchor state itself (restricted to the posterior's input
    /// dims) as the goal.
    State,
}

/// How a goal is read off `q(z | anchor)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorDraw {
    #[default]
    Sample,
    Mode,
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config(
            "agent.relabel_fraction",
            format!("{fraction} is outside [0, 1]"),
        ));
    }
    Ok(())
}

/// Chooses `round(fraction * len)` distinct batch positions.
fn chosen<R: Rng + ?Sized>(len: usize, fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_fraction(fraction)?;
    let k = ((fraction * len as f64).round() as usize).min(len);
    let mut picks = index::sample(rng, len, k).into_vec();
    picks.sort_unstable();
    Ok(picks)
}

fn anchors<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    batch: &[SampledTransition],
    picks: &[usize],
    strategy: AnchorStrategy,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    picks
        .iter()
        .map(|&i| {
            buffer
                .anchor(batch[i].index, strategy, rng)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::InvalidArgument(format!("transition {} is no longer stored", batch[i].index)))
        })
        .collect()
}

/// Posterior hindsight relabeling: a `fraction` of the batch gets
/// `z ~ q(. | s_anchor)` from the live posterior. Returns how many goals
/// were replaced. New goals are projected into the prior's support.
#[allow(clippy::too_many_arguments)]
pub fn pher_relabel<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    posterior: &Posterior,
    prior: &Prior,
    batch: &mut [SampledTransition],
    fraction: f64,
    strategy: AnchorStrategy,
    draw: PosteriorDraw,
    rng: &mut R,
) -> Result<usize> {
    let picks = chosen(batch.len(), fraction, rng)?;
    if picks.is_empty() {
        return Ok(0);
    }
    let states = anchors(buffer, batch, &picks, strategy, rng)?;
    let dists = posterior.distributions(&states)?;
    for (&i, dist) in picks.iter().zip(&dists) {
        let z = match draw {
            PosteriorDraw::Sample => dist.sample(rng),
            PosteriorDraw::Mode => dist.mode(),
        };
        let z = prior.project(z);
        prior.check(&z)?;
        batch[i].transition.goal = z;
        batch[i].relabeled = true;
    }
    Ok(picks.len())
}

/// Vanilla hindsight relabeling for state-space goals: `z = s_anchor`
/// restricted to the posterior's input dims, clamped into the prior box.
pub fn goal_relabel_her<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    state_slice: &[usize],
    prior: &Prior,
    batch: &mut [SampledTransition],
    fraction: f64,
    strategy: AnchorStrategy,
    rng: &mut R,
) -> Result<usize> {
    if prior.is_discrete() {
        return Err(Error::Unsupported {
            operation: "state relabeling".into(),
            family: "categorical".into(),
        });
    }
    if state_slice.len() != prior.goal_dim() {
        return Err(Error::DimMismatch {
            context: "state relabeling goal".into(),
            expected: prior.goal_dim(),
            actual: state_slice.len(),
        });
    }
    let picks = chosen(batch.len(), fraction, rng)?;
    let states = anchors(buffer, batch, &picks, strategy, rng)?;
    for (&i, s) in picks.iter().zip(&states) {
        if let Some(&bad) = state_slice.iter().find(|&&j| j >= s.len()) {
            return Err(Error::DimMismatch {
                context: "state relabeling index".into(),
                expected: s.len(),
                actual: bad + 1,
            });
        }
        let z = LatentGoal::Continuous(state_slice.iter().map(|&j| s[j]).collect());
        batch[i].transition.goal = prior.project(z);
        batch[i].relabeled = true;
    }
    Ok(picks.len())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::agent::Transition;
    use crate::posterior::{PosteriorConfig, PosteriorFamily};

    fn filled(goal_of: impl Fn(usize) -> LatentGoal) -> ReplayBuffer {
        let mut b = ReplayBuffer::new(1000).unwrap();
        for e in 0..5 {
            let ep = (0..10)
                .map(|t| Transition {
                    obs: vec![0.1 * t as f64, -0.05 * e as f64],
                    action: vec![0.0, 0.0],
                    next_obs: vec![0.1 * (t + 1) as f64 - 0.5, 0.05 * e as f64],
                    goal: goal_of(e),
                    done: t == 9,
                })
                .collect();
            b.store_episode(ep).unwrap();
        }
        b
    }

    #[test]
    fn zero_fraction_is_identity() {
        let b = filled(|e| LatentGoal::Discrete(e));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let post = Posterior::new(PosteriorConfig::new(PosteriorFamily::Categorical, 5), 2, &mut rng).unwrap();
        let mut batch = b.sample(32, &mut rng).unwrap();
        let before = batch.clone();
        let prior = post.prior().unwrap();
        let n = pher_relabel(&b, &post, &prior, &mut batch, 0.0, AnchorStrategy::Final, PosteriorDraw::Sample, &mut rng).unwrap();
        assert_eq!(n, 0);
        assert_eq!(batch, before);
        assert!(pher_relabel(&b, &post, &prior, &mut batch, 1.5, AnchorStrategy::Final, PosteriorDraw::Sample, &mut rng).is_err());
    }

    #[test]
    fn her_uses_final_state() {
        let b = filled(|_| LatentGoal::Continuous(vec![0.0, 0.0]));
        let prior = Prior::new_box(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut batch = b.sample(16, &mut rng).unwrap();
        let n = goal_relabel_her(&b, &[0, 1], &prior, &mut batch, 1.0, AnchorStrategy::Final, &mut rng).unwrap();
        assert_eq!(n, 16);
        for s in &batch {
            let fin = b.final_observation(s.index).unwrap();
            assert_eq!(s.goal().vector().unwrap(), fin);
        }
        assert!(goal_relabel_her(&b, &[0], &prior, &mut batch, 1.0, AnchorStrategy::Final, &mut rng).is_err());
    }

    #[test]
    fn half_fraction_relabels_half() {
        let b = filled(|_| LatentGoal::Continuous(vec![0.0, 0.0]));
        let prior = Prior::new_box(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut batch = b.sample(64, &mut rng).unwrap();
        let n = goal_relabel_her(&b, &[0, 1], &prior, &mut batch, 0.5, AnchorStrategy::Future, &mut rng).unwrap();
        assert_eq!(n, 32);
        assert_eq!(batch.iter().filter(|s| s.relabeled).count(), 32);
    }
}
