use std::collections::VecDeque;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::posterior::LatentGoal;
use crate::{Error, Result};

/// One environment step. Rewards are not stored; they are recomputed from
/// the current posterior whenever the transition is used for an update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub goal: LatentGoal,
    /// Last step of its episode (a time limit, not a terminal state).
    pub done: bool,
}

/// A transition drawn from the buffer. `goal` starts as the stored goal and
/// may be replaced by relabeling.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTransition {
    pub index: u64,
    pub transition: Transition,
    pub relabeled: bool,
}

impl SampledTransition {
    pub fn goal(&self) -> &LatentGoal {
        &self.transition.goal
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stored {
    transition: Transition,
    episode: u64,
}

/// Where to look for a hindsight anchor state within a transition's episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStrategy {
    /// The episode's final state.
    #[default]
    Final,
    /// A uniformly chosen state at or after the transition.
    Future,
    /// A uniformly chosen state from the whole stored episode.
    Episode,
}

/// FIFO ring of transitions addressed by monotonically increasing global
/// indices, with episode boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Stored>,
    /// Global index of `items[0]`.
    first: u64,
    /// Global index ranges of episodes, oldest first.
    episodes: VecDeque<Range<u64>>,
    first_episode: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("agent.buffer_capacity", "must be >= 1"));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
            first: 0,
            episodes: VecDeque::new(),
            first_episode: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Global index range currently held.
    pub fn index_range(&self) -> Range<u64> {
        self.first..self.first + self.items.len() as u64
    }

    /// Total transitions ever stored.
    pub fn total_stored(&self) -> u64 {
        self.first + self.items.len() as u64
    }

    pub fn get(&self, index: u64) -> Option<&Transition> {
        self.slot(index).map(|s| &s.transition)
    }

    fn slot(&self, index: u64) -> Option<&Stored> {
        index
            .checked_sub(self.first)
            .and_then(|off| self.items.get(off as usize))
    }

    /// Appends one episode, all steps sharing the goal it was rolled out with.
    pub fn store_episode(&mut self, episode: Vec<Transition>) -> Result<()> {
        let Some(head) = episode.first() else {
            return Err(Error::InvalidArgument("cannot store an empty episode".into()));
        };
        if episode.iter().any(|t| t.goal != head.goal) {
            return Err(Error::InvalidArgument("an episode must use a single goal".into()));
        }
        if let Some(prev) = self.items.back() {
            let p = &prev.transition;
            if head.obs.len() != p.obs.len() || head.action.len() != p.action.len() {
                return Err(Error::DimMismatch {
                    context: "stored transition".into(),
                    expected: p.obs.len(),
                    actual: head.obs.len(),
                });
            }
        }
        let id = self.first_episode + self.episodes.len() as u64;
        let start = self.total_stored();
        let n = episode.len() as u64;
        for transition in episode {
            if self.items.len() == self.capacity {
                self.items.pop_front();
                self.first += 1;
            }
            self.items.push_back(Stored { transition, episode: id });
        }
        self.episodes.push_back(start..start + n);
        while self.episodes.front().is_some_and(|r| r.end <= self.first) {
            self.episodes.pop_front();
            self.first_episode += 1;
        }
        Ok(())
    }

    /// Stored index range of the episode containing `index`.
    pub fn episode_range(&self, index: u64) -> Option<Range<u64>> {
        let stored = self.slot(index)?;
        let range = &self.episodes[(stored.episode - self.first_episode) as usize];
        Some(range.start.max(self.first)..range.end)
    }

    /// Range of the most recently stored episode.
    pub fn last_episode(&self) -> Option<Range<u64>> {
        self.episodes.back().map(|r| r.start.max(self.first)..r.end)
    }

    /// `s_T` of the episode containing `index`. The last step of an episode
    /// is evicted last, so this is available for every stored index.
    pub fn final_observation(&self, index: u64) -> Option<&[f64]> {
        let range = self.episode_range(index)?;
        self.get(range.end - 1).map(|t| t.next_obs.as_slice())
    }

    /// Hindsight anchor state for `index` under `strategy`.
    pub fn anchor<R: Rng + ?Sized>(&self, index: u64, strategy: AnchorStrategy, rng: &mut R) -> Option<&[f64]> {
        let range = self.episode_range(index)?;
        let pick = match strategy {
            AnchorStrategy::Final => range.end - 1,
            AnchorStrategy::Future => rng.gen_range(index..range.end),
            AnchorStrategy::Episode => rng.gen_range(range),
        };
        self.get(pick).map(|t| t.next_obs.as_slice())
    }

    /// Uniform draw with replacement. The returned transitions are copies.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<SampledTransition>> {
        if self.items.is_empty() {
            return Err(Error::InvalidArgument("cannot sample from an empty buffer".into()));
        }
        let len = self.items.len();
        Ok((0..n)
            .map(|_| {
                let off = rng.gen_range(0..len);
                SampledTransition {
                    index: self.first + off as u64,
                    transition: self.items[off].transition.clone(),
                    relabeled: false,
                }
            })
            .collect())
    }

    /// The latest `n` `(goal, next_obs)` pairs, with the goals the episodes
    /// were rolled out with.
    pub fn recent_pairs(&self, n: usize) -> Vec<(LatentGoal, Vec<f64>)> {
        let skip = self.items.len().saturating_sub(n);
        self.items
            .iter()
            .skip(skip)
            .map(|s| (s.transition.goal.clone(), s.transition.next_obs.clone()))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Transition)> {
        self.items
            .iter()
            .enumerate()
            .map(move |(i, s)| (self.first + i as u64, &s.transition))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn episode(tag: usize, len: usize) -> Vec<Transition> {
        (0..len)
            .map(|t| Transition {
                obs: vec![t as f64],
                action: vec![0.0],
                next_obs: vec![t as f64 + 1.0],
                goal: LatentGoal::Discrete(tag),
                done: t + 1 == len,
            })
            .collect()
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(250).unwrap();
        for k in 0..3 {
            b.store_episode(episode(k, 100)).unwrap();
        }
        assert_eq!(b.len(), 250);
        assert_eq!(b.index_range(), 50..300);
        assert!(b.get(49).is_none());
        assert_eq!(b.get(50).unwrap().goal, LatentGoal::Discrete(0));
        assert_eq!(b.episode_range(60), Some(50..100));
        assert_eq!(b.final_observation(60), Some(&[100.0][..]));
    }

    #[test]
    fn last_episode_addresses_final_state() {
        let mut b = ReplayBuffer::new(1000).unwrap();
        b.store_episode(episode(0, 10)).unwrap();
        b.store_episode(episode(1, 7)).unwrap();
        let r = b.last_episode().unwrap();
        assert_eq!(r, 10..17);
        let t = b.get(r.end - 1).unwrap();
        assert!(t.done);
        assert_eq!(t.next_obs, vec![7.0]);
        for i in r {
            assert_eq!(b.get(i).unwrap().goal, LatentGoal::Discrete(1));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ReplayBuffer::new(0).is_err());
        let mut b = ReplayBuffer::new(10).unwrap();
        assert!(b.store_episode(Vec::new()).is_err());
        let mut mixed = episode(0, 3);
        mixed[1].goal = LatentGoal::Discrete(1);
        assert!(b.store_episode(mixed).is_err());
    }

    #[test]
    fn episode_longer_than_capacity() {
        let mut b = ReplayBuffer::new(5).unwrap();
        b.store_episode(episode(0, 8)).unwrap();
        assert_eq!(b.episode_range(4), Some(3..8));
        assert_eq!(b.final_observation(3), Some(&[8.0][..]));
    }

    #[test]
    fn anchors_stay_inside_the_episode() {
        let mut b = ReplayBuffer::new(100).unwrap();
        b.store_episode(episode(0, 20)).unwrap();
        b.store_episode(episode(1, 20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let s = b.anchor(25, AnchorStrategy::Future, &mut rng).unwrap()[0];
            assert!((6.0..=20.0).contains(&s));
            let s = b.anchor(25, AnchorStrategy::Episode, &mut rng).unwrap()[0];
            assert!((1.0..=20.0).contains(&s));
        }
    }

    #[test]
    fn recent_pairs_are_newest() {
        let mut b = ReplayBuffer::new(100).unwrap();
        b.store_episode(episode(0, 5)).unwrap();
        b.store_episode(episode(1, 5)).unwrap();
        let pairs = b.recent_pairs(3);
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(|(z, _)| *z == LatentGoal::Discrete(1)));
        assert_eq!(pairs[2].1, vec![5.0]);
    }
}
