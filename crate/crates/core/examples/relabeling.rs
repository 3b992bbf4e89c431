//! Posterior hindsight relabeling on a small replay buffer: half of a
//! sampled batch gets goals drawn from the posterior at each episode's
//! final state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vgcrl::agent::{pher_relabel, AnchorStrategy, PosteriorDraw, ReplayBuffer, Transition};
use vgcrl::envs::{EnvConfig, Environment};
use vgcrl::metrics::{collect_rollouts, UniformRandom};
use vgcrl::posterior::{Posterior, PosteriorConfig, PosteriorFamily};

fn main() -> vgcrl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut env = EnvConfig::windy(2).build(0, 3)?;
    let mut config = PosteriorConfig::new(PosteriorFamily::Categorical, 8);
    config.state_slice = Some(vec![0, 1]);
    let posterior = Posterior::new(config, env.spec().obs_dim, &mut rng)?;
    let prior = posterior.prior()?;

    let mut buffer = ReplayBuffer::new(10_000)?;
    let policy = UniformRandom { action_dim: 2 };
    for r in collect_rollouts(&mut env, &policy, &prior, 6, &mut rng)? {
        let mut prev = r.initial_obs.clone();
        let len = r.observations.len();
        let episode = r
            .observations
            .iter()
            .zip(&r.actions)
            .enumerate()
            .map(|(t, (obs, a))| {
                Transition {
                    obs: std::mem::replace(&mut prev, obs.clone()),
                    action: a.clone(),
                    next_obs: obs.clone(),
                    goal: r.goal.clone(),
                    done: t + 1 == len,
                }
            })
            .collect();
        buffer.store_episode(episode)?;
    }

    let mut batch = buffer.sample(16, &mut rng)?;
    let before: Vec<_> = batch.iter().map(|b| b.goal().clone()).collect();
    let n = pher_relabel(&buffer, &posterior, &prior, &mut batch, 0.5, AnchorStrategy::Final, PosteriorDraw::Sample, &mut rng)?;
    println!("{} transitions stored, {n} of {} goals relabeled", buffer.len(), batch.len());
    for (b, old) in batch.iter().zip(&before) {
        let mark = if b.relabeled { "relabeled" } else { "" };
        println!("  #{:<4} goal {:?} -> {:?} {mark}", b.index, old.index().unwrap(), b.goal().index().unwrap());
    }
    Ok(())
}
