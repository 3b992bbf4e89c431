//! Drives a PD controller toward a fixed target in the 2-D windy point mass
//! and prints the trajectory. The second dimension is pushed by random wind.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vgcrl::envs::{EnvConfig, Environment};
use vgcrl::metrics::{rollout, ProportionalExpert};
use vgcrl::posterior::LatentGoal;

fn main() -> vgcrl::Result<()> {
    for wind in [0.0, 40.0] {
        let mut config = EnvConfig::windy(2);
        config.wind = Some(vec![0.0, wind]);
        let mut env = config.build(0, 1)?;
        let goal = LatentGoal::Continuous(vec![0.5, 0.5]);
        let expert = ProportionalExpert::for_point_mass(2);
        let r = rollout(&mut env, &expert, goal, Some(100), &mut ChaCha8Rng::seed_from_u64(0))?;
        println!("wind profile [0, {wind}]");
        for (t, obs) in r.observations.iter().enumerate().step_by(20) {
            println!("  t={:>3}  x = ({:+.3}, {:+.3})", t + 1, obs[0], obs[1]);
        }
        let end = r.final_obs();
        println!("  final x = ({:+.3}, {:+.3}), spec {:?}", end[0], end[1], env.spec());
    }
    Ok(())
}
