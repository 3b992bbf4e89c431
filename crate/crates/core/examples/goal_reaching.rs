//! State-space goal reaching with the identity posterior: targets are
//! embedded as goals, then a PD expert and a hold-still policy are scored
//! by the mean squared distance of their final positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vgcrl::envs::{EnvConfig, Environment};
use vgcrl::metrics::{lgr_state, Embedding, HoldStill, Policy, ProportionalExpert, TargetStateSet};
use vgcrl::posterior::{Posterior, PosteriorConfig, PosteriorFamily};

fn main() -> vgcrl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut env = EnvConfig::windy(2).build(0, 5)?;
    let mut config = PosteriorConfig::new(PosteriorFamily::FixedIdentityGaussian, 2);
    config.state_slice = Some(vec![0, 1]);
    let identity = Posterior::new(config, env.spec().obs_dim, &mut rng)?;

    let targets = (0..50)
        .map(|_| env.observation_at_rest(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
        .collect::<vgcrl::Result<Vec<_>>>()?;
    let targets = TargetStateSet::new(targets, None)?;

    let policies: [(&str, &dyn Policy); 2] = [
        ("PD expert", &ProportionalExpert::for_point_mass(2)),
        ("hold still", &HoldStill { action_dim: 2 }),
    ];
    for (name, policy) in policies {
        let report = lgr_state(policy, &identity, &mut env, &targets, 100, Embedding::Mean, &mut rng)?;
        println!("{name:<10}  mean squared distance {:.4} over {} targets", report.mean_distance, targets.len());
    }
    Ok(())
}
