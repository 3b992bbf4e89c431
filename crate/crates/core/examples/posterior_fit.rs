//! Fits the adaptive-variance posterior to synthetic pairs `z = s + noise`
//! whose noise is 0.5 in the first dimension and 2.0 in the second. The
//! learned sigma recovers the per-dimension noise scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vgcrl::posterior::{LatentGoal, Posterior, PosteriorConfig, PosteriorFamily};

fn main() -> vgcrl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut config = PosteriorConfig::new(PosteriorFamily::AdaptiveVarianceGaussian, 2);
    config.learning_rate = 0.05;
    let mut posterior = Posterior::new(config, 2, &mut rng)?;
    let noise = [0.5, 2.0];
    let pairs: Vec<(LatentGoal, Vec<f64>)> = (0..512)
        .map(|_| {
            let s: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let z = (0..2).map(|i| s[i] + noise[i] * rng.sample::<f64, _>(StandardNormal)).collect();
            (LatentGoal::Continuous(z), s)
        })
        .collect();
    for step in 0..=300 {
        let nll = posterior.fit_discriminator_step(&pairs)?;
        if step % 50 == 0 {
            println!("step {step:>3}  nll {nll:.4}  sigma {:?}", posterior.sigma().unwrap());
        }
    }
    Ok(())
}
