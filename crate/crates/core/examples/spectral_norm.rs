//! Power-iteration spectral norm and the Lipschitz constraint applied to
//! discriminator weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vgcrl::ndmath::{apply_spectral_constraint, spectral_norm, NdError, Tensor};

fn main() -> Result<(), NdError> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = Tensor::matrix(8, 5, (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    for iters in [1, 2, 5, 10, 30] {
        println!("{iters:>3} iterations: sigma_max ~ {:.6}", spectral_norm(&w, iters, 0)?.sigma);
    }
    let constrained = apply_spectral_constraint(&w, 2.0)?;
    println!("after constraint (c = 2): {:.6}", spectral_norm(&constrained, 200, 0)?.sigma);
    Ok(())
}
