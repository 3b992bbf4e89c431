//! Largest-singular-value estimation by power iteration on `W^T W`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{NdError, Tensor};

/// Below this the matrix is treated as zero and left unscaled.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Power-iteration result: `sigma = u^T W v` with unit `u` (rows) and `v` (cols).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn mat_vec(w: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        out[i] = w[i * cols..(i + 1) * cols]
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum();
    }
}

fn mat_t_vec(w: &[f64], rows: usize, cols: usize, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..rows {
        let ui = u[i];
        for (o, a) in out.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *o += a * ui;
        }
    }
}

/// Starting vector for the right singular vector, drawn from `seed`.
pub fn random_unit_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

struct PowerIteration<'a> {
    w: &'a [f64],
    rows: usize,
    cols: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    sigma: f64,
}

impl<'a> PowerIteration<'a> {
    fn new(w: &'a Tensor, v0: &[f64]) -> Result<Self, NdError> {
        let (rows, cols) = w.dims2()?;
        if v0.len() != cols {
            return Err(NdError::ShapeMismatch {
                op: "power_iteration",
                lhs: vec![rows, cols],
                rhs: vec![v0.len()],
            });
        }
        let mut v = v0.to_vec();
        let n = norm(&v);
        if n > 0.0 && n.is_finite() {
            v.iter_mut().for_each(|x| *x /= n);
        } else {
            v = vec![1.0 / (cols as f64).sqrt(); cols];
        }
        let mut it = Self {
            w: w.data(),
            rows,
            cols,
            u: vec![0.0; rows],
            v,
            sigma: 0.0,
        };
        it.measure();
        Ok(it)
    }

    /// `u = W v / |W v|`, `sigma = |W v|`.
    fn measure(&mut self) {
        mat_vec(self.w, self.rows, self.cols, &self.v, &mut self.u);
        self.sigma = norm(&self.u);
        if self.sigma > SIGMA_FLOOR {
            let s = self.sigma;
            self.u.iter_mut().for_each(|x| *x /= s);
        } else {
            self.u.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// One step of `v <- W^T W v`, normalized.
    fn step(&mut self) -> bool {
        if self.sigma <= SIGMA_FLOOR {
            return false;
        }
        let mut next = vec![0.0; self.cols];
        mat_t_vec(self.w, self.rows, self.cols, &self.u, &mut next);
        let n = norm(&next);
        if n <= SIGMA_FLOOR {
            return false;
        }
        next.iter_mut().for_each(|x| *x /= n);
        self.v = next;
        self.measure();
        true
    }

    fn finish(self) -> SpectralEstimate {
        SpectralEstimate {
            sigma: self.sigma,
            u: self.u,
            v: self.v,
        }
    }
}

/// `n_iters` power-iteration steps from a seeded random start.
///
/// The estimate never exceeds the true largest singular value and is
/// non-decreasing in `n_iters`. A zero matrix yields `sigma = 0`.
pub fn spectral_norm(w: &Tensor, n_iters: usize, seed: u64) -> Result<SpectralEstimate, NdError> {
    let (_, cols) = w.dims2()?;
    if n_iters == 0 {
        return Err(NdError::InvalidArgument("spectral_norm needs n_iters >= 1".into()));
    }
    let v0 = random_unit_vector(cols, seed);
    power_iteration(w, &v0, n_iters)
}

/// Warm-started power iteration from `v0`.
pub fn power_iteration(w: &Tensor, v0: &[f64], n_iters: usize) -> Result<SpectralEstimate, NdError> {
    let mut it = PowerIteration::new(w, v0)?;
    for _ in 0..n_iters {
        if !it.step() {
            break;
        }
    }
    Ok(it.finish())
}

/// Iterates until the relative change of `sigma` drops below `tol` on
/// consecutive steps, or `max_iters` is reached.
pub fn power_iteration_converged(
    w: &Tensor,
    v0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<SpectralEstimate, NdError> {
    let mut it = PowerIteration::new(w, v0)?;
    let mut calm = 0;
    for _ in 0..max_iters {
        let before = it.sigma;
        if !it.step() {
            break;
        }
        if (it.sigma - before).abs() <= tol * it.sigma {
            calm += 1;
            if calm >= 3 {
                break;
            }
        } else {
            calm = 0;
        }
    }
    Ok(it.finish())
}

/// `c * W / sigma_max(W)`, so the linear map is `c`-Lipschitz.
///
/// Matrices whose spectral norm is below [`SIGMA_FLOOR`] pass through.
pub fn apply_spectral_constraint(w: &Tensor, coefficient: f64) -> Result<Tensor, NdError> {
    if !(coefficient > 0.0) {
        return Err(NdError::InvalidArgument(format!(
            "spectral coefficient must be positive, got {coefficient}"
        )));
    }
    let (_, cols) = w.dims2()?;
    let v0 = random_unit_vector(cols, 0x5eed);
    let est = power_iteration_converged(w, &v0, 1e-15, 20_000)?;
    if est.sigma < SIGMA_FLOOR {
        return Ok(w.clone());
    }
    Ok(w.scale(coefficient / est.sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_norm() {
        let est = spectral_norm(&Tensor::identity(3), 5, 1).unwrap();
        assert!((est.sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_norm_is_largest_entry() {
        let w = Tensor::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let est = spectral_norm(&w, 60, 7).unwrap();
        assert!((est.sigma - 3.0).abs() < 1e-9, "{}", est.sigma);
    }

    #[test]
    fn zero_matrix_is_safe() {
        let w = Tensor::zeros(vec![4, 3]);
        let est = spectral_norm(&w, 10, 0).unwrap();
        assert_eq!(est.sigma, 0.0);
        assert!(est.u.iter().all(|x| x.is_finite()));
        let same = apply_spectral_constraint(&w, 2.0).unwrap();
        assert_eq!(same, w);
    }

    #[test]
    fn constraint_scales_diagonal() {
        let w = Tensor::from_rows(&[vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let out = apply_spectral_constraint(&w, 2.0).unwrap();
        for (a, b) in out.data().iter().zip(&[2.0, 0.0, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let unit = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.5]]).unwrap();
        let out = apply_spectral_constraint(&unit, 2.0).unwrap();
        for (a, b) in out.data().iter().zip(unit.data()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_iterations_rejected() {
        assert!(spectral_norm(&Tensor::identity(2), 0, 0).is_err());
    }

    #[test]
    fn estimate_is_consistent_with_vectors() {
        let w = Tensor::from_rows(&[vec![1.0, 2.0, 0.5], vec![-0.3, 0.7, 1.1]]).unwrap();
        let est = spectral_norm(&w, 30, 3).unwrap();
        let mut wv = vec![0.0; 2];
        mat_vec(w.data(), 2, 3, &est.v, &mut wv);
        let utwv: f64 = wv.iter().zip(&est.u).map(|(a, b)| a * b).sum();
        assert!((utwv - est.sigma).abs() < 1e-12);
    }
}
