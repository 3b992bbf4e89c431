//! Post-hoc checks on learned posterior parameters.

use serde::{Deserialize, Serialize};

use crate::ndmath::Tensor;
use crate::{Error, Result};

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
/// in descending order.
pub fn symmetric_eigenvalues(m: &Tensor) -> Result<Vec<f64>> {
    let (n, c) = m.dims2()?;
    if n != c {
        return Err(Error::DimMismatch {
            context: "symmetric eigenvalues".into(),
            expected: n,
            actual: c,
        });
    }
    let mut a: Vec<Vec<f64>> = (0..n).map(|r| m.row_slice(r).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let (cs, sn) = (1.0 / (t * t + 1.0).sqrt(), t / (t * t + 1.0).sqrt());
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Singular values of any matrix, descending.
pub fn singular_values(m: &Tensor) -> Result<Vec<f64>> {
    let gram = m.transpose()?.matmul(m)?;
    Ok(symmetric_eigenvalues(&gram)?.into_iter().map(|e| e.max(0.0).sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Singular values of `A * W`.
    pub singular_values: Vec<f64>,
    /// `||M M^T - I||_F` with `M = A W / mean singular value`. Zero iff the
    /// learned map undoes the projection up to scale, rotation and reflection.
    pub defect: f64,
}

/// How well a learned linear goal map `A` inverts an observation projection `W`.
pub fn projection_recovery(a: &Tensor, w: &Tensor) -> Result<RecoveryReport> {
    let m = a.matmul(w)?;
    let singular_values = singular_values(&m)?;
    let mean = singular_values.iter().sum::<f64>() / singular_values.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::NonFinite("A * W has no nonzero singular values".into()));
    }
    let m = m.scale(1.0 / mean);
    let mut gram = m.matmul(&m.transpose()?)?;
    for i in 0..gram.rows() {
        gram.set(i, i, gram.get(i, i) - 1.0);
    }
    Ok(RecoveryReport {
        singular_values,
        defect: gram.frobenius_norm(),
    })
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length series of length >= 2".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean).powi(2);
        dy += (b - mean).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        return Ok(0.0);
    }
    Ok(num / (dx * dy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
