use serde::{Deserialize, Serialize};

use super::nn::Param;
use super::NdError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments for an ordered parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Param]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        }
    }

    /// Applies one update using each parameter's accumulated gradient.
    ///
    /// Parameters without a gradient buffer are treated as having a zero
    /// gradient. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<(), NdError> {
        if params.len() != self.first_moment.len() {
            return Err(NdError::InvalidArgument(format!(
                "optimizer tracks {} parameters, got {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.first_moment) {
            if p.value.len() != m.len() {
                return Err(NdError::ShapeMismatch {
                    op: "adam_step",
                    lhs: vec![m.len()],
                    rhs: p.value.shape().to_vec(),
                });
            }
            if let Some(g) = p.value.grad() {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(NdError::NonFiniteGradient {
                        param: p.name.clone(),
                    });
                }
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let Some(g) = p.value.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let data = p.value.data_mut();
            for i in 0..data.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                data[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
