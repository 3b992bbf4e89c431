use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spectral::{power_iteration_converged, random_unit_vector, SIGMA_FLOOR};
use super::tape::{Gradients, Tape, Var};
use super::{NdError, Tensor};

/// A named trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

/// Anything owning trainable parameters, in a stable order.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.value.zero_grad();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, activation: Activation, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            activation,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<(), NdError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(NdError::InvalidArgument(format!(
                "all MLP dims must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Persistent power-iteration state for one weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub coefficient: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: f64,
}

/// Affine layer `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub spectral: Option<SpectralState>,
}

impl Linear {
    /// Uniform `±1/sqrt(fan_in)` initialization.
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = (0..input * output).map(|_| rng.gen_range(-bound..bound)).collect();
        let b = (0..output).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            weight: Param::new(format!("{name}.weight"), Tensor::matrix(input, output, w).expect("shape")),
            bias: Param::new(format!("{name}.bias"), Tensor::row(b)),
            spectral: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.cols()
    }

    /// Re-estimates the largest singular value of the raw weight, warm
    /// started from the stored right singular vector.
    pub fn refresh_spectral(&mut self) -> Result<(), NdError> {
        if let Some(sn) = self.spectral.as_mut() {
            let est = power_iteration_converged(&self.weight.value, &sn.v, 1e-12, 500)?;
            sn.u = est.u;
            sn.v = est.v;
            sn.sigma = est.sigma;
        }
        Ok(())
    }

    /// The weight actually applied in the forward pass.
    pub fn effective_weight(&self) -> Tensor {
        match &self.spectral {
            Some(sn) if sn.sigma >= SIGMA_FLOOR => self.weight.value.scale(sn.coefficient / sn.sigma),
            _ => self.weight.value.clone(),
        }
    }
}

/// Multi-layer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Linear>,
}

/// Tape handles for one forward pass of an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpBinding {
    raw: Vec<(Var, Var)>,
    effective: Vec<Var>,
    trainable: bool,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(name: &str, spec: MlpSpec, rng: &mut R) -> Result<Self, NdError> {
        spec.validate()?;
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden_dims);
        dims.push(spec.output_dim);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{name}.l{i}"), w[0], w[1], rng))
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    /// Wraps every weight matrix in spectral normalization with Lipschitz
    /// coefficient `c`.
    pub fn with_spectral_norm(mut self, coefficient: f64, seed: u64) -> Result<Self, NdError> {
        if !(coefficient > 0.0) {
            return Err(NdError::InvalidArgument(format!(
                "spectral coefficient must be positive, got {coefficient}"
            )));
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let cols = layer.output_dim();
            layer.spectral = Some(SpectralState {
                coefficient,
                u: vec![0.0; layer.input_dim()],
                v: random_unit_vector(cols, seed.wrapping_add(i as u64)),
                sigma: 0.0,
            });
        }
        self.refresh_spectral()?;
        Ok(self)
    }

    pub fn has_spectral_norm(&self) -> bool {
        self.layers.iter().any(|l| l.spectral.is_some())
    }

    pub fn refresh_spectral(&mut self) -> Result<(), NdError> {
        for layer in &mut self.layers {
            layer.refresh_spectral()?;
        }
        Ok(())
    }

    /// Current spectral-norm estimates of the raw weights, if normalized.
    pub fn spectral_sigmas(&self) -> Option<Vec<f64>> {
        self.has_spectral_norm()
            .then(|| self.layers.iter().map(|l| l.spectral.as_ref().map_or(0.0, |s| s.sigma)).collect())
    }

    pub fn effective_weights(&self) -> Vec<Tensor> {
        self.layers.iter().map(Linear::effective_weight).collect()
    }

    /// Records the parameters on `tape`. With `trainable = false` they
    /// enter as constants (no parameter gradients are computed).
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<MlpBinding, NdError> {
        let mut raw = Vec::with_capacity(self.layers.len());
        let mut effective = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (w, b) = if trainable {
                (tape.param(&layer.weight.value)?, tape.param(&layer.bias.value)?)
            } else {
                (
                    tape.constant(layer.weight.value.clone())?,
                    tape.constant(layer.bias.value.clone())?,
                )
            };
            let eff = match &layer.spectral {
                Some(sn) if sn.sigma >= SIGMA_FLOOR => {
                    // sigma(W) = u^T W v with (u, v) held fixed; `W` is in x out
                    // so the outer product is u (in) times v (out).
                    let (rows, cols) = (layer.input_dim(), layer.output_dim());
                    let mut outer = vec![0.0; rows * cols];
                    for i in 0..rows {
                        for j in 0..cols {
                            outer[i * cols + j] = sn.u[i] * sn.v[j];
                        }
                    }
                    let outer = tape.constant(Tensor::matrix(rows, cols, outer)?)?;
                    let prod = tape.mul(w, outer)?;
                    let sigma = tape.sum(prod);
                    let normalized = tape.div(w, sigma)?;
                    tape.scale(normalized, sn.coefficient)
                }
                _ => w,
            };
            raw.push((w, b));
            effective.push(eff);
        }
        Ok(MlpBinding {
            raw,
            effective,
            trainable,
        })
    }

    pub fn forward(&self, tape: &mut Tape, binding: &MlpBinding, x: Var) -> Result<Var, NdError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, (&w, &(_, b))) in binding.effective.iter().zip(&binding.raw).enumerate() {
            let z = tape.matmul(h, w)?;
            h = tape.add(z, b)?;
            if i < last {
                h = match self.spec.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        Ok(h)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, NdError> {
        let mut tape = Tape::new();
        let binding = self.bind(&mut tape, false)?;
        let xv = tape.constant(x.clone())?;
        let y = self.forward(&mut tape, &binding, xv)?;
        Ok(tape.value(y).clone())
    }

    /// Adds this pass's parameter gradients into each parameter's buffer.
    pub fn accumulate_grads(&mut self, grads: &Gradients, binding: &MlpBinding) -> Result<(), NdError> {
        if !binding.trainable {
            return Ok(());
        }
        for (layer, &(w, b)) in self.layers.iter_mut().zip(&binding.raw) {
            if let Some(g) = grads.get(w) {
                layer.weight.value.accumulate_grad(g)?;
            }
            if let Some(g) = grads.get(b) {
                layer.bias.value.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// `target <- tau * self + (1 - tau) * target`.
    pub fn polyak_into(&self, target: &mut Mlp, tau: f64) {
        for (src, dst) in self.layers.iter().zip(target.layers.iter_mut()) {
            for (s, d) in [(&src.weight, &mut dst.weight), (&src.bias, &mut dst.bias)] {
                for (a, b) in s.value.data().iter().zip(d.value.data_mut()) {
                    if tau == 1.0 {
                        *b = *a;
                    } else {
                        *b += tau * (a - *b);
                    }
                }
            }
        }
    }
}

impl Module for Mlp {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
