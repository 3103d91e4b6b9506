//! Fully connected ε-prediction network with hand-written backpropagation.

use rand::Rng;

use crate::denoiser::{check_level, Denoiser};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::schedule::DiffusionSchedule;

/// Sinusoidal embedding of level `t`: interleaved `(sin(t w_k), cos(t w_k))`
/// with frequencies geometrically spaced from `1 / T` up to 1.
pub fn time_embedding(t: usize, total: usize, embed_dim: usize) -> Result<Vec<f64>> {
    if embed_dim < 2 || !embed_dim.is_multiple_of(2) {
        return Err(Error::InvalidRange(format!(
            "embedding dimension must be even and >= 2, got {embed_dim}"
        )));
    }
    if total == 0 || t > total {
        return Err(Error::InvalidRange(format!("level {t} outside 0..={total}")));
    }
    let mut out = Vec::with_capacity(embed_dim);
    write_embedding(t, total, embed_dim, &mut out);
    Ok(out)
}

fn write_embedding(t: usize, total: usize, embed_dim: usize, out: &mut Vec<f64>) {
    let pairs = embed_dim / 2;
    let lowest = 1.0 / total as f64;
    for k in 0..pairs {
        let frac = if pairs == 1 { 0.0 } else { k as f64 / (pairs - 1) as f64 };
        let omega = lowest.powf(1.0 - frac);
        let phase = t as f64 * omega;
        out.push(phase.sin());
        out.push(phase.cos());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || weights.len() != rows * cols || biases.len() != rows {
            return Err(Error::InvalidRange(format!(
                "layer {rows}x{cols} with {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            biases,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.cols)
                .zip(&self.biases)
                .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()),
        );
    }
}

/// Layer stack `[d + embed_dim -> hidden... -> d]`, SiLU on hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidRange("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].rows != pair[1].cols {
                return Err(Error::InvalidRange(format!(
                    "layer output {} does not feed input {}",
                    pair[0].rows, pair[1].cols
                )));
            }
        }
        let p = Self { layers };
        if p.input_dim() <= p.output_dim() || !(p.input_dim() - p.output_dim()).is_multiple_of(2) {
            return Err(Error::InvalidRange(format!(
                "input {} must exceed output {} by an even embedding width",
                p.input_dim(),
                p.output_dim()
            )));
        }
        if p.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidRange("non-finite parameter".into()));
        }
        Ok(p)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(dim: usize, embed_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if dim == 0 || embed_dim < 2 || !embed_dim.is_multiple_of(2) || hidden.contains(&0) {
            return Err(Error::InvalidRange(format!(
                "bad architecture: dim {dim}, embed {embed_dim}, hidden {hidden:?}"
            )));
        }
        let mut widths = vec![dim + embed_dim];
        widths.extend_from_slice(hidden);
        widths.push(dim);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
                Layer {
                    rows: fan_out,
                    cols: fan_in,
                    weights,
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    pub fn embed_dim(&self) -> usize {
        self.input_dim() - self.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All parameters in a fixed order: per layer, weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub(crate) fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.params_mut().zip(other.params()) {
            *a += b;
        }
    }

    fn input_vector(&self, x_t: &[f64], t: usize, total: usize) -> Result<Vec<f64>> {
        if x_t.len() != self.output_dim() {
            return Err(Error::shape(self.output_dim(), x_t.len()));
        }
        if t > total {
            return Err(Error::InvalidRange(format!("level {t} outside 0..={total}")));
        }
        let mut input = Vec::with_capacity(self.input_dim());
        input.extend_from_slice(x_t);
        write_embedding(t, total, self.embed_dim(), &mut input);
        Ok(input)
    }

    /// Forward pass; `total` is the schedule length used for the time embedding.
    pub fn forward(&self, x_t: &[f64], t: usize, total: usize) -> Result<Vec<f64>> {
        let mut act = self.input_vector(x_t, t, total)?;
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&act, &mut next);
            if i != last {
                next.iter_mut().for_each(|z| *z = silu(*z));
            }
            std::mem::swap(&mut act, &mut next);
        }
        Ok(act)
    }

    /// Forward pass keeping pre-activations, then backpropagates `out_grad`
    /// (dL/d output) into `grads`. Returns the network output.
    pub(crate) fn forward_backward(
        &self,
        x_t: &[f64],
        t: usize,
        total: usize,
        out_grad: impl FnOnce(&[f64]) -> Vec<f64>,
        grads: &mut MlpParams,
    ) -> Result<Vec<f64>> {
        let last = self.layers.len() - 1;
        // inputs[l] feeds layer l; pre[l] is its pre-activation.
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(self.input_vector(x_t, t, total)?);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(&inputs[i], &mut z);
            if i != last {
                inputs.push(z.iter().map(|&v| silu(v)).collect());
            }
            pre.push(z);
        }
        let output = pre[last].clone();
        let mut delta = out_grad(&output);

        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let a = &inputs[l];
            for ((d, gb), grow) in delta
                .iter()
                .zip(g.biases.iter_mut())
                .zip(g.weights.chunks_exact_mut(layer.cols))
            {
                *gb += d;
                for (gw, x) in grow.iter_mut().zip(a) {
                    *gw += d * x;
                }
            }
            if l > 0 {
                let mut back = vec![0.0; layer.cols];
                for (d, row) in delta.iter().zip(layer.weights.chunks_exact(layer.cols)) {
                    for (b, w) in back.iter_mut().zip(row) {
                        *b += d * w;
                    }
                }
                for (b, z) in back.iter_mut().zip(&pre[l - 1]) {
                    *b *= silu_grad(*z);
                }
                delta = back;
            }
        }
        Ok(output)
    }
}

/// [`MlpParams`] as a [`Denoiser`]; the time embedding uses the schedule length.
#[derive(Debug, Clone)]
pub struct MlpDenoiser {
    params: MlpParams,
}

impl MlpDenoiser {
    pub fn new(params: MlpParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }
}

pub fn mlp_eps(params: &MlpParams, x_t: &Grid, t: usize, total: usize) -> Result<Grid> {
    let out = params.forward(x_t.as_slice(), t, total)?;
    Grid::new(x_t.shape(), out)
}

impl Denoiser for MlpDenoiser {
    fn predict_eps(&self, x_t: &Grid, t: usize, schedule: &DiffusionSchedule) -> Result<Grid> {
        check_level(t, schedule)?;
        mlp_eps(&self.params, x_t, t, schedule.steps())
    }
}
