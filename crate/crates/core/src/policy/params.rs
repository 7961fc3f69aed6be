use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Option<Matrix> {
        (data.len() == rows * cols).then_some(Matrix { rows, cols, data })
    }

    /// Entries uniform in `[-scale, scale]`.
    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut StreamRng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Low-rank additive update to the output projection: the effective output
/// weights are `W + down · up` while enabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub down: Matrix,
    pub up: Matrix,
    pub enabled: bool,
}

/// Architecture sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub vocab: usize,
    pub context: usize,
    pub embed: usize,
    pub hidden: usize,
    pub rank: usize,
}

impl PolicyDims {
    pub const DEFAULT_CONTEXT: usize = 8;
    pub const DEFAULT_EMBED: usize = 32;
    pub const DEFAULT_HIDDEN: usize = 64;
    pub const DEFAULT_RANK: usize = 8;

    pub fn with_vocab(vocab: usize) -> PolicyDims {
        PolicyDims {
            vocab,
            context: Self::DEFAULT_CONTEXT,
            embed: Self::DEFAULT_EMBED,
            hidden: Self::DEFAULT_HIDDEN,
            rank: Self::DEFAULT_RANK,
        }
    }
}

/// Parameters of the fixed-window neural n-gram policy.
///
/// The same struct doubles as the gradient and optimizer-moment container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub context: usize,
    pub embeddings: Matrix,
    pub hidden_weights: Matrix,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Matrix,
    pub output_bias: Vec<f64>,
    pub adapter: Option<Adapter>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParamsError {
    #[error("inconsistent parameter shapes: {0}")]
    Shape(&'static str),
    #[error("non-finite parameter value")]
    NonFinite,
}

impl PolicyParams {
    /// All-zero weights: every next-token distribution is uniform.
    pub fn zeros(dims: PolicyDims) -> PolicyParams {
        PolicyParams {
            context: dims.context,
            embeddings: Matrix::zeros(dims.vocab, dims.embed),
            hidden_weights: Matrix::zeros(dims.context * dims.embed, dims.hidden),
            hidden_bias: vec![0.0; dims.hidden],
            output_weights: Matrix::zeros(dims.hidden, dims.vocab),
            output_bias: vec![0.0; dims.vocab],
            adapter: None,
        }
    }

    /// Scaled uniform initialisation; biases start at zero.
    pub fn init(dims: PolicyDims, rng: &mut StreamRng) -> PolicyParams {
        let in_dim = (dims.context * dims.embed) as f64;
        PolicyParams {
            context: dims.context,
            embeddings: Matrix::uniform(dims.vocab, dims.embed, 0.5, rng),
            hidden_weights: Matrix::uniform(dims.context * dims.embed, dims.hidden, 1.0 / libm::sqrt(in_dim), rng),
            hidden_bias: vec![0.0; dims.hidden],
            output_weights: Matrix::uniform(dims.hidden, dims.vocab, 1.0 / libm::sqrt(dims.hidden as f64), rng),
            output_bias: vec![0.0; dims.vocab],
            adapter: None,
        }
    }

    pub fn dims(&self) -> PolicyDims {
        PolicyDims {
            vocab: self.embeddings.rows(),
            context: self.context,
            embed: self.embeddings.cols(),
            hidden: self.hidden_bias.len(),
            rank: self.adapter.as_ref().map_or(0, |a| a.up.rows()),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.output_bias.len()
    }

    /// Fresh adapter: `down` small random, `up` zero, so the effective
    /// weights are unchanged until training moves `up`.
    pub fn attach_adapter(&mut self, rank: usize, rng: &mut StreamRng) {
        let hidden = self.hidden_bias.len();
        self.adapter = Some(Adapter {
            down: Matrix::uniform(hidden, rank, 1.0 / libm::sqrt(hidden as f64), rng),
            up: Matrix::zeros(rank, self.vocab_size()),
            enabled: true,
        });
    }

    /// Folds an enabled adapter into the output weights and removes it.
    pub fn merge_adapter(&mut self) {
        if let Some(adapter) = self.adapter.take() {
            if !adapter.enabled {
                return;
            }
            let (h, r, v) = (adapter.down.rows(), adapter.down.cols(), adapter.up.cols());
            for i in 0..h {
                for k in 0..r {
                    let a = adapter.down.get(i, k);
                    if a == 0.0 {
                        continue;
                    }
                    let row = self.output_weights.row_mut(i);
                    for (j, w) in row.iter_mut().enumerate().take(v) {
                        *w += a * adapter.up.get(k, j);
                    }
                }
            }
        }
    }

    /// Zeroed copy with identical shapes (adapter included).
    pub fn zeros_like(&self) -> PolicyParams {
        let mut z = PolicyParams::zeros(PolicyDims { rank: 0, ..self.dims() });
        z.adapter = self.adapter.as_ref().map(|a| Adapter {
            down: Matrix::zeros(a.down.rows(), a.down.cols()),
            up: Matrix::zeros(a.up.rows(), a.up.cols()),
            enabled: a.enabled,
        });
        z
    }

    /// Every tensor as a flat slice, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.embeddings.data(),
            self.hidden_weights.data(),
            &self.hidden_bias,
            self.output_weights.data(),
            &self.output_bias,
        ];
        if let Some(a) = &self.adapter {
            out.push(a.down.data());
            out.push(a.up.data());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.embeddings.data_mut(),
            self.hidden_weights.data_mut(),
            &mut self.hidden_bias,
            self.output_weights.data_mut(),
            &mut self.output_bias,
        ];
        if let Some(a) = &mut self.adapter {
            out.push(a.down.data_mut());
            out.push(a.up.data_mut());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Flat view of the parameter at global index `i` (tensor order).
    pub fn param_mut(&mut self, mut i: usize) -> Option<&mut f64> {
        for t in self.tensors_mut() {
            if i < t.len() {
                return Some(&mut t[i]);
            }
            i -= t.len();
        }
        None
    }

    pub fn param(&self, mut i: usize) -> Option<f64> {
        for t in self.tensors() {
            if i < t.len() {
                return Some(t[i]);
            }
            i -= t.len();
        }
        None
    }

    /// `self += scale * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Bit patterns of every parameter, for exact comparisons.
    pub fn bits(&self) -> Vec<u64> {
        self.tensors().iter().flat_map(|t| t.iter().map(|x| x.to_bits())).collect()
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let d = self.dims();
        if d.vocab == 0 || d.embed == 0 || d.hidden == 0 || d.context == 0 {
            return Err(ParamsError::Shape("zero dimension"));
        }
        if self.hidden_weights.rows() != d.context * d.embed || self.hidden_weights.cols() != d.hidden {
            return Err(ParamsError::Shape("hidden weights"));
        }
        if self.output_weights.rows() != d.hidden || self.output_weights.cols() != d.vocab {
            return Err(ParamsError::Shape("output weights"));
        }
        if self.output_bias.len() != d.vocab {
            return Err(ParamsError::Shape("output bias"));
        }
        if let Some(a) = &self.adapter {
            if a.down.rows() != d.hidden || a.up.cols() != d.vocab || a.down.cols() != a.up.rows() {
                return Err(ParamsError::Shape("adapter"));
            }
        }
        if !self.all_finite() {
            return Err(ParamsError::NonFinite);
        }
        Ok(())
    }

    /// Same base architecture; adapters are not compared.
    pub fn same_base_shape(&self, other: &PolicyParams) -> bool {
        self.context == other.context
            && self.embeddings.same_shape(&other.embeddings)
            && self.hidden_weights.same_shape(&other.hidden_weights)
            && self.output_weights.same_shape(&other.output_weights)
    }
}

/// Deep copy that cannot be mutated; serves as the reference policy.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenPolicy {
    params: PolicyParams,
}

impl FrozenPolicy {
    pub fn params(&self) -> &PolicyParams {
        &self.params
    }
}

impl core::ops::Deref for FrozenPolicy {
    type Target = PolicyParams;

    fn deref(&self) -> &PolicyParams {
        &self.params
    }
}

pub fn clone_frozen(params: &PolicyParams) -> FrozenPolicy {
    FrozenPolicy { params: params.clone() }
}
