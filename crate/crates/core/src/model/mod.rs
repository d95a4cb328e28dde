//! DeepFM forward/backward: a second-order factorization-machine term plus
//! an MLP over concatenated slot embeddings, trained with log loss.

pub mod metrics;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepFmConfig {
    /// Feature fields per example.
    pub num_slots: usize,
    /// Embedding width.
    pub dim: usize,
    /// Hidden widths then the final width-1 output; empty disables the MLP.
    pub mlp_layers: Vec<usize>,
}

impl DeepFmConfig {
    pub fn new(num_slots: usize, dim: usize, mlp_layers: Vec<usize>) -> Self {
        Self {
            num_slots,
            dim,
            mlp_layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_slots == 0 || self.dim == 0 {
            return Err(Error::config("num_slots and dim must be >= 1"));
        }
        if let Some(&last) = self.mlp_layers.last() {
            if last != 1 {
                return Err(Error::config("final mlp layer width must be 1"));
            }
            if self.mlp_layers.iter().any(|&w| w == 0) {
                return Err(Error::config("mlp layer widths must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn mlp_input_width(&self) -> usize {
        self.num_slots * self.dim
    }
}

/// One fully connected layer, weights row-major `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<S> {
    pub w: Vec<S>,
    pub b: Vec<S>,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Network weights: the global bias and the MLP stack. First-order linear
/// terms are sparse parameters and live in width-1 embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<S> {
    pub bias: S,
    pub layers: Vec<DenseLayer<S>>,
}

impl<S: Scalar> DenseParams<S> {
    pub fn zeros(cfg: &DeepFmConfig) -> Self {
        Self::build(cfg, |_, _| S::zero())
    }

    /// Xavier-uniform weight init, zero biases.
    pub fn init<R: Rng>(cfg: &DeepFmConfig, rng: &mut R) -> Self {
        Self::build(cfg, |fan_in, fan_out| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            S::from_f64_lossy(rng.random_range(-bound..=bound))
        })
    }

    fn build(cfg: &DeepFmConfig, mut weight: impl FnMut(usize, usize) -> S) -> Self {
        let mut layers = Vec::with_capacity(cfg.mlp_layers.len());
        let mut in_dim = cfg.mlp_input_width();
        for &out_dim in &cfg.mlp_layers {
            let w = (0..out_dim * in_dim)
                .map(|_| weight(in_dim, out_dim))
                .collect();
            layers.push(DenseLayer {
                w,
                b: vec![S::zero(); out_dim],
                in_dim,
                out_dim,
            });
            in_dim = out_dim;
        }
        Self {
            bias: S::zero(),
            layers,
        }
    }

    /// Total scalars in the canonical flat layout
    /// `[bias, layer0.w, layer0.b, layer1.w, ...]`.
    pub fn flat_len(cfg: &DeepFmConfig) -> usize {
        let mut len = 1;
        let mut in_dim = cfg.mlp_input_width();
        for &out_dim in &cfg.mlp_layers {
            len += out_dim * in_dim + out_dim;
            in_dim = out_dim;
        }
        len
    }

    pub fn flatten(&self) -> Vec<S> {
        let mut out = vec![self.bias];
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    pub fn from_flat(cfg: &DeepFmConfig, flat: &[S]) -> Result<Self> {
        if flat.len() != Self::flat_len(cfg) {
            return Err(Error::contract(format!(
                "flat dense width {} does not match config ({})",
                flat.len(),
                Self::flat_len(cfg)
            )));
        }
        let mut params = Self::zeros(cfg);
        params.bias = flat[0];
        let mut at = 1;
        for layer in &mut params.layers {
            let (w_len, b_len) = (layer.w.len(), layer.b.len());
            layer.w.copy_from_slice(&flat[at..at + w_len]);
            at += w_len;
            layer.b.copy_from_slice(&flat[at..at + b_len]);
            at += b_len;
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<S> {
    pub logit: S,
    pub probability: S,
}

/// Forward result plus the caches backward needs.
#[derive(Debug, Clone)]
pub struct Forward<S> {
    pub prediction: Prediction<S>,
    /// Per-dimension sums over slots.
    sum_embed: Vec<S>,
    /// Activations per layer; index 0 is the concatenated input.
    activations: Vec<Vec<S>>,
    /// Pre-activation values per layer.
    pre_activations: Vec<Vec<S>>,
}

/// Gradients of the log loss for one example.
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    pub bias: S,
    pub layer_w: Vec<Vec<S>>,
    pub layer_b: Vec<Vec<S>>,
    /// Per-slot embedding gradients.
    pub embeddings: Vec<Vec<S>>,
    /// Per-slot linear-term gradients.
    pub linear: Vec<S>,
}

impl<S: Scalar> Gradients<S> {
    /// Dense portion in the canonical flat layout.
    pub fn flatten_dense(&self) -> Vec<S> {
        let mut out = vec![self.bias];
        for (w, b) in self.layer_w.iter().zip(&self.layer_b) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// Second-order FM interaction: `1/2 * sum_d [(sum_i v_id)^2 - sum_i v_id^2]`,
/// algebraically equal to the sum of pairwise dot products.
pub fn fm2<S: Scalar>(embeddings: &[Vec<S>], dim: usize) -> S {
    let half = S::from_f64_lossy(0.5);
    let mut total = S::zero();
    for d in 0..dim {
        let mut sum = S::zero();
        let mut sum_sq = S::zero();
        for v in embeddings {
            sum += v[d];
            sum_sq += v[d] * v[d];
        }
        total += half * (sum * sum - sum_sq);
    }
    total
}

/// Computes the logit `bias + sum(linear) + FM2 + MLP(concat(embeddings))`
/// and its sigmoid probability. Filtered slots arrive as zero vectors.
pub fn forward<S: Scalar>(
    cfg: &DeepFmConfig,
    embeddings: &[Vec<S>],
    linear_terms: &[S],
    dense: &DenseParams<S>,
) -> Result<Forward<S>> {
    if embeddings.len() != cfg.num_slots || linear_terms.len() != cfg.num_slots {
        return Err(Error::contract(format!(
            "expected {} slots, got {} embeddings / {} linear terms",
            cfg.num_slots,
            embeddings.len(),
            linear_terms.len()
        )));
    }
    if let Some(bad) = embeddings.iter().find(|v| v.len() != cfg.dim) {
        return Err(Error::contract(format!(
            "embedding width {} does not match dim {}",
            bad.len(),
            cfg.dim
        )));
    }

    let mut sum_embed = vec![S::zero(); cfg.dim];
    for v in embeddings {
        for d in 0..cfg.dim {
            sum_embed[d] += v[d];
        }
    }

    let mut logit = dense.bias + fm2(embeddings, cfg.dim);
    for &t in linear_terms {
        logit += t;
    }

    let mut x = Vec::with_capacity(cfg.mlp_input_width());
    for v in embeddings {
        x.extend_from_slice(v);
    }
    let mut activations = vec![x];
    let mut pre_activations = Vec::with_capacity(dense.layers.len());
    for (l, layer) in dense.layers.iter().enumerate() {
        let input = &activations[l];
        let mut z = layer.b.clone();
        for o in 0..layer.out_dim {
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            let mut acc = S::zero();
            for (wi, xi) in row.iter().zip(input) {
                acc += *wi * *xi;
            }
            z[o] += acc;
        }
        let is_last = l + 1 == dense.layers.len();
        let a = if is_last {
            z.clone()
        } else {
            z.iter().map(|&v| v.max(S::zero())).collect()
        };
        pre_activations.push(z);
        activations.push(a);
    }
    if let Some(out) = activations.last() {
        if activations.len() > 1 {
            logit += out[0];
        }
    }

    let probability = sigmoid(logit);
    Ok(Forward {
        prediction: Prediction {
            logit,
            probability,
        },
        sum_embed,
        activations,
        pre_activations,
    })
}

/// Log-loss gradients for all parameter groups; `dL/dlogit = p - y`.
pub fn backward<S: Scalar>(
    cfg: &DeepFmConfig,
    fwd: &Forward<S>,
    embeddings: &[Vec<S>],
    label: u8,
    dense: &DenseParams<S>,
) -> Gradients<S> {
    let y = S::from_f64_lossy(f64::from(label));
    let delta = fwd.prediction.probability - y;

    // Backprop through the MLP stack.
    let num_layers = dense.layers.len();
    let mut layer_w = vec![Vec::new(); num_layers];
    let mut layer_b = vec![Vec::new(); num_layers];
    let mut input_grad = vec![S::zero(); cfg.mlp_input_width()];
    if num_layers > 0 {
        let mut upstream = vec![delta];
        for l in (0..num_layers).rev() {
            let layer = &dense.layers[l];
            let input = &fwd.activations[l];
            let mut dz = upstream;
            if l + 1 != num_layers {
                for (g, z) in dz.iter_mut().zip(&fwd.pre_activations[l]) {
                    if *z <= S::zero() {
                        *g = S::zero();
                    }
                }
            }
            let mut dw = vec![S::zero(); layer.w.len()];
            for o in 0..layer.out_dim {
                for i in 0..layer.in_dim {
                    dw[o * layer.in_dim + i] = dz[o] * input[i];
                }
            }
            let mut dinput = vec![S::zero(); layer.in_dim];
            for o in 0..layer.out_dim {
                let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    dinput[i] += row[i] * dz[o];
                }
            }
            layer_w[l] = dw;
            layer_b[l] = dz;
            upstream = dinput;
        }
        input_grad = upstream;
    }

    // FM2 gradient per slot: delta * (sum over slots - own vector),
    // plus the MLP's gradient on this slot's input slice.
    let mut emb_grads = Vec::with_capacity(cfg.num_slots);
    for (s, v) in embeddings.iter().enumerate() {
        let mut g = Vec::with_capacity(cfg.dim);
        for d in 0..cfg.dim {
            g.push(delta * (fwd.sum_embed[d] - v[d]) + input_grad[s * cfg.dim + d]);
        }
        emb_grads.push(g);
    }

    Gradients {
        bias: delta,
        layer_w,
        layer_b,
        embeddings: emb_grads,
        linear: vec![delta; cfg.num_slots],
    }
}
