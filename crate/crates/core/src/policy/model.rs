//! Forward pass, exact sequence log-probabilities and their gradients.
//!
//! Architecture: the last `k` tokens (BOS-padded) are embedded and
//! concatenated, passed through one tanh layer, then projected to vocabulary
//! logits (plus the low-rank adapter when enabled).

use alloc::vec;
use alloc::vec::Vec;

use super::params::PolicyParams;
use super::tokenizer::{TokenId, BOS, SEP};

/// Which parameters receive gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradMode {
    #[default]
    Full,
    /// Only the adapter matrices; everything else gets exactly zero.
    AdapterOnly,
}

/// Intermediate values of one forward step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    pub window: Vec<TokenId>,
    pub hidden: Vec<f64>,
    pub adapter_mid: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// The `k` tokens preceding position `end` of `seq`, left-padded with BOS.
pub fn context_window(seq: &[TokenId], end: usize, k: usize) -> Vec<TokenId> {
    let start = end.saturating_sub(k);
    let mut w = vec![BOS; k - (end - start)];
    w.extend_from_slice(&seq[start..end]);
    w
}

pub fn forward(params: &PolicyParams, window: &[TokenId]) -> Activations {
    let d = params.embeddings.cols();
    let h = params.hidden_bias.len();
    let v = params.output_bias.len();

    let mut pre = params.hidden_bias.clone();
    for (slot, &tok) in window.iter().enumerate() {
        let emb = params.embeddings.row(tok);
        for (i, &e) in emb.iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            let row = params.hidden_weights.row(slot * d + i);
            for (a, w) in pre.iter_mut().zip(row) {
                *a += e * w;
            }
        }
    }
    let hidden: Vec<f64> = pre.into_iter().map(libm::tanh).collect();

    let mut logits = params.output_bias.clone();
    for (i, &hv) in hidden.iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        for (z, w) in logits.iter_mut().zip(params.output_weights.row(i)) {
            *z += hv * w;
        }
    }

    let adapter_mid = match &params.adapter {
        Some(a) if a.enabled => {
            let r = a.down.cols();
            let mut mid = vec![0.0; r];
            for (i, &hv) in hidden.iter().enumerate() {
                for (m, w) in mid.iter_mut().zip(a.down.row(i)) {
                    *m += hv * w;
                }
            }
            for (k, &mv) in mid.iter().enumerate() {
                for (z, w) in logits.iter_mut().zip(a.up.row(k)) {
                    *z += mv * w;
                }
            }
            Some(mid)
        }
        _ => None,
    };
    debug_assert_eq!(logits.len(), v);
    debug_assert_eq!(hidden.len(), h);
    Activations { window: window.to_vec(), hidden, adapter_mid, logits }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| libm::exp(z - max)).sum();
    let lse = max + libm::log(sum);
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(libm::exp).collect()
}

/// Next-token distribution given the full history (only the last `k`
/// tokens matter).
pub fn next_token_distribution(params: &PolicyParams, context: &[TokenId]) -> Vec<f64> {
    let window = context_window(context, context.len(), params.context);
    softmax(&forward(params, &window).logits)
}

fn full_sequence(prompt: &[TokenId], completion: &[TokenId]) -> Vec<TokenId> {
    let mut seq = Vec::with_capacity(prompt.len() + 1 + completion.len());
    seq.extend_from_slice(prompt);
    seq.push(SEP);
    seq.extend_from_slice(completion);
    seq
}

/// `log π(completion | prompt)`: the sum over completion positions of the
/// log-softmax at the realised token, conditioning on
/// `prompt ⧺ SEP ⧺ completion[..t]`.
pub fn sequence_logprob(params: &PolicyParams, prompt: &[TokenId], completion: &[TokenId]) -> f64 {
    let seq = full_sequence(prompt, completion);
    let offset = prompt.len() + 1;
    let mut total = 0.0;
    for (t, &y) in completion.iter().enumerate() {
        let window = context_window(&seq, offset + t, params.context);
        let act = forward(params, &window);
        total += log_softmax(&act.logits)[y];
    }
    total
}

/// Adds `scale · ∇ log π(completion | prompt)` into `grads` and returns the
/// log-probability.
pub fn accumulate_logprob_grad(
    params: &PolicyParams,
    prompt: &[TokenId],
    completion: &[TokenId],
    scale: f64,
    mode: GradMode,
    grads: &mut PolicyParams,
) -> f64 {
    let seq = full_sequence(prompt, completion);
    let offset = prompt.len() + 1;
    let mut total = 0.0;
    let mut dz = vec![0.0; params.vocab_size()];
    for (t, &y) in completion.iter().enumerate() {
        let window = context_window(&seq, offset + t, params.context);
        let act = forward(params, &window);
        let logp = log_softmax(&act.logits);
        total += logp[y];
        // d log p_y / dz = onehot(y) - softmax(z)
        for (g, lp) in dz.iter_mut().zip(&logp) {
            *g = -scale * libm::exp(*lp);
        }
        dz[y] += scale;
        backward(params, &act, &dz, mode, grads);
    }
    total
}

/// Backpropagates a logit gradient `dz` through one forward step.
pub fn backward(params: &PolicyParams, act: &Activations, dz: &[f64], mode: GradMode, grads: &mut PolicyParams) {
    let h = act.hidden.len();
    let mut dhidden = vec![0.0; h];

    if let (Some(adapter), Some(mid), Some(gad)) = (&params.adapter, &act.adapter_mid, grads.adapter.as_mut()) {
        let r = mid.len();
        let mut dmid = vec![0.0; r];
        for k in 0..r {
            let up_row = adapter.up.row(k);
            let g_row = gad.up.row_mut(k);
            let mut acc = 0.0;
            for ((g, &z), &u) in g_row.iter_mut().zip(dz).zip(up_row) {
                *g += mid[k] * z;
                acc += z * u;
            }
            dmid[k] = acc;
        }
        for (i, dh) in dhidden.iter_mut().enumerate() {
            let hv = act.hidden[i];
            let down_row = adapter.down.row(i);
            let g_row = gad.down.row_mut(i);
            for k in 0..r {
                g_row[k] += hv * dmid[k];
                *dh += down_row[k] * dmid[k];
            }
        }
    }
    if mode == GradMode::AdapterOnly {
        return;
    }

    for (g, &z) in grads.output_bias.iter_mut().zip(dz) {
        *g += z;
    }
    for (i, dh) in dhidden.iter_mut().enumerate() {
        let hv = act.hidden[i];
        let w_row = params.output_weights.row(i);
        let g_row = grads.output_weights.row_mut(i);
        let mut acc = 0.0;
        for ((g, &z), &w) in g_row.iter_mut().zip(dz).zip(w_row) {
            *g += hv * z;
            acc += w * z;
        }
        *dh += acc;
    }

    let dpre: Vec<f64> = dhidden.iter().zip(&act.hidden).map(|(g, hv)| g * (1.0 - hv * hv)).collect();
    for (g, d) in grads.hidden_bias.iter_mut().zip(&dpre) {
        *g += d;
    }
    let d = params.embeddings.cols();
    for (slot, &tok) in act.window.iter().enumerate() {
        for i in 0..d {
            let row_idx = slot * d + i;
            let e = params.embeddings.get(tok, i);
            let w_row = params.hidden_weights.row(row_idx);
            let g_row = grads.hidden_weights.row_mut(row_idx);
            let mut acc = 0.0;
            for ((g, &dp), &w) in g_row.iter_mut().zip(&dpre).zip(w_row) {
                *g += e * dp;
                acc += w * dp;
            }
            let ge = grads.embeddings.row_mut(tok);
            ge[i] += acc;
        }
    }
}
