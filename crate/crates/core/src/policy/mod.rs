//! The toy generation policy: tokenizer, parameters, scoring and sampling.

mod model;
mod params;
mod tokenizer;

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use model::{
    accumulate_logprob_grad, backward, context_window, forward, log_softmax, next_token_distribution,
    sequence_logprob, softmax, Activations, GradMode,
};
pub use params::{clone_frozen, Adapter, FrozenPolicy, Matrix, ParamsError, PolicyDims, PolicyParams};
pub use tokenizer::{TokenId, Tokenizer, TokenizerError, BOS, EOS, RESERVED, SEP, UNK};

use crate::rng::rng_from_seed;

/// Decoding settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub max_new_tokens: usize,
    pub temperature: f64,
    /// `None` keeps the whole vocabulary.
    pub top_k: Option<usize>,
    pub seed: u64,
    /// Argmax decoding; temperature and top-k are ignored.
    #[serde(default)]
    pub greedy: bool,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { max_new_tokens: 32, temperature: 0.7, top_k: Some(20), seed: 0, greedy: false }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("max_new_tokens must be at least 1")]
    MaxNewTokens,
    #[error("top_k must be at least 1")]
    TopK,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GenerationError::Temperature(self.temperature));
        }
        if self.max_new_tokens == 0 {
            return Err(GenerationError::MaxNewTokens);
        }
        if self.top_k == Some(0) {
            return Err(GenerationError::TopK);
        }
        Ok(())
    }
}

/// BOS, UNK and SEP are never emitted.
fn emittable(token: TokenId) -> bool {
    token != BOS && token != UNK && token != SEP
}

/// Autoregressive decoding until EOS (included) or `max_new_tokens`.
pub fn sample(params: &PolicyParams, prompt: &[TokenId], gp: &GenerationParams) -> Result<Vec<TokenId>, GenerationError> {
    gp.validate()?;
    let mut rng = rng_from_seed(gp.seed);
    let mut seq: Vec<TokenId> = Vec::with_capacity(prompt.len() + 1 + gp.max_new_tokens);
    seq.extend_from_slice(prompt);
    seq.push(SEP);
    let mut out = Vec::new();
    for _ in 0..gp.max_new_tokens {
        let window = context_window(&seq, seq.len(), params.context);
        let logits = forward(params, &window).logits;
        let next = if gp.greedy { argmax_token(&logits) } else { draw_token(&logits, gp, &mut rng) };
        out.push(next);
        seq.push(next);
        if next == EOS {
            break;
        }
    }
    Ok(out)
}

fn argmax_token(logits: &[f64]) -> TokenId {
    let mut best = EOS;
    for (t, &z) in logits.iter().enumerate() {
        if emittable(t) && z > logits[best] {
            best = t;
        }
    }
    best
}

fn draw_token(logits: &[f64], gp: &GenerationParams, rng: &mut crate::rng::StreamRng) -> TokenId {
    let mut candidates: Vec<(TokenId, f64)> =
        logits.iter().enumerate().filter(|(t, _)| emittable(*t)).map(|(t, &z)| (t, z / gp.temperature)).collect();
    if let Some(k) = gp.top_k {
        // stable sort keeps lower ids first among equal logits
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
        candidates.truncate(k);
    }
    let max = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = candidates.iter().map(|c| libm::exp(c.1 - max)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (c, w) in candidates.iter().zip(&weights) {
        if u < *w {
            return c.0;
        }
        u -= w;
    }
    candidates.last().map_or(EOS, |c| c.0)
}

/// Tokenizer plus parameters: everything needed to score and generate text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub tokenizer: Tokenizer,
    pub params: PolicyParams,
}

impl Policy {
    pub fn generate(&self, prompt: &str, gp: &GenerationParams) -> Result<String, GenerationError> {
        let prompt_ids = self.tokenizer.encode(prompt);
        let ids = sample(&self.params, &prompt_ids, gp)?;
        Ok(self.tokenizer.decode_completion(&ids))
    }

    pub fn logprob(&self, prompt: &str, completion: &str) -> f64 {
        sequence_logprob(&self.params, &self.tokenizer.encode(prompt), &self.tokenizer.encode_completion(completion))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use alloc::vec;

    fn small(vocab: usize, seed: u64) -> PolicyParams {
        let dims = PolicyDims { vocab, context: 3, embed: 4, hidden: 5, rank: 2 };
        PolicyParams::init(dims, &mut rng_from_seed(seed))
    }

    #[test]
    fn zero_weights_give_uniform_distribution() {
        let p = PolicyParams::zeros(PolicyDims::with_vocab(10));
        let dist = next_token_distribution(&p, &[4, 5]);
        assert!(dist.iter().all(|&q| (q - 0.1).abs() < 1e-15));
    }

    #[test]
    fn zero_model_logprob_is_length_times_log_uniform() {
        let p = PolicyParams::zeros(PolicyDims::with_vocab(10));
        let lp = sequence_logprob(&p, &[4, 5, 6], &[7, 8, EOS]);
        assert!((lp - 3.0 * libm::log(0.1)).abs() < 1e-9);
        assert!((lp + 6.907755).abs() < 1e-6);
    }

    #[test]
    fn distribution_normalised_and_positive() {
        let p = small(12, 1);
        let dist = next_token_distribution(&p, &[4]);
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(dist.iter().all(|&q| q > 0.0));
    }

    #[test]
    fn bias_bump_raises_probability() {
        let mut p = small(12, 2);
        let before = next_token_distribution(&p, &[5, 6])[7];
        p.output_bias[7] += 10.0;
        assert!(next_token_distribution(&p, &[5, 6])[7] > before);
    }

    /// Exhaustive chain rule over a 4-token vocabulary with hand-set weights.
    #[test]
    fn logprob_matches_hand_chain_rule() {
        let dims = PolicyDims { vocab: 5, context: 2, embed: 1, hidden: 1, rank: 0 };
        let mut p = PolicyParams::zeros(dims);
        // embedding: token id -> scalar
        for (t, e) in [0.0, 0.5, -0.25, 1.0, 2.0].iter().enumerate() {
            p.embeddings.set(t, 0, *e);
        }
        p.hidden_weights.set(0, 0, 0.3); // older slot
        p.hidden_weights.set(1, 0, -0.7); // newer slot
        p.hidden_bias[0] = 0.1;
        for (j, w) in [0.2, 1.5, -0.4, 0.0, 0.9].iter().enumerate() {
            p.output_weights.set(0, j, *w);
        }
        p.output_bias = vec![0.0, -0.3, 0.2, 0.0, 0.1];

        let probs_after = |older: usize, newer: usize| -> [f64; 5] {
            let e = [0.0, 0.5, -0.25, 1.0, 2.0];
            let hv = libm::tanh(0.1 + 0.3 * e[older] - 0.7 * e[newer]);
            let w = [0.2, 1.5, -0.4, 0.0, 0.9];
            let b = [0.0, -0.3, 0.2, 0.0, 0.1];
            let z: [f64; 5] = core::array::from_fn(|j| b[j] + hv * w[j]);
            let total: f64 = z.iter().map(|x| libm::exp(*x)).sum();
            core::array::from_fn(|j| libm::exp(z[j]) / total)
        };
        // prompt [4], completion [4, EOS]: sequence 4 SEP 4 EOS
        let expected = libm::log(probs_after(4, SEP)[4]) + libm::log(probs_after(SEP, 4)[EOS]);
        let got = sequence_logprob(&p, &[4], &[4, EOS]);
        assert!((got - expected).abs() < 1e-12);
        assert!(got < 0.0);
    }

    #[test]
    fn logprob_is_additive_over_prefixes() {
        let p = small(12, 3);
        let prompt = [4, 5, 6];
        let a = [7, 8];
        let b = [9, 10, EOS];
        let whole: Vec<TokenId> = a.iter().chain(&b).copied().collect();
        let lhs = sequence_logprob(&p, &prompt, &whole);
        // the second piece conditions on prompt ⧺ SEP ⧺ a, i.e. a "prompt"
        // whose trailing SEP is supplied by sequence_logprob itself
        let mut ctx: Vec<TokenId> = prompt.to_vec();
        ctx.push(SEP);
        ctx.extend_from_slice(&a);
        let mut rhs = sequence_logprob(&p, &prompt, &a);
        for (t, &y) in b.iter().enumerate() {
            let mut hist = ctx.clone();
            hist.extend_from_slice(&b[..t]);
            rhs += libm::log(next_token_distribution(&p, &hist)[y]);
        }
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn disabled_adapter_is_bit_identical() {
        let p = small(12, 4);
        let mut with = p.clone();
        with.attach_adapter(2, &mut rng_from_seed(9));
        with.adapter.as_mut().unwrap().up = Matrix::uniform(2, 12, 1.0, &mut rng_from_seed(10));
        with.adapter.as_mut().unwrap().enabled = false;
        let a = sequence_logprob(&p, &[4, 5], &[6, EOS]);
        let b = sequence_logprob(&with, &[4, 5], &[6, EOS]);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn merge_preserves_function() {
        let mut p = small(12, 5);
        p.attach_adapter(2, &mut rng_from_seed(11));
        p.adapter.as_mut().unwrap().up = Matrix::uniform(2, 12, 0.5, &mut rng_from_seed(12));
        let before = sequence_logprob(&p, &[4, 5], &[6, 7, EOS]);
        p.merge_adapter();
        assert!(p.adapter.is_none());
        assert!((sequence_logprob(&p, &[4, 5], &[6, 7, EOS]) - before).abs() < 1e-12);
    }

    #[test]
    fn greedy_and_seeded_sampling_are_deterministic() {
        let p = small(12, 6);
        let greedy = GenerationParams { greedy: true, max_new_tokens: 6, ..Default::default() };
        assert_eq!(sample(&p, &[4, 5], &greedy).unwrap(), sample(&p, &[4, 5], &greedy).unwrap());
        let gp = GenerationParams { seed: 77, max_new_tokens: 6, top_k: None, temperature: 1.3, greedy: false };
        assert_eq!(sample(&p, &[4], &gp).unwrap(), sample(&p, &[4], &gp).unwrap());
        let out = sample(&p, &[4], &gp).unwrap();
        assert!(out.len() <= 6);
        assert!(out.iter().all(|&t| emittable(t)));
    }

    #[test]
    fn forced_eos_stops_immediately() {
        let mut p = PolicyParams::zeros(PolicyDims::with_vocab(10));
        p.output_bias[EOS] = 100.0;
        let gp = GenerationParams { seed: 1, ..Default::default() };
        assert_eq!(sample(&p, &[4, 5], &gp).unwrap(), vec![EOS]);
    }

    #[test]
    fn invalid_generation_params() {
        let p = PolicyParams::zeros(PolicyDims::with_vocab(10));
        let bad = GenerationParams { temperature: 0.0, ..Default::default() };
        assert_eq!(sample(&p, &[4], &bad), Err(GenerationError::Temperature(0.0)));
        let bad = GenerationParams { max_new_tokens: 0, ..Default::default() };
        assert_eq!(sample(&p, &[4], &bad), Err(GenerationError::MaxNewTokens));
    }

    #[test]
    fn frozen_clone_is_independent() {
        let mut p = small(12, 7);
        let frozen = clone_frozen(&p);
        let before = sequence_logprob(&frozen, &[4], &[5, EOS]).to_bits();
        p.output_bias[5] += 3.0;
        assert_eq!(sequence_logprob(&frozen, &[4], &[5, EOS]).to_bits(), before);
        assert_eq!(frozen.clone(), frozen);
        let again = clone_frozen(frozen.params());
        assert_eq!(again.params(), frozen.params());
    }
}
