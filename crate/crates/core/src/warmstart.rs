//! Supervised maximum-likelihood pretraining of the base policy.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dpo::{clip_grad_norm, Adam};
use crate::policy::{accumulate_logprob_grad, GradMode, PolicyParams, TokenId};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStartConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub seed: u64,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        WarmStartConfig { epochs: 20, learning_rate: 1e-2, batch_size: 16, grad_clip_norm: 5.0, seed: 0 }
    }
}

/// Prompt and target completion (ending in EOS).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub prompt: Vec<TokenId>,
    pub completion: Vec<TokenId>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WarmStartError {
    #[error("no training examples")]
    Empty,
    #[error("invalid warm-start config: {0}")]
    Config(&'static str),
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
}

/// Minimises the mean per-token negative log-likelihood with Adam.
/// Returns the per-epoch mean per-token NLL measured during the epoch.
pub fn train_mle(examples: &[Example], params: &mut PolicyParams, cfg: &WarmStartConfig) -> Result<Vec<f64>, WarmStartError> {
    if examples.is_empty() {
        return Err(WarmStartError::Empty);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(WarmStartError::Config("epochs and batch_size must be at least 1"));
    }
    let mut adam = Adam::new(params);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = rng_from_seed(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut nll, mut tokens) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let n_tok: usize = chunk.iter().map(|&i| examples[i].completion.len()).sum();
            let scale = -1.0 / n_tok.max(1) as f64;
            let mut grads = params.zeros_like();
            for &i in chunk {
                let ex = &examples[i];
                nll -= accumulate_logprob_grad(params, &ex.prompt, &ex.completion, scale, GradMode::Full, &mut grads);
            }
            tokens += n_tok;
            clip_grad_norm(&mut grads, cfg.grad_clip_norm);
            adam.step(params, &grads, cfg.learning_rate, GradMode::Full);
        }
        let mean = nll / tokens.max(1) as f64;
        if !mean.is_finite() || !params.all_finite() {
            return Err(WarmStartError::Diverged(epoch + 1));
        }
        history.push(mean);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{sample, GenerationParams, PolicyDims, EOS};
    use alloc::vec;

    #[test]
    fn learns_to_copy_a_fixed_slot() {
        // completion = the token two places before SEP, then EOS
        let dims = PolicyDims { vocab: 12, context: 4, embed: 8, hidden: 16, rank: 2 };
        let mut params = PolicyParams::init(dims, &mut rng_from_seed(3));
        let examples: Vec<Example> =
            (4..12).map(|t| Example { prompt: vec![t, 4 + (t + 3) % 8], completion: vec![t, EOS] }).collect();
        let cfg = WarmStartConfig { epochs: 150, batch_size: 4, ..Default::default() };
        let hist = train_mle(&examples, &mut params, &cfg).unwrap();
        assert!(hist.last().unwrap() < &hist[0]);
        let gp = GenerationParams { greedy: true, ..Default::default() };
        for ex in &examples {
            assert_eq!(sample(&params, &ex.prompt, &gp).unwrap(), ex.completion);
        }
    }
}
