//! Direct preference optimization.
//!
//! For a pair `(x, y_w, y_l)` the loss is
//!
//! ```text
//! z    = β · [(log πθ(y_w|x) − log πref(y_w|x)) − (log πθ(y_l|x) − log πref(y_l|x))]
//! loss = −log σ(z) = softplus(−z)
//! ```
//!
//! and its gradient is `−σ(−z) · β · (∇ log πθ(y_w|x) − ∇ log πθ(y_l|x))`.
//! Sequence log-probabilities are summed, not length-normalised.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::policy::{accumulate_logprob_grad, sequence_logprob, FrozenPolicy, GradMode, PolicyParams, TokenId, Tokenizer};
use crate::preference::PreferencePair;
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Linear warmup then cosine decay to zero.
    Cosine,
    /// Linear warmup then constant.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_ratio: f64,
    pub schedule: Schedule,
    pub grad_clip_norm: f64,
    pub adapter_only: bool,
    pub shuffle_seed: u64,
}

impl DpoConfig {
    /// Learning rate used for billion-parameter models; the toy policy
    /// defaults to [`DpoConfig::TOY_LEARNING_RATE`].
    pub const LARGE_MODEL_LEARNING_RATE: f64 = 5e-5;
    pub const TOY_LEARNING_RATE: f64 = 3e-3;

    pub fn validate(&self) -> Result<(), DpoError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(DpoError::Config("beta must be positive"));
        }
        if self.epochs == 0 {
            return Err(DpoError::Config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(DpoError::Config("batch_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(DpoError::Config("warmup_ratio must lie in [0, 1]"));
        }
        if self.grad_clip_norm.is_nan() || self.grad_clip_norm <= 0.0 {
            return Err(DpoError::Config("grad_clip_norm must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(DpoError::Config("learning_rate must be non-negative"));
        }
        Ok(())
    }
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            beta: 0.1,
            learning_rate: Self::TOY_LEARNING_RATE,
            epochs: 2,
            batch_size: 12,
            warmup_ratio: 0.1,
            schedule: Schedule::Cosine,
            grad_clip_norm: 0.3,
            adapter_only: false,
            shuffle_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DpoError {
    #[error("invalid DPO config: {0}")]
    Config(&'static str),
    #[error("no preference pairs to train on")]
    EmptyDataset,
    #[error("non-finite loss on pair {pair_id:?} (log-ratios {chosen_log_ratio}, {rejected_log_ratio})")]
    NonFiniteLoss { pair_id: String, chosen_log_ratio: f64, rejected_log_ratio: f64 },
    #[error("policy and reference have different shapes")]
    ShapeMismatch,
    #[error("adapter_only training requires an attached adapter")]
    MissingAdapter,
    #[error("pair {0:?} tokenizes to an empty prompt or completion")]
    EmptyTokens(String),
}

/// A preference pair in token space. Completions end with EOS.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPair {
    pub id: String,
    pub prompt: Vec<TokenId>,
    pub chosen: Vec<TokenId>,
    pub rejected: Vec<TokenId>,
}

impl EncodedPair {
    pub fn encode(pair: &PreferencePair, tokenizer: &Tokenizer) -> Result<EncodedPair, DpoError> {
        let prompt = tokenizer.encode(&pair.prompt);
        let chosen = tokenizer.encode_completion(&pair.chosen);
        let rejected = tokenizer.encode_completion(&pair.rejected);
        if prompt.is_empty() || chosen.len() < 2 || rejected.len() < 2 {
            return Err(DpoError::EmptyTokens(pair.claim_id.clone()));
        }
        Ok(EncodedPair { id: pair.claim_id.clone(), prompt, chosen, rejected })
    }

    /// Same pair with chosen and rejected exchanged.
    pub fn swapped(&self) -> EncodedPair {
        EncodedPair {
            id: self.id.clone(),
            prompt: self.prompt.clone(),
            chosen: self.rejected.clone(),
            rejected: self.chosen.clone(),
        }
    }
}

/// `log σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Loss from a margin `z` (already β-scaled).
pub fn loss_from_margin(z: f64) -> f64 {
    softplus(-z)
}

/// Per-pair quantities of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTerms {
    pub chosen_log_ratio: f64,
    pub rejected_log_ratio: f64,
    /// β-scaled margin.
    pub margin: f64,
    pub loss: f64,
}

/// Reference log-probabilities of a pair, which never change during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceScores {
    pub chosen: f64,
    pub rejected: f64,
}

impl ReferenceScores {
    pub fn compute(pair: &EncodedPair, reference: &PolicyParams) -> ReferenceScores {
        ReferenceScores {
            chosen: sequence_logprob(reference, &pair.prompt, &pair.chosen),
            rejected: sequence_logprob(reference, &pair.prompt, &pair.rejected),
        }
    }
}

fn terms(policy_chosen: f64, policy_rejected: f64, reference: ReferenceScores, beta: f64) -> PairTerms {
    let chosen_log_ratio = policy_chosen - reference.chosen;
    let rejected_log_ratio = policy_rejected - reference.rejected;
    let margin = beta * (chosen_log_ratio - rejected_log_ratio);
    PairTerms { chosen_log_ratio, rejected_log_ratio, margin, loss: loss_from_margin(margin) }
}

pub fn dpo_terms(pair: &EncodedPair, policy: &PolicyParams, reference: &PolicyParams, beta: f64) -> PairTerms {
    let refs = ReferenceScores::compute(pair, reference);
    terms(
        sequence_logprob(policy, &pair.prompt, &pair.chosen),
        sequence_logprob(policy, &pair.prompt, &pair.rejected),
        refs,
        beta,
    )
}

pub fn dpo_loss(pair: &EncodedPair, policy: &PolicyParams, reference: &PolicyParams, beta: f64) -> f64 {
    dpo_terms(pair, policy, reference, beta).loss
}

/// Mean loss gradient over a batch, plus the per-pair terms.
///
/// Reference scores may be precomputed (`refs[i]` for `batch[i]`); the
/// reference itself never receives gradient.
pub fn dpo_grad_with_refs(
    batch: &[&EncodedPair],
    refs: &[ReferenceScores],
    policy: &PolicyParams,
    beta: f64,
    mode: GradMode,
) -> (PolicyParams, Vec<PairTerms>) {
    let mut grads = policy.zeros_like();
    let mut out = Vec::with_capacity(batch.len());
    let n = batch.len() as f64;
    for (pair, r) in batch.iter().zip(refs) {
        // First pass for the margin, second to scale the per-token gradients.
        let lp_w = sequence_logprob(policy, &pair.prompt, &pair.chosen);
        let lp_l = sequence_logprob(policy, &pair.prompt, &pair.rejected);
        let t = terms(lp_w, lp_l, *r, beta);
        // dL/dz = −σ(−z)
        let coef = -sigmoid(-t.margin) * beta / n;
        accumulate_logprob_grad(policy, &pair.prompt, &pair.chosen, coef, mode, &mut grads);
        accumulate_logprob_grad(policy, &pair.prompt, &pair.rejected, -coef, mode, &mut grads);
        out.push(t);
    }
    (grads, out)
}

/// Mean gradient of the DPO loss over `batch`.
pub fn dpo_grad(
    batch: &[EncodedPair],
    policy: &PolicyParams,
    reference: &PolicyParams,
    beta: f64,
    mode: GradMode,
) -> PolicyParams {
    let refs: Vec<ReferenceScores> = batch.iter().map(|p| ReferenceScores::compute(p, reference)).collect();
    let views: Vec<&EncodedPair> = batch.iter().collect();
    dpo_grad_with_refs(&views, &refs, policy, beta, mode).0
}

/// Rescales `grads` so that its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut PolicyParams, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / (norm + 1e-6));
    }
    norm
}

/// Learning-rate multiplier at optimizer step `step` (0-based).
pub fn lr_multiplier(schedule: Schedule, step: usize, warmup_steps: usize, total_steps: usize) -> f64 {
    if step < warmup_steps {
        return step as f64 / warmup_steps.max(1) as f64;
    }
    match schedule {
        Schedule::Constant => 1.0,
        Schedule::Cosine => {
            let progress = (step - warmup_steps) as f64 / total_steps.saturating_sub(warmup_steps).max(1) as f64;
            0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress))
        }
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: PolicyParams,
    v: PolicyParams,
    t: i32,
}

impl Adam {
    pub fn new(like: &PolicyParams) -> Adam {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: like.zeros_like(), v: like.zeros_like(), t: 0 }
    }

    pub fn step(&mut self, params: &mut PolicyParams, grads: &PolicyParams, lr: f64, mode: GradMode) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, f64::from(self.t));
        let bc2 = 1.0 - libm::pow(self.beta2, f64::from(self.t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let base_tensors = 5;
        let iter = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .enumerate();
        for (idx, (((p, g), m), v)) in iter {
            if mode == GradMode::AdapterOnly && idx < base_tensors {
                continue;
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the training pairs, evaluated after the epoch.
    pub mean_loss: f64,
    /// Mean β-scaled margin over the training pairs, after the epoch.
    pub mean_margin: f64,
    /// Mean loss of the dev pairs after the epoch, when provided.
    pub dev_loss: Option<f64>,
    /// Largest pre-clip gradient norm seen during the epoch.
    pub max_grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub initial_margin: f64,
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
}

impl TrainReport {
    pub fn epoch_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }

    pub fn epoch_margins(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_margin).collect()
    }
}

fn evaluate(pairs: &[EncodedPair], refs: &[ReferenceScores], policy: &PolicyParams, beta: f64) -> Result<(f64, f64), DpoError> {
    let (mut loss, mut margin) = (0.0, 0.0);
    for (pair, r) in pairs.iter().zip(refs) {
        let t = terms(
            sequence_logprob(policy, &pair.prompt, &pair.chosen),
            sequence_logprob(policy, &pair.prompt, &pair.rejected),
            *r,
            beta,
        );
        if !t.loss.is_finite() {
            return Err(DpoError::NonFiniteLoss {
                pair_id: pair.id.clone(),
                chosen_log_ratio: t.chosen_log_ratio,
                rejected_log_ratio: t.rejected_log_ratio,
            });
        }
        loss += t.loss;
        margin += t.margin;
    }
    let n = pairs.len().max(1) as f64;
    Ok((loss / n, margin / n))
}

/// Trains `policy` in place against the frozen `reference`.
///
/// Each epoch shuffles the pairs with a stream derived from
/// `cfg.shuffle_seed`, takes Adam steps on mini-batches with global-norm
/// clipping and the warmup/decay schedule, then records full-pass loss and
/// margin. Deterministic for a fixed config.
pub fn train(
    pairs: &[EncodedPair],
    dev: &[EncodedPair],
    policy: &mut PolicyParams,
    reference: &FrozenPolicy,
    cfg: &DpoConfig,
) -> Result<TrainReport, DpoError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(DpoError::EmptyDataset);
    }
    let mode = if cfg.adapter_only { GradMode::AdapterOnly } else { GradMode::Full };
    if cfg.adapter_only && policy.adapter.is_none() {
        return Err(DpoError::MissingAdapter);
    }
    let ref_params = reference.params();
    if !policy.same_base_shape(ref_params) {
        return Err(DpoError::ShapeMismatch);
    }
    let refs: Vec<ReferenceScores> = pairs.iter().map(|p| ReferenceScores::compute(p, ref_params)).collect();
    let dev_refs: Vec<ReferenceScores> = dev.iter().map(|p| ReferenceScores::compute(p, ref_params)).collect();

    let (initial_loss, initial_margin) = evaluate(pairs, &refs, policy, cfg.beta)?;
    let steps_per_epoch = pairs.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let warmup_steps = libm::ceil(cfg.warmup_ratio * total_steps as f64) as usize;
    let mut adam = Adam::new(policy);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = rng_from_seed(cfg.shuffle_seed);
    let mut step = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut max_norm: f64 = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&EncodedPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let batch_refs: Vec<ReferenceScores> = chunk.iter().map(|&i| refs[i]).collect();
            let (mut grads, batch_terms) = dpo_grad_with_refs(&batch, &batch_refs, policy, cfg.beta, mode);
            if let Some((pair, t)) = batch.iter().zip(&batch_terms).find(|(_, t)| !t.loss.is_finite()) {
                return Err(DpoError::NonFiniteLoss {
                    pair_id: pair.id.clone(),
                    chosen_log_ratio: t.chosen_log_ratio,
                    rejected_log_ratio: t.rejected_log_ratio,
                });
            }
            max_norm = max_norm.max(clip_grad_norm(&mut grads, cfg.grad_clip_norm));
            let lr = cfg.learning_rate * lr_multiplier(cfg.schedule, step, warmup_steps, total_steps);
            adam.step(policy, &grads, lr, mode);
            step += 1;
        }
        let (mean_loss, mean_margin) = evaluate(pairs, &refs, policy, cfg.beta)?;
        let dev_loss = if dev.is_empty() { None } else { Some(evaluate(dev, &dev_refs, policy, cfg.beta)?.0) };
        epochs.push(EpochStats { epoch: epoch + 1, mean_loss, mean_margin, dev_loss, max_grad_norm: max_norm });
    }
    Ok(TrainReport { initial_loss, initial_margin, epochs, steps: step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{clone_frozen, PolicyDims, EOS};
    use crate::rng::rng_from_seed;
    use alloc::vec;

    fn pair(prompt: &[TokenId], chosen: &[TokenId], rejected: &[TokenId]) -> EncodedPair {
        EncodedPair { id: "p".into(), prompt: prompt.to_vec(), chosen: chosen.to_vec(), rejected: rejected.to_vec() }
    }

    fn small(seed: u64) -> PolicyParams {
        PolicyParams::init(PolicyDims { vocab: 10, context: 3, embed: 3, hidden: 4, rank: 2 }, &mut rng_from_seed(seed))
    }

    #[test]
    fn identical_policies_give_ln2() {
        let p = small(1);
        let pr = pair(&[4, 5], &[6, EOS], &[7, 8, EOS]);
        assert!((dpo_loss(&pr, &p, &p, 0.1) - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn scalar_loss_fixture() {
        // β = 0.1 and a log-ratio difference of 2: ln(1 + e^{-0.2}).
        let z = 0.1 * 2.0;
        assert!((loss_from_margin(z) - libm::log(1.0 + libm::exp(-0.2))).abs() < 1e-15);
        assert!((loss_from_margin(z) - 0.598139).abs() < 1e-6);
    }

    #[test]
    fn loss_monotone_in_margin() {
        let mut prev = f64::INFINITY;
        for i in -50..=50 {
            let l = loss_from_margin(f64::from(i) * 0.5);
            assert!(l < prev && l > 0.0);
            prev = l;
        }
        assert!(loss_from_margin(800.0) >= 0.0 && loss_from_margin(800.0) < 1e-300);
        assert!(loss_from_margin(-800.0).is_finite());
    }

    #[test]
    fn swapped_twins_cancel() {
        let p = small(2);
        let r = small(3);
        let pr = pair(&[4, 5], &[6, EOS], &[7, 8, EOS]);
        let g = dpo_grad(&[pr.clone(), pr.swapped()], &p, &r, 0.1, GradMode::Full);
        // at policy ≡ reference the two terms are exact negatives
        let g0 = dpo_grad(&[pr.clone(), pr.swapped()], &p, &p, 0.1, GradMode::Full);
        assert!(g0.tensors().iter().flat_map(|t| t.iter()).all(|x| x.abs() < 1e-9));
        // away from it they do not cancel in general, but stay finite
        assert!(g.all_finite());
    }

    #[test]
    fn one_step_increases_margin() {
        let mut p = small(4);
        let reference = clone_frozen(&p);
        let pr = pair(&[4, 5], &[6, EOS], &[7, 8, EOS]);
        let g = dpo_grad(core::slice::from_ref(&pr), &p, &reference, 0.1, GradMode::Full);
        p.add_scaled(&g, -0.5);
        assert!(dpo_terms(&pr, &p, &reference, 0.1).margin > 0.0);
    }

    #[test]
    fn clipping_bounds_norm() {
        let p = small(5);
        let r = small(6);
        let pr = pair(&[4, 5], &[6, EOS], &[7, 8, EOS]);
        let mut g = dpo_grad(&[pr], &p, &r, 5.0, GradMode::Full);
        g.scale(100.0);
        clip_grad_norm(&mut g, 0.3);
        assert!(g.l2_norm() <= 0.3 + 1e-9);
    }

    #[test]
    fn schedule_shape() {
        assert_eq!(lr_multiplier(Schedule::Cosine, 0, 2, 10), 0.0);
        assert_eq!(lr_multiplier(Schedule::Cosine, 1, 2, 10), 0.5);
        assert_eq!(lr_multiplier(Schedule::Cosine, 2, 2, 10), 1.0);
        assert!(lr_multiplier(Schedule::Cosine, 9, 2, 10) < 0.1);
        assert_eq!(lr_multiplier(Schedule::Constant, 9, 2, 10), 1.0);
    }

    #[test]
    fn zero_learning_rate_leaves_params_untouched() {
        let mut p = small(7);
        let reference = clone_frozen(&small(8));
        let before = p.bits();
        let pairs = vec![pair(&[4], &[5, EOS], &[6, EOS]), pair(&[5], &[7, EOS], &[8, 9, EOS])];
        let cfg = DpoConfig { learning_rate: 0.0, batch_size: 1, ..Default::default() };
        let report = train(&pairs, &[], &mut p, &reference, &cfg).unwrap();
        assert_eq!(p.bits(), before);
        for e in &report.epochs {
            assert_eq!(e.mean_loss.to_bits(), report.initial_loss.to_bits());
        }
    }

    #[test]
    fn config_validation() {
        assert!(DpoConfig { beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(DpoConfig { epochs: 0, ..Default::default() }.validate().is_err());
        let mut p = small(9);
        let r = clone_frozen(&p);
        assert_eq!(train(&[], &[], &mut p, &r, &DpoConfig::default()), Err(DpoError::EmptyDataset));
        let cfg = DpoConfig { adapter_only: true, ..Default::default() };
        let pairs = vec![pair(&[4], &[5, EOS], &[6, EOS])];
        assert_eq!(train(&pairs, &[], &mut p, &r, &cfg), Err(DpoError::MissingAdapter));
    }

    #[test]
    fn non_finite_loss_names_pair() {
        let mut p = small(10);
        p.output_bias[5] = f64::NAN;
        let r = clone_frozen(&small(10));
        let mut bad = pair(&[4], &[5, EOS], &[6, EOS]);
        bad.id = "claim-17".into();
        let err = train(&[bad], &[], &mut p, &r, &DpoConfig::default()).unwrap_err();
        assert!(matches!(err, DpoError::NonFiniteLoss { ref pair_id, .. } if pair_id == "claim-17"));
    }
}
