//! Verdict prediction behind a uniform backend interface.
//!
//! The built-in [`LexicalOracle`] is a deterministic test instrument, not an
//! NLI model: it scores content-word overlap and negation parity so that
//! concise, overlap-rich claims are verified and diluted ones are not.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::text;
use crate::Label;

/// Probability triple keyed by label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probs {
    pub supported: f64,
    pub refuted: f64,
    pub neutral: f64,
}

impl Probs {
    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Supported => self.supported,
            Label::Refuted => self.refuted,
            Label::Neutral => self.neutral,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.supported, self.refuted, self.neutral]
    }

    pub fn sum(&self) -> f64 {
        self.supported + self.refuted + self.neutral
    }

    /// Highest-probability label; ties go to the earlier label in
    /// Supported, Refuted, Neutral order.
    pub fn argmax(&self) -> Label {
        let mut best = Label::Supported;
        for l in [Label::Refuted, Label::Neutral] {
            if self.get(l) > self.get(best) {
                best = l;
            }
        }
        best
    }
}

/// A predicted label with its probability triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub probs: Probs,
}

pub const PROB_SUM_TOLERANCE: f64 = 1e-6;
/// Backends may drift this far from a unit sum before the reply is rejected.
pub const WIRE_SUM_TOLERANCE: f64 = 1e-3;

impl Verdict {
    /// Label is derived from the probabilities.
    pub fn from_probs(probs: Probs) -> Result<Verdict, BackendError> {
        let arr = probs.as_array();
        if arr.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(BackendError::Protocol(alloc::format!("probabilities out of range: {arr:?}")));
        }
        if (probs.sum() - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(BackendError::Protocol(alloc::format!("probabilities sum to {}", probs.sum())));
        }
        Ok(Verdict { label: probs.argmax(), probs })
    }

    /// Validates a backend reply: the sum may be off by at most
    /// [`WIRE_SUM_TOLERANCE`] (then renormalised) and the stated label must
    /// be the argmax.
    pub fn from_wire(label: Label, probs: Probs) -> Result<Verdict, BackendError> {
        let arr = probs.as_array();
        if arr.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(BackendError::Protocol(alloc::format!("invalid probabilities {arr:?}")));
        }
        let sum = probs.sum();
        if (sum - 1.0).abs() > WIRE_SUM_TOLERANCE {
            return Err(BackendError::Protocol(alloc::format!("probabilities sum to {sum}, expected 1")));
        }
        let normalised = Probs {
            supported: probs.supported / sum,
            refuted: probs.refuted / sum,
            neutral: probs.neutral / sum,
        };
        let verdict = Verdict::from_probs(normalised)?;
        if verdict.label != label {
            return Err(BackendError::Protocol(alloc::format!(
                "label {label} is not the argmax of {arr:?}"
            )));
        }
        Ok(verdict)
    }

    /// Probability of the predicted label.
    pub fn confidence(&self) -> f64 {
        self.probs.get(self.label)
    }
}

/// NLI class names and their verdict counterparts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliClass {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliClass {
    pub fn to_label(self) -> Label {
        match self {
            NliClass::Entailment => Label::Supported,
            NliClass::Contradiction => Label::Refuted,
            NliClass::Neutral => Label::Neutral,
        }
    }

    pub fn from_label(label: Label) -> NliClass {
        match label {
            Label::Supported => NliClass::Entailment,
            Label::Refuted => NliClass::Contradiction,
            Label::Neutral => NliClass::Neutral,
        }
    }
}

/// Anything that predicts a verdict. The evidence is the premise and the
/// claim the hypothesis; implementations must not reorder them.
pub trait FactCheckBackend {
    fn check(&self, claim: &str, evidence: &str) -> Result<Verdict, BackendError>;
}

impl<T: FactCheckBackend + ?Sized> FactCheckBackend for &T {
    fn check(&self, claim: &str, evidence: &str) -> Result<Verdict, BackendError> {
        (**self).check(claim, evidence)
    }
}

/// Checks inputs, calls the backend and re-validates its verdict.
pub fn predict<B: FactCheckBackend + ?Sized>(
    backend: &B,
    claim: &str,
    evidence: &str,
) -> Result<Verdict, BackendError> {
    if claim.trim().is_empty() {
        return Err(BackendError::InvalidInput("claim is empty".into()));
    }
    if evidence.trim().is_empty() {
        return Err(BackendError::InvalidInput("evidence is empty".into()));
    }
    let v = backend.check(claim, evidence)?;
    if (v.probs.sum() - 1.0).abs() > PROB_SUM_TOLERANCE || v.probs.argmax() != v.label {
        return Err(BackendError::Protocol(alloc::format!("backend returned an inconsistent verdict {v:?}")));
    }
    Ok(v)
}

pub fn verdict_correct(v: &Verdict, gold: Label) -> bool {
    v.probs.argmax() == gold
}

/// Neutral score of the lexical oracle.
pub const NEUTRAL_THRESHOLD: f64 = 0.45;
/// Multiplier applied to the raw scores before the softmax.
pub const SHARPENING: f64 = 5.0;

/// Raw oracle scores before sharpening.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawScores {
    pub overlap: f64,
    pub negation_mismatch: bool,
    pub supported: f64,
    pub refuted: f64,
    pub neutral: f64,
}

/// Overlap `o` is the fraction of the claim's content tokens (distinct,
/// stopwords removed) that also occur in the evidence; `m` is set when
/// exactly one side carries a negation cue. Scores are `(o(1-m), o·m, τ)`.
pub fn lexical_oracle_score(claim: &str, evidence: &str) -> RawScores {
    let claim_tokens: BTreeSet<String> = text::content_tokens(claim).into_iter().collect();
    let evidence_tokens: BTreeSet<String> = text::content_tokens(evidence).into_iter().collect();
    let overlap = if claim_tokens.is_empty() {
        0.0
    } else {
        claim_tokens.intersection(&evidence_tokens).count() as f64 / claim_tokens.len() as f64
    };
    let negation_mismatch = text::has_negation(claim) != text::has_negation(evidence);
    let m = if negation_mismatch { 1.0 } else { 0.0 };
    RawScores {
        overlap,
        negation_mismatch,
        supported: overlap * (1.0 - m),
        refuted: overlap * m,
        neutral: NEUTRAL_THRESHOLD,
    }
}

pub fn softmax3(scores: [f64; 3], sharpening: f64) -> [f64; 3] {
    let scaled = scores.map(|s| s * sharpening);
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = scaled.map(|s| libm::exp(s - max));
    let total: f64 = exps.iter().sum();
    exps.map(|e| e / total)
}

/// Deterministic overlap/negation scorer standing in for an NLI model.
#[derive(Clone, Copy, Debug, Default)]
pub struct LexicalOracle;

impl FactCheckBackend for LexicalOracle {
    fn check(&self, claim: &str, evidence: &str) -> Result<Verdict, BackendError> {
        let raw = lexical_oracle_score(claim, evidence);
        let [supported, refuted, neutral] = softmax3([raw.supported, raw.refuted, raw.neutral], SHARPENING);
        Verdict::from_probs(Probs { supported, refuted, neutral })
    }
}

/// Returns the gold label for every (claim, evidence) pair it was built
/// with, and Neutral otherwise. Useful for identity checks.
#[derive(Clone, Debug, Default)]
pub struct LookupOracle {
    entries: Vec<(String, String, Label)>,
}

impl LookupOracle {
    pub fn new(entries: Vec<(String, String, Label)>) -> Self {
        LookupOracle { entries }
    }
}

impl FactCheckBackend for LookupOracle {
    fn check(&self, claim: &str, evidence: &str) -> Result<Verdict, BackendError> {
        let label = self
            .entries
            .iter()
            .find(|(c, e, _)| c == claim && e == evidence)
            .map_or(Label::Neutral, |(_, _, l)| *l);
        let mut arr = [0.0; 3];
        arr[label.index()] = 1.0;
        Verdict::from_probs(Probs { supported: arr[0], refuted: arr[1], neutral: arr[2] })
    }
}
