//! Classification and text-similarity metrics.
//!
//! Similarity metrics operate on the shared word tokenization
//! ([`crate::text::words`]); length statistics count whitespace words.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::text;
use crate::Label;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: BTreeMap<Label, ClassScores>,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no items to score")]
    Empty,
}

/// Per-class precision/recall/F1 plus support-weighted F1.
///
/// A class never predicted gets precision 0; F1 is 0 whenever precision and
/// recall are both 0.
pub fn classification_report(preds: &[Label], golds: &[Label]) -> Result<ClassificationReport, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut per_class = BTreeMap::new();
    let mut weighted = 0.0;
    for label in Label::ALL {
        let tp = preds.iter().zip(golds).filter(|(p, g)| **p == label && **g == label).count();
        let predicted = preds.iter().filter(|p| **p == label).count();
        let support = golds.iter().filter(|g| **g == label).count();
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        weighted += support as f64 * f1;
        per_class.insert(label, ClassScores { precision, recall, f1, support });
    }
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(ClassificationReport {
        per_class,
        weighted_f1: weighted / golds.len() as f64,
        accuracy: correct as f64 / golds.len() as f64,
    })
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU against a single reference.
///
/// Uses modified n-gram precisions for n up to `min(4, candidate length)`,
/// their geometric mean, and the brevity penalty. Zero unigram precision
/// yields 0; no smoothing otherwise.
pub fn bleu(candidate: &str, reference: &str) -> f64 {
    let cand = text::words(candidate);
    let refr = text::words(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let max_n = cand.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts = ngram_counts(&refr, n);
        let clipped: usize = cand_counts
            .iter()
            .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        let total = cand.len() - n + 1;
        log_sum += libm::log(clipped as f64 / total as f64);
    }
    let c = cand.len() as f64;
    let r = refr.len() as f64;
    let bp = if c < r { libm::exp(1.0 - r / c) } else { 1.0 };
    bp * libm::exp(log_sum / max_n as f64)
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_GAMMA: f64 = 0.5;
pub const METEOR_THETA: f64 = 3.0;

/// Exact-match METEOR (no stemming or synonyms).
///
/// Alignment is greedy left to right: each candidate token takes the first
/// unused identical reference token.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    let cand = text::words(candidate);
    let refr = text::words(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let mut used = vec![false; refr.len()];
    // (candidate index, reference index) in candidate order
    let mut alignment = Vec::new();
    for (i, tok) in cand.iter().enumerate() {
        if let Some(j) = (0..refr.len()).find(|&j| !used[j] && refr[j] == *tok) {
            used[j] = true;
            alignment.push((i, j));
        }
    }
    let m = alignment.len();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 1;
    for pair in alignment.windows(2) {
        let ((ci, ri), (cj, rj)) = (pair[0], pair[1]);
        if !(cj == ci + 1 && rj == ri + 1) {
            chunks += 1;
        }
    }
    let precision = m as f64 / cand.len() as f64;
    let recall = m as f64 / refr.len() as f64;
    let f_mean = precision * recall / (METEOR_ALPHA * precision + (1.0 - METEOR_ALPHA) * recall);
    let penalty = METEOR_GAMMA * libm::pow(chunks as f64 / m as f64, METEOR_THETA);
    f_mean * (1.0 - penalty)
}

pub const TER_MAX_SHIFT_SIZE: usize = 10;
pub const TER_MAX_SHIFT_DIST: usize = 10;

/// Word-level Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Moves `hyp[start..start+len]` so that it begins at index `dest` of the
/// result.
fn apply_shift(hyp: &[String], start: usize, len: usize, dest: usize) -> Vec<String> {
    let mut rest: Vec<String> = Vec::with_capacity(hyp.len());
    rest.extend_from_slice(&hyp[..start]);
    rest.extend_from_slice(&hyp[start + len..]);
    let dest = dest.min(rest.len());
    let mut out = Vec::with_capacity(hyp.len());
    out.extend_from_slice(&rest[..dest]);
    out.extend_from_slice(&hyp[start..start + len]);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Finds the block shift with the largest edit-distance reduction.
///
/// Candidate blocks are up to [`TER_MAX_SHIFT_SIZE`] words long, must occur
/// verbatim in the reference at a position at most [`TER_MAX_SHIFT_DIST`]
/// words away, and are moved to start at that reference position. The first
/// best candidate in (start, length, target) scan order wins.
fn best_shift(hyp: &[String], refr: &[String], current: usize) -> Option<(Vec<String>, usize)> {
    let mut best: Option<(Vec<String>, usize)> = None;
    let mut best_gain = 0;
    for start in 0..hyp.len() {
        for len in 1..=TER_MAX_SHIFT_SIZE.min(hyp.len() - start) {
            let block = &hyp[start..start + len];
            let lo = start.saturating_sub(TER_MAX_SHIFT_DIST);
            let hi = (start + TER_MAX_SHIFT_DIST).min(refr.len().saturating_sub(len));
            if refr.len() < len || lo > hi {
                continue;
            }
            for target in lo..=hi {
                if target == start || refr[target..target + len] != *block {
                    continue;
                }
                let shifted = apply_shift(hyp, start, len, target);
                let dist = edit_distance(&shifted, refr);
                if dist < current && current - dist > best_gain {
                    best_gain = current - dist;
                    best = Some((shifted, dist));
                }
            }
        }
    }
    best
}

/// Translation edit rate ×100: (block shifts + Levenshtein edits after the
/// shifts) per reference word.
///
/// Shifts are applied greedily, one at a time, while some shift lowers the
/// Levenshtein distance; each applied shift costs one edit.
pub fn ter(candidate: &str, reference: &str) -> f64 {
    let refr = text::words(reference);
    let mut hyp = text::words(candidate);
    if refr.is_empty() {
        return if hyp.is_empty() { 0.0 } else { 100.0 };
    }
    let mut dist = edit_distance(&hyp, &refr);
    let mut shifts = 0usize;
    while dist > 0 {
        match best_shift(&hyp, &refr, dist) {
            Some((shifted, d)) => {
                hyp = shifted;
                dist = d;
                shifts += 1;
            }
            None => break,
        }
    }
    100.0 * (shifts + dist) as f64 / refr.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub mean_bleu: f64,
    pub mean_meteor: f64,
    pub mean_ter: f64,
}

/// Mean BLEU/METEOR/TER over aligned (candidate, reference) pairs.
pub fn similarity_report<'a, I>(pairs: I) -> Result<SimilarityReport, MetricError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let (mut b, mut m, mut t, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (cand, refr) in pairs {
        b += bleu(cand, refr);
        m += meteor(cand, refr);
        t += ter(cand, refr);
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let n = n as f64;
    Ok(SimilarityReport { mean_bleu: b / n, mean_meteor: m / n, mean_ter: t / n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    pub mean_words: f64,
    pub std_words: f64,
}

/// Mean and population standard deviation of whitespace word counts.
pub fn length_stats<S: AsRef<str>>(texts: &[S]) -> Result<LengthReport, MetricError> {
    if texts.is_empty() {
        return Err(MetricError::Empty);
    }
    let counts: Vec<f64> = texts.iter().map(|t| text::word_count(t.as_ref()) as f64).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    Ok(LengthReport { mean_words: mean, std_words: libm::sqrt(var) })
}
