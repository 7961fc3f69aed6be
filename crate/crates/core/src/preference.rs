//! Preference pairs from two competing paraphrases of the same claim.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::factcheck::{verdict_correct, Verdict};
use crate::rng::SeedPath;
use crate::Label;

/// A paraphrase with the fact checker's verdict on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredParaphrase {
    pub text: String,
    pub verdict: Verdict,
    /// Iteration that produced the text; `-1` marks the raw tweet.
    pub source_iteration: i64,
}

/// Which selection rule fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rationale {
    OneCorrect,
    BothCorrectConfidence,
    SameWrongLowerConfidence,
    DifferentWrongNeutral,
    DifferentWrongRandom,
}

impl Rationale {
    pub const ALL: [Rationale; 5] = [
        Rationale::OneCorrect,
        Rationale::BothCorrectConfidence,
        Rationale::SameWrongLowerConfidence,
        Rationale::DifferentWrongNeutral,
        Rationale::DifferentWrongRandom,
    ];

    /// The rule that applies to a pair of predicted labels, independent of
    /// confidences.
    pub fn classify(a: Label, b: Label, gold: Label) -> Rationale {
        match (a == gold, b == gold) {
            (true, false) | (false, true) => Rationale::OneCorrect,
            (true, true) => Rationale::BothCorrectConfidence,
            (false, false) if a == b => Rationale::SameWrongLowerConfidence,
            _ if a == Label::Neutral || b == Label::Neutral => Rationale::DifferentWrongNeutral,
            _ => Rationale::DifferentWrongRandom,
        }
    }
}

/// Outcome of [`select_preferred`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    /// True when `current` is the chosen completion.
    pub current_chosen: bool,
    pub rationale: Rationale,
}

/// Draw for the last rule. Keyed on the sorted text pair so it does not
/// depend on argument order; returns true when the lexicographically smaller
/// text wins.
pub fn random_pick_smaller(a: &str, b: &str, seed: u64) -> bool {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    SeedPath::new(seed).with_str(lo).with_str(hi).rng().random_bool(0.5)
}

/// Chooses between this iteration's paraphrase and the previous one.
///
/// Confidence is the probability of each paraphrase's own predicted label.
/// Equal confidences go to `current`. Texts must differ.
pub fn select_preferred(current: &ScoredParaphrase, previous: &ScoredParaphrase, gold: Label, seed: u64) -> Selection {
    let (a, b) = (&current.verdict, &previous.verdict);
    let rationale = Rationale::classify(a.label, b.label, gold);
    let current_chosen = match rationale {
        Rationale::OneCorrect => verdict_correct(a, gold),
        Rationale::BothCorrectConfidence => a.confidence() >= b.confidence(),
        Rationale::SameWrongLowerConfidence => a.confidence() <= b.confidence(),
        Rationale::DifferentWrongNeutral => a.label == Label::Neutral,
        Rationale::DifferentWrongRandom => {
            let smaller_wins = random_pick_smaller(&current.text, &previous.text, seed);
            (current.text <= previous.text) == smaller_wins
        }
    };
    Selection { current_chosen, rationale }
}

/// A (prompt, chosen, rejected) triple with the evidence for the choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub claim_id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub rationale: Rationale,
    pub gold: Label,
    pub chosen_verdict: Verdict,
    pub rejected_verdict: Verdict,
}

impl PreferencePair {
    /// Re-derives the rationale from the stored verdicts and checks that the
    /// choice is one the rules allow.
    pub fn is_consistent(&self) -> bool {
        if self.chosen == self.rejected {
            return false;
        }
        let (w, l) = (&self.chosen_verdict, &self.rejected_verdict);
        if Rationale::classify(w.label, l.label, self.gold) != self.rationale {
            return false;
        }
        match self.rationale {
            Rationale::OneCorrect => w.label == self.gold,
            Rationale::BothCorrectConfidence => w.confidence() >= l.confidence(),
            Rationale::SameWrongLowerConfidence => w.confidence() <= l.confidence(),
            Rationale::DifferentWrongNeutral => w.label == Label::Neutral,
            Rationale::DifferentWrongRandom => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PreferenceError {
    #[error("claim ids without a counterpart: {0:?}")]
    Orphans(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PairSet {
    pub pairs: Vec<PreferencePair>,
    /// Claims whose two texts were identical.
    pub skipped: usize,
    pub rationale_counts: BTreeMap<Rationale, usize>,
}

/// One pair per claim whose current and previous texts differ, in claim id
/// order. Every map must cover the same ids.
pub fn build_pairs(
    current: &BTreeMap<String, ScoredParaphrase>,
    previous: &BTreeMap<String, ScoredParaphrase>,
    golds: &BTreeMap<String, Label>,
    prompts: &BTreeMap<String, String>,
    seed: u64,
) -> Result<PairSet, PreferenceError> {
    let mut orphans: Vec<String> = Vec::new();
    for id in current.keys().chain(previous.keys()).chain(golds.keys()).chain(prompts.keys()) {
        let complete = current.contains_key(id)
            && previous.contains_key(id)
            && golds.contains_key(id)
            && prompts.contains_key(id);
        if !complete && !orphans.contains(id) {
            orphans.push(id.clone());
        }
    }
    if !orphans.is_empty() {
        orphans.sort();
        return Err(PreferenceError::Orphans(orphans));
    }

    let mut out = PairSet::default();
    for (id, cur) in current {
        let prev = &previous[id];
        if cur.text == prev.text {
            out.skipped += 1;
            continue;
        }
        let gold = golds[id];
        let sel = select_preferred(cur, prev, gold, seed);
        let (w, l) = if sel.current_chosen { (cur, prev) } else { (prev, cur) };
        *out.rationale_counts.entry(sel.rationale).or_insert(0) += 1;
        out.pairs.push(PreferencePair {
            claim_id: id.clone(),
            prompt: prompts[id].clone(),
            chosen: w.text.clone(),
            rejected: l.text.clone(),
            rationale: sel.rationale,
            gold,
            chosen_verdict: w.verdict,
            rejected_verdict: l.verdict,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factcheck::Probs;
    use alloc::format;
    use alloc::string::ToString;

    fn scored(text: &str, label: Label, p: f64) -> ScoredParaphrase {
        let rest = (1.0 - p) / 2.0;
        let mut probs = Probs { supported: rest, refuted: rest, neutral: rest };
        match label {
            Label::Supported => probs.supported = p,
            Label::Refuted => probs.refuted = p,
            Label::Neutral => probs.neutral = p,
        }
        ScoredParaphrase { text: text.into(), verdict: Verdict { label, probs }, source_iteration: 0 }
    }

    #[test]
    fn rule_examples() {
        let s = Label::Supported;
        let sel = select_preferred(&scored("a", s, 0.9), &scored("b", Label::Neutral, 0.8), s, 0);
        assert_eq!(sel, Selection { current_chosen: true, rationale: Rationale::OneCorrect });

        let sel = select_preferred(&scored("a", s, 0.7), &scored("b", s, 0.9), s, 0);
        assert_eq!(sel, Selection { current_chosen: false, rationale: Rationale::BothCorrectConfidence });

        let sel = select_preferred(&scored("a", Label::Refuted, 0.8), &scored("b", Label::Refuted, 0.6), s, 0);
        assert_eq!(sel, Selection { current_chosen: false, rationale: Rationale::SameWrongLowerConfidence });

        let sel = select_preferred(&scored("a", Label::Refuted, 0.8), &scored("b", Label::Neutral, 0.6), s, 0);
        assert_eq!(sel, Selection { current_chosen: false, rationale: Rationale::DifferentWrongNeutral });
    }

    #[test]
    fn ties_go_to_current() {
        let s = Label::Supported;
        assert!(select_preferred(&scored("a", s, 0.8), &scored("b", s, 0.8), s, 0).current_chosen);
        let r = Label::Refuted;
        assert!(select_preferred(&scored("a", r, 0.8), &scored("b", r, 0.8), s, 0).current_chosen);
    }

    #[test]
    fn random_rule_is_order_independent() {
        let gold = Label::Neutral;
        let mut smaller_wins = 0;
        for seed in 0..200 {
            let a = scored("alpha", Label::Supported, 0.7);
            let b = scored("beta", Label::Refuted, 0.7);
            let ab = select_preferred(&a, &b, gold, seed);
            let ba = select_preferred(&b, &a, gold, seed);
            assert_eq!(ab.rationale, Rationale::DifferentWrongRandom);
            assert_ne!(ab.current_chosen, ba.current_chosen);
            smaller_wins += usize::from(ab.current_chosen);
        }
        assert!((60..140).contains(&smaller_wins));
    }

    #[test]
    fn build_pairs_skips_identical_and_reports_orphans() {
        let mut cur = BTreeMap::new();
        let mut prev = BTreeMap::new();
        let mut golds = BTreeMap::new();
        let mut prompts = BTreeMap::new();
        for i in 0..100 {
            let id = format!("c{i:03}");
            let t = if i < 10 { "same".to_string() } else { format!("new {i}") };
            cur.insert(id.clone(), scored(&t, Label::Supported, 0.9));
            prev.insert(id.clone(), scored(if i < 10 { "same" } else { "old" }, Label::Neutral, 0.6));
            golds.insert(id.clone(), Label::Supported);
            prompts.insert(id, "p".to_string());
        }
        let set = build_pairs(&cur, &prev, &golds, &prompts, 1).unwrap();
        assert_eq!(set.pairs.len(), 90);
        assert_eq!(set.skipped, 10);
        assert!(set.pairs.iter().all(PreferencePair::is_consistent));
        assert_eq!(set.rationale_counts[&Rationale::OneCorrect], 90);

        prev.remove("c050");
        cur.insert("extra".into(), scored("x", Label::Neutral, 0.5));
        let err = build_pairs(&cur, &prev, &golds, &prompts, 1).unwrap_err();
        assert_eq!(err, PreferenceError::Orphans(alloc::vec!["c050".into(), "extra".into()]));
    }
}
