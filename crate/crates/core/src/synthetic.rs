//! Seeded generators for the desk-scale corpus and toy preference sets.
//!
//! Desk claims always have exactly four word tokens. Together with the
//! fixed-shape tweet frames this puts the claim at a constant offset from
//! the end of every extraction prompt, which is what a fixed-window policy
//! can learn to copy.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use alloc::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClaimRecord, Split};
use crate::dpo::EncodedPair;
use crate::policy::{TokenId, EOS};
use crate::rng::SeedPath;
use crate::Label;

pub const MODIFIERS: [&str; 12] =
    ["daily", "raw", "hot", "fresh", "boiled", "organic", "dried", "frozen", "crushed", "fermented", "powdered", "warm"];

pub const REMEDIES: [&str; 20] = [
    "garlic", "ginger", "turmeric", "honey", "vinegar", "lemon", "zinc", "bleach", "ivermectin", "cinnamon",
    "chamomile", "echinacea", "kombucha", "oregano", "licorice", "kale", "coffee", "yogurt", "melatonin", "beetroot",
];

pub const VERBS: [&str; 8] = ["cures", "prevents", "reduces", "treats", "blocks", "eases", "reverses", "stops"];

pub const CONDITIONS: [&str; 20] = [
    "flu", "covid", "asthma", "migraines", "diabetes", "insomnia", "arthritis", "acne", "eczema", "anemia", "gout",
    "measles", "malaria", "obesity", "hypertension", "cholera", "dengue", "shingles", "bronchitis", "sinusitis",
];

/// Words used only in evidence that is unrelated to its claim.
pub const UNRELATED: [&str; 10] =
    ["cholesterol", "sodium", "plasma", "saliva", "cortisol", "ferritin", "lactate", "glucose", "calcium", "insulin"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskCorpusConfig {
    pub claims: usize,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    /// Relative weights of Supported, Refuted, Neutral gold labels.
    pub label_weights: [f64; 3],
    pub seed: u64,
}

impl Default for DeskCorpusConfig {
    fn default() -> Self {
        DeskCorpusConfig {
            claims: 200,
            train_fraction: 0.5,
            dev_fraction: 0.1,
            label_weights: [0.4, 0.4, 0.2],
            seed: 7,
        }
    }
}

fn pick_label(weights: &[f64; 3], u: f64) -> Label {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return Label::from_index(i).unwrap_or(Label::Neutral);
        }
    }
    Label::Neutral
}

/// Builds `cfg.claims` records with unique four-token claims.
///
/// Supported claims are restated in their evidence. Refuted claims either
/// carry a negation their evidence lacks or the reverse. Neutral claims get
/// evidence that shares no content word with them. Splits are assigned by
/// position after a seeded shuffle, so their sizes are exact.
pub fn desk_corpus(cfg: &DeskCorpusConfig) -> Vec<ClaimRecord> {
    let root = SeedPath::new(cfg.seed).with_str("desk-corpus");
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(cfg.claims);
    let mut attempt = 0u64;
    while out.len() < cfg.claims {
        let mut rng = root.with_u64(attempt).rng();
        attempt += 1;
        let modifier = *MODIFIERS.choose(&mut rng).unwrap_or(&MODIFIERS[0]);
        let remedy = *REMEDIES.choose(&mut rng).unwrap_or(&REMEDIES[0]);
        let verb = *VERBS.choose(&mut rng).unwrap_or(&VERBS[0]);
        let condition = *CONDITIONS.choose(&mut rng).unwrap_or(&CONDITIONS[0]);
        let label = pick_label(&cfg.label_weights, rng.random::<f64>());
        let (claim, evidence) = match label {
            Label::Supported => (
                format!("{modifier} {remedy} {verb} {condition}"),
                format!("Clinical trials confirm that {modifier} {remedy} {verb} {condition} in adults."),
            ),
            Label::Refuted if rng.random_bool(0.5) => (
                format!("{remedy} never {verb} {condition}"),
                format!("Controlled studies show {remedy} {verb} {condition} in most patients."),
            ),
            Label::Refuted => (
                format!("{modifier} {remedy} {verb} {condition}"),
                format!("There is no evidence that {modifier} {remedy} {verb} {condition}."),
            ),
            Label::Neutral => {
                let a = UNRELATED.choose(&mut rng).unwrap_or(&UNRELATED[0]);
                let b = REMEDIES.iter().filter(|r| **r != remedy).collect::<Vec<_>>();
                let b = b.choose(&mut rng).map_or("tea", |s| **s);
                (
                    format!("{modifier} {remedy} {verb} {condition}"),
                    format!("Researchers measured {a} levels after volunteers consumed {b}."),
                )
            }
        };
        if !seen.insert(claim.clone()) {
            continue;
        }
        out.push(ClaimRecord {
            id: String::new(),
            seed_claim: claim,
            evidence,
            gold_label: label,
            split: Split::Train,
        });
    }
    let n = out.len();
    let n_train = libm::round(cfg.train_fraction * n as f64) as usize;
    let n_dev = (libm::round(cfg.dev_fraction * n as f64) as usize).min(n - n_train.min(n));
    for (i, rec) in out.iter_mut().enumerate() {
        rec.id = format!("desk-{i:04}");
        rec.split = if i < n_train {
            Split::Train
        } else if i < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    out
}

/// Token id shared by every chosen completion of [`separable_pairs`].
pub const MARKER: TokenId = 4;

/// Preference pairs over a vocabulary of `vocab` ids where every chosen
/// completion starts with [`MARKER`] and no rejected one contains it.
pub fn separable_pairs(n: usize, vocab: usize, seed: u64) -> Vec<EncodedPair> {
    assert!(vocab > MARKER + 2, "vocabulary too small for separable pairs");
    let root = SeedPath::new(seed).with_str("separable");
    (0..n)
        .map(|i| {
            let mut rng = root.with_u64(i as u64).rng();
            let word = |rng: &mut crate::rng::StreamRng| rng.random_range(MARKER + 1..vocab);
            let prompt: Vec<TokenId> = (0..rng.random_range(1..4)).map(|_| word(&mut rng)).collect();
            let chosen = vec![MARKER, word(&mut rng), EOS];
            let rejected = vec![word(&mut rng), word(&mut rng), EOS];
            EncodedPair { id: format!("sep-{i:03}"), prompt, chosen, rejected }
        })
        .collect()
}
