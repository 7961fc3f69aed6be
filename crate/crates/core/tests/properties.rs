use std::collections::BTreeMap;

use claimrefine_core::dpo::{dpo_loss, loss_from_margin, EncodedPair};
use claimrefine_core::factcheck::{softmax3, FactCheckBackend, LexicalOracle, Probs, Verdict};
use claimrefine_core::metrics::{bleu, classification_report, edit_distance, meteor, ter};
use claimrefine_core::policy::{sample, GenerationParams, PolicyDims, PolicyParams, Tokenizer, EOS, RESERVED};
use claimrefine_core::preference::{build_pairs, ScoredParaphrase};
use claimrefine_core::rng::rng_from_seed;
use claimrefine_core::Label;
use proptest::prelude::*;

const WORDS: [&str; 12] = ["garlic", "cures", "the", "flu", "vitamin", "c", "never", "helps", "fever", "daily", "tea", "not"];

fn sentence(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(0..WORDS.len(), 1..max).prop_map(|ix| ix.into_iter().map(|i| WORDS[i]).collect::<Vec<_>>().join(" "))
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Supported), Just(Label::Refuted), Just(Label::Neutral)]
}

proptest! {
    #[test]
    fn loss_is_positive_and_antisymmetric(z in -50.0f64..50.0) {
        let (a, b) = (loss_from_margin(z), loss_from_margin(-z));
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!((a - b + z).abs() < 1e-9);
    }

    #[test]
    fn swapping_a_pair_negates_its_margin(seed in 0u64..500, beta in 0.01f64..2.0) {
        let dims = PolicyDims { vocab: 10, context: 3, embed: 3, hidden: 4, rank: 0 };
        let policy = PolicyParams::init(dims, &mut rng_from_seed(seed));
        let reference = PolicyParams::init(dims, &mut rng_from_seed(seed + 1));
        let p = EncodedPair { id: "x".into(), prompt: vec![4, 5], chosen: vec![6, EOS], rejected: vec![7, 8, EOS] };
        let l = dpo_loss(&p, &policy, &reference, beta);
        let s = dpo_loss(&p.swapped(), &policy, &reference, beta);
        // softplus(-z) - softplus(z) = -z
        let z = -(l - s);
        prop_assert!((loss_from_margin(z) - l).abs() < 1e-9);
    }

    #[test]
    fn softmax_sums_to_one_and_keeps_argmax(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
        let p = softmax3([a, b, c], 5.0);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let arg = |v: [f64; 3]| (0..3).fold(0, |best, i| if v[i] > v[best] { i } else { best });
        prop_assert_eq!(arg(p), arg([a, b, c]));
    }

    #[test]
    fn oracle_verdicts_are_valid(claim in sentence(10), evidence in sentence(14)) {
        let v = LexicalOracle.check(&claim, &evidence).unwrap();
        prop_assert!((v.probs.sum() - 1.0).abs() < 1e-9);
        prop_assert_eq!(v.label, v.probs.argmax());
        prop_assert_eq!(v, LexicalOracle.check(&claim, &evidence).unwrap());
    }

    #[test]
    fn similarity_metrics_stay_in_range(a in sentence(12), b in sentence(12)) {
        let (bl, me, t) = (bleu(&a, &b), meteor(&a, &b), ter(&a, &b));
        prop_assert!((0.0..=1.0).contains(&bl));
        prop_assert!((0.0..=1.0).contains(&me));
        prop_assert!(t >= 0.0);
        prop_assert_eq!(ter(&a, &a), 0.0);
        prop_assert!((bleu(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edit_distance_is_a_metric(a in prop::collection::vec(0u8..4, 0..8), b in prop::collection::vec(0u8..4, 0..8), c in prop::collection::vec(0u8..4, 0..8)) {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        prop_assert_eq!(edit_distance(&a, &a), 0);
    }

    #[test]
    fn weighted_f1_is_bounded(pairs in prop::collection::vec((label(), label()), 1..40)) {
        let (p, g): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let r = classification_report(&p, &g).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r.weighted_f1));
        prop_assert_eq!(classification_report(&g, &g).unwrap().weighted_f1, 1.0);
    }

    #[test]
    fn completions_round_trip_through_the_tokenizer(s in sentence(10)) {
        let tok = Tokenizer::build(&WORDS, 64).unwrap();
        let ids = tok.encode_completion(&s);
        prop_assert_eq!(*ids.last().unwrap(), EOS);
        prop_assert_eq!(tok.decode_completion(&ids), s);
    }

    #[test]
    fn samples_never_emit_control_tokens(seed in 0u64..1000, temperature in 0.1f64..3.0, k in 1usize..12) {
        let dims = PolicyDims { vocab: 12, context: 3, embed: 4, hidden: 5, rank: 0 };
        let params = PolicyParams::init(dims, &mut rng_from_seed(seed));
        let gp = GenerationParams { seed, temperature, top_k: Some(k), max_new_tokens: 6, greedy: false };
        let out = sample(&params, &[5, 6], &gp).unwrap();
        prop_assert!(!out.is_empty() && out.len() <= 6);
        for (i, &t) in out.iter().enumerate() {
            prop_assert!(t >= RESERVED.len() || (t == EOS && i + 1 == out.len()));
        }
        prop_assert_eq!(out, sample(&params, &[5, 6], &gp).unwrap());
    }

    #[test]
    fn every_claim_is_paired_or_skipped(labels in prop::collection::vec((label(), label(), label(), 0.34f64..0.99, 0.34f64..0.99, any::<bool>()), 1..30), seed in any::<u64>()) {
        let verdict = |l: Label, c: f64| {
            let r = (1.0 - c) / 2.0;
            let mut p = Probs { supported: r, refuted: r, neutral: r };
            match l { Label::Supported => p.supported = c, Label::Refuted => p.refuted = c, Label::Neutral => p.neutral = c }
            Verdict::from_probs(p).unwrap()
        };
        let (mut cur, mut prev, mut golds, mut prompts) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
        let mut same = 0;
        for (i, (a, b, g, ca, cb, identical)) in labels.iter().enumerate() {
            let id = format!("c{i:02}");
            let prev_text = if *identical { same += 1; format!("text {i}") } else { format!("old {i}") };
            cur.insert(id.clone(), ScoredParaphrase { text: format!("text {i}"), verdict: verdict(*a, *ca), source_iteration: 1 });
            prev.insert(id.clone(), ScoredParaphrase { text: prev_text, verdict: verdict(*b, *cb), source_iteration: 0 });
            golds.insert(id.clone(), *g);
            prompts.insert(id, "prompt".to_string());
        }
        let set = build_pairs(&cur, &prev, &golds, &prompts, seed).unwrap();
        prop_assert_eq!(set.skipped, same);
        prop_assert_eq!(set.pairs.len() + set.skipped, labels.len());
        prop_assert_eq!(set.rationale_counts.values().sum::<usize>(), set.pairs.len());
        prop_assert!(set.pairs.iter().all(|p| p.is_consistent()));
    }
}
