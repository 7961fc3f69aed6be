//! The refinement loop, baseline evaluation and run persistence.
//!
//! Run directory layout:
//!
//! ```text
//! config.toml              snapshot of the LoopConfig
//! run.json                 format version and loop conventions
//! dataset.jsonl            records used by the run (native schema)
//! tweets.jsonl             one tweet per claim, fixed for the run
//! tweet_verdicts.jsonl     verdicts on the raw tweets
//! base/checkpoint.json     warm-started base policy
//! base/warm_start.json     per-epoch warm-start loss
//! iterations/NNN/          paraphrases.jsonl verdicts.jsonl
//!                          classification.json similarity.json lengths.json
//!                          preferences.jsonl pairs.json [train_report.json]
//!                          checkpoint.json manifest.json
//! baselines/<variant>/     texts.jsonl verdicts.jsonl classification.json
//!                          similarity.json lengths.json
//! ```
//!
//! An iteration directory is complete once its `manifest.json` exists and
//! every digest in it matches; resuming skips complete iterations and
//! redoes the first incomplete one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use claimrefine_core::data::{
    synthesize_tweet, ClaimRecord, DataError, Dataset, GeneratorBackend, GenerateRequest, PersonaPool, Split,
    SynthError, TemplateGenerator, TweetRecord,
};
use claimrefine_core::dpo::{self, DpoError, EncodedPair, TrainReport};
use claimrefine_core::extraction::{clean_paraphrase, extraction_prompt, PromptVariant};
use claimrefine_core::factcheck::{predict, FactCheckBackend, LexicalOracle, Verdict};
use claimrefine_core::metrics::{
    classification_report, length_stats, similarity_report, ClassificationReport, LengthReport, MetricError,
    SimilarityReport,
};
use claimrefine_core::policy::{
    clone_frozen, GenerationError, GenerationParams, Policy, PolicyDims, PolicyParams, Tokenizer, TokenizerError,
};
use claimrefine_core::preference::{build_pairs, PreferenceError, PreferencePair, Rationale, ScoredParaphrase};
use claimrefine_core::rng::SeedPath;
use claimrefine_core::synthetic::desk_corpus;
use claimrefine_core::text;
use claimrefine_core::warmstart::{train_mle, Example, WarmStartError};
use claimrefine_core::{BackendError, Label};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::{ConfigError, FactCheckerKind, GeneratorKind, LoopConfig};
use crate::dataset::{self, LabelMap, LoadError};
use crate::io::{self, IoError};
use crate::remote::{Endpoint, HttpClient, RemoteGenerator, RemoteNli, ENV_GENERATOR_URL, ENV_NLI_URL};

pub const RUN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{stage} failed for claim {claim_id:?}: {source}")]
    Backend { stage: &'static str, claim_id: String, source: BackendError },
    #[error("tweet synthesis failed for claim {claim_id:?}: {source}")]
    Synth { claim_id: String, source: SynthError },
    #[error(transparent)]
    Dpo(#[from] DpoError),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    WarmStart(#[from] WarmStartError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("run directory {0}: {1}")]
    RunDir(PathBuf, String),
    #[error("no paraphrase for test claims {0:?}")]
    MissingParaphrases(Vec<String>),
}

type Result<T, E = RunError> = std::result::Result<T, E>;

/// Generator and fact checker selected by the config.
pub struct Backends {
    pub generator: Box<dyn GeneratorBackend + Send + Sync>,
    pub fact_checker: Box<dyn FactCheckBackend + Send + Sync>,
}

impl Backends {
    pub fn desk() -> Backends {
        Backends { generator: Box::new(TemplateGenerator), fact_checker: Box::new(LexicalOracle) }
    }

    /// Remote endpoints are read from the environment.
    pub fn from_config(cfg: &LoopConfig) -> Result<Backends, BackendError> {
        let generator: Box<dyn GeneratorBackend + Send + Sync> = match cfg.generator {
            GeneratorKind::Template => Box::new(TemplateGenerator),
            GeneratorKind::Remote => Box::new(RemoteGenerator {
                client: HttpClient::new(Endpoint::from_env(ENV_GENERATOR_URL)?, cfg.remote.clone()),
            }),
        };
        let fact_checker: Box<dyn FactCheckBackend + Send + Sync> = match cfg.fact_checker {
            FactCheckerKind::Lexical => Box::new(LexicalOracle),
            FactCheckerKind::Remote => Box::new(RemoteNli {
                client: HttpClient::new(Endpoint::from_env(ENV_NLI_URL)?, cfg.remote.clone()),
            }),
        };
        Ok(Backends { generator, fact_checker })
    }
}

/// Which texts are fed to the fact checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputVariant {
    Seed,
    Tweet,
    ZeroshotCore,
    ZeroshotCheckworthy,
    DpoIteration(usize),
}

impl InputVariant {
    pub const BASELINES: [InputVariant; 4] =
        [InputVariant::Seed, InputVariant::Tweet, InputVariant::ZeroshotCore, InputVariant::ZeroshotCheckworthy];

    pub fn dir_name(self) -> String {
        match self {
            InputVariant::Seed => "seed".into(),
            InputVariant::Tweet => "tweet".into(),
            InputVariant::ZeroshotCore => "zeroshot_core".into(),
            InputVariant::ZeroshotCheckworthy => "zeroshot_checkworthy".into(),
            InputVariant::DpoIteration(i) => format!("{i:03}"),
        }
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputVariant::DpoIteration(i) => write!(f, "dpo_iteration({i})"),
            other => f.write_str(&other.dir_name()),
        }
    }
}

/// Dataset plus the run's tweets, indexed by claim id.
pub struct Corpus {
    pub dataset: Dataset,
    pub tweets: BTreeMap<String, TweetRecord>,
}

impl Corpus {
    pub fn new(dataset: Dataset, tweets: Vec<TweetRecord>) -> Result<Corpus> {
        claimrefine_core::data::index_tweets(&dataset, &tweets)?;
        let tweets: BTreeMap<String, TweetRecord> = tweets.into_iter().map(|t| (t.claim_id.clone(), t)).collect();
        let missing: Vec<String> =
            dataset.records().iter().filter(|r| !tweets.contains_key(&r.id)).map(|r| r.id.clone()).collect();
        if !missing.is_empty() {
            return Err(RunError::RunDir(PathBuf::new(), format!("claims without a tweet: {missing:?}")));
        }
        Ok(Corpus { dataset, tweets })
    }

    pub fn tweet(&self, id: &str) -> &str {
        &self.tweets[id].text
    }

    pub fn records_in(&self, splits: &[Split]) -> Vec<&ClaimRecord> {
        self.dataset.records().iter().filter(|r| splits.contains(&r.split)).collect()
    }
}

/// The three test-split reports for one input variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantEvaluation {
    pub variant: InputVariant,
    pub texts: BTreeMap<String, String>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub classification: ClassificationReport,
    pub similarity: SimilarityReport,
    pub lengths: LengthReport,
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool")
}

/// Runs `f` over `items` on `workers` threads, preserving order.
fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    pool(workers).install(|| items.par_iter().map(f).collect())
}

/// Extraction reply of the zero-shot baselines. Empty replies fall back to
/// the tweet.
pub fn zero_shot_extract(
    generator: &(dyn GeneratorBackend + Send + Sync),
    tweet: &str,
    variant: PromptVariant,
    seed: u64,
    temperature: f64,
) -> Result<String, BackendError> {
    let prompt = extraction_prompt(tweet, variant).map_err(|e| BackendError::InvalidInput(e.to_string()))?;
    let raw = generator.generate(&GenerateRequest {
        system: prompt.system,
        prompt: prompt.task,
        temperature,
        max_new_tokens: 128,
        seed,
    })?;
    let text = clean_paraphrase(&raw);
    Ok(if text.is_empty() { text::collapse_whitespace(tweet) } else { text })
}

fn check_all(
    fc: &(dyn FactCheckBackend + Send + Sync),
    corpus: &Corpus,
    texts: &BTreeMap<String, String>,
    workers: usize,
    stage: &'static str,
) -> Result<BTreeMap<String, Verdict>> {
    let items: Vec<(&String, &String)> = texts.iter().collect();
    let verdicts = par_map(workers, &items, |(id, t)| {
        let rec = corpus.dataset.get(id).expect("text ids come from the dataset");
        predict(fc, t, &rec.evidence)
            .map_err(|source| RunError::Backend { stage, claim_id: (*id).clone(), source })
    })?;
    Ok(items.into_iter().map(|(id, _)| id.clone()).zip(verdicts).collect())
}

fn test_reports(
    corpus: &Corpus,
    texts: &BTreeMap<String, String>,
    verdicts: &BTreeMap<String, Verdict>,
) -> Result<(ClassificationReport, SimilarityReport, LengthReport)> {
    let test = corpus.records_in(&[Split::Test]);
    let preds: Vec<Label> = test.iter().map(|r| verdicts[&r.id].label).collect();
    let golds: Vec<Label> = test.iter().map(|r| r.gold_label).collect();
    let classification = classification_report(&preds, &golds)?;
    let similarity = similarity_report(test.iter().map(|r| (texts[&r.id].as_str(), r.seed_claim.as_str())))?;
    let lengths = length_stats(&test.iter().map(|r| texts[&r.id].as_str()).collect::<Vec<_>>())?;
    Ok((classification, similarity, lengths))
}

/// Test-split verdicts and reports for one input variant. `paraphrases`
/// must cover every test claim for [`InputVariant::DpoIteration`].
pub fn evaluate_variant(
    variant: InputVariant,
    corpus: &Corpus,
    backends: &Backends,
    paraphrases: Option<&BTreeMap<String, String>>,
    master_seed: u64,
    temperature: f64,
    workers: usize,
) -> Result<VariantEvaluation> {
    let test = corpus.records_in(&[Split::Test]);
    let texts: BTreeMap<String, String> = match variant {
        InputVariant::Seed => test.iter().map(|r| (r.id.clone(), r.seed_claim.clone())).collect(),
        InputVariant::Tweet => test.iter().map(|r| (r.id.clone(), corpus.tweet(&r.id).to_string())).collect(),
        InputVariant::ZeroshotCore | InputVariant::ZeroshotCheckworthy => {
            let pv = if variant == InputVariant::ZeroshotCore {
                PromptVariant::ZeroshotCore
            } else {
                PromptVariant::ZeroshotCheckworthy
            };
            let root = SeedPath::new(master_seed).with_str("zero-shot").with_str(pv.as_str());
            let outs = par_map(workers, &test, |r| {
                zero_shot_extract(&*backends.generator, corpus.tweet(&r.id), pv, root.with_str(&r.id).seed(), temperature)
                    .map_err(|source| RunError::Backend { stage: "extraction", claim_id: r.id.clone(), source })
            })?;
            test.iter().map(|r| r.id.clone()).zip(outs).collect()
        }
        InputVariant::DpoIteration(_) => {
            let given = paraphrases.ok_or_else(|| RunError::MissingParaphrases(test.iter().map(|r| r.id.clone()).collect()))?;
            let missing: Vec<String> = test.iter().filter(|r| !given.contains_key(&r.id)).map(|r| r.id.clone()).collect();
            if !missing.is_empty() {
                return Err(RunError::MissingParaphrases(missing));
            }
            test.iter().map(|r| (r.id.clone(), given[&r.id].clone())).collect()
        }
    };
    let verdicts = check_all(&*backends.fact_checker, corpus, &texts, workers, "fact check")?;
    let (classification, similarity, lengths) = test_reports(corpus, &texts, &verdicts)?;
    Ok(VariantEvaluation { variant, texts, verdicts, classification, similarity, lengths })
}

/// One tweet per claim, persona and frame drawn from per-claim streams.
pub fn synthesize_tweets(
    dataset: &Dataset,
    generator: &(dyn GeneratorBackend + Send + Sync),
    master_seed: u64,
    temperature: f64,
    workers: usize,
) -> Result<Vec<TweetRecord>> {
    let personas = PersonaPool::standard();
    let root = SeedPath::new(master_seed).with_str("tweets");
    let records: Vec<&ClaimRecord> = dataset.records().iter().collect();
    par_map(workers, &records, |r| {
        let path = root.with_str(&r.id);
        let persona = personas.build_persona(&mut path.with_str("persona").rng());
        synthesize_tweet(generator, r, &persona, path.with_str("generate").seed(), temperature)
            .map_err(|source| RunError::Synth { claim_id: r.id.clone(), source })
    })
}

/// Text the toy policy conditions on.
pub fn policy_prompt(tweet: &str, variant: PromptVariant) -> String {
    extraction_prompt(tweet, variant).map(|p| p.policy_text()).unwrap_or_default()
}

/// Vocabulary over every prompt and seed claim of the corpus.
pub fn build_tokenizer(corpus: &Corpus, variant: PromptVariant, max_vocab: usize) -> Result<Tokenizer> {
    let mut docs: Vec<String> = Vec::new();
    for r in corpus.dataset.records() {
        docs.push(policy_prompt(corpus.tweet(&r.id), variant));
        docs.push(r.seed_claim.clone());
    }
    Ok(Tokenizer::build(&docs, max_vocab)?)
}

/// Words of the tweet that follow the first verbatim occurrence of the
/// claim's words.
fn trailing_words(claim: &[String], tweet: &[String]) -> Vec<String> {
    if claim.is_empty() || claim.len() > tweet.len() {
        return Vec::new();
    }
    (0..=tweet.len() - claim.len())
        .find(|&s| tweet[s..s + claim.len()] == *claim)
        .map(|s| tweet[s + claim.len()..].to_vec())
        .unwrap_or_default()
}

/// Supervised targets for the base policy: each train claim followed by a
/// uniformly drawn number of the tweet words after it.
pub fn warm_start_examples(corpus: &Corpus, tokenizer: &Tokenizer, cfg: &LoopConfig) -> Vec<Example> {
    let root = SeedPath::new(cfg.master_seed).with_str("warm-start-targets");
    let mut out = Vec::new();
    for r in corpus.records_in(&[Split::Train]) {
        let tweet = corpus.tweet(&r.id);
        let prompt = tokenizer.encode(&policy_prompt(tweet, cfg.variant));
        let claim = text::words(&r.seed_claim);
        let tail = trailing_words(&claim, &text::words(tweet));
        let mut rng = root.with_str(&r.id).rng();
        for _ in 0..cfg.warm_start.samples_per_claim.max(1) {
            let j = rng.random_range(0..=tail.len());
            let target = claim.iter().chain(&tail[..j]).cloned().collect::<Vec<_>>().join(" ");
            out.push(Example { prompt: prompt.clone(), completion: tokenizer.encode_completion(&target) });
        }
    }
    out
}

/// Tokenizer, initialisation and warm start.
pub fn build_base_policy(corpus: &Corpus, cfg: &LoopConfig) -> Result<(Policy, Vec<f64>)> {
    let tokenizer = build_tokenizer(corpus, cfg.variant, cfg.policy.max_vocab)?;
    let dims = PolicyDims {
        vocab: tokenizer.len(),
        context: cfg.policy.context,
        embed: cfg.policy.embed,
        hidden: cfg.policy.hidden,
        rank: cfg.policy.adapter_rank,
    };
    let mut params = PolicyParams::init(dims, &mut SeedPath::new(cfg.master_seed).with_str("policy-init").rng());
    let examples = warm_start_examples(corpus, &tokenizer, cfg);
    let mut ws = cfg.warm_start.train.clone();
    ws.seed = SeedPath::new(cfg.master_seed).with_str("warm-start").seed();
    let history = if examples.is_empty() { Vec::new() } else { train_mle(&examples, &mut params, &ws)? };
    Ok((Policy { tokenizer, params }, history))
}

/// One paraphrase per listed claim, sampled from `policy`. Empty outputs
/// fall back to the tweet.
pub fn generate_paraphrases(
    policy: &Policy,
    corpus: &Corpus,
    records: &[&ClaimRecord],
    cfg: &LoopConfig,
    iteration: usize,
) -> Result<Vec<ParaphraseRecord>> {
    let root = SeedPath::new(cfg.master_seed).with_str("paraphrase").with_u64(iteration as u64);
    par_map(cfg.effective_workers(), records, |r| {
        let tweet = corpus.tweet(&r.id);
        let gp = GenerationParams { seed: root.with_str(&r.id).seed(), ..cfg.generation };
        let raw = policy.generate(&policy_prompt(tweet, cfg.variant), &gp)?;
        let cleaned = clean_paraphrase(&raw);
        let fallback = cleaned.is_empty();
        Ok(ParaphraseRecord {
            claim_id: r.id.clone(),
            split: r.split,
            text: if fallback { text::collapse_whitespace(tweet) } else { cleaned },
            fallback,
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRecord {
    pub claim_id: String,
    pub split: Split,
    pub text: String,
    /// The policy produced nothing and the tweet was used instead.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub claim_id: String,
    pub split: Split,
    pub gold: Label,
    pub verdict: Verdict,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub pair_count: usize,
    pub skip_count: usize,
    pub dev_pair_count: usize,
    pub rationale_counts: BTreeMap<Rationale, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub iteration: usize,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

/// What the loop reports for one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationState {
    pub index: usize,
    pub paraphrases: BTreeMap<String, String>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub classification: ClassificationReport,
    pub similarity: SimilarityReport,
    pub lengths: LengthReport,
    pub pairs: Option<PairStats>,
    pub train_report: Option<TrainReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RunMeta {
    format_version: u32,
    iteration_indexing: String,
    first_update_previous: String,
    reference_policy: String,
    adapter: String,
    empty_paraphrase: String,
}

impl RunMeta {
    fn current() -> RunMeta {
        RunMeta {
            format_version: RUN_FORMAT_VERSION,
            iteration_indexing: "iteration i evaluates the policy after i updates, then trains the next; iteration 0 is the warm-started base"
                .into(),
            first_update_previous: "raw_tweet".into(),
            reference_policy: "the policy entering each update".into(),
            adapter: "fresh adapter per update, merged into the base weights afterwards".into(),
            empty_paraphrase: "replaced by the tweet and flagged".into(),
        }
    }
}

pub fn iteration_dir(run_dir: &Path, i: usize) -> PathBuf {
    run_dir.join("iterations").join(format!("{i:03}"))
}

/// True when the manifest exists and every listed digest matches.
pub fn iteration_complete(dir: &Path) -> bool {
    let Ok(manifest) = io::read_json::<Manifest>(&dir.join("manifest.json")) else {
        return false;
    };
    manifest.files.iter().all(|(name, digest)| io::file_sha256(&dir.join(name)).is_ok_and(|d| &d == digest))
}

fn comparable(cfg: &LoopConfig) -> LoopConfig {
    LoopConfig { workers: 1, iterations: 0, run_dir: PathBuf::new(), ..cfg.clone() }
}

/// Writes the config snapshot, or checks an existing one. Worker count and
/// iteration count may differ.
fn check_snapshot(cfg: &LoopConfig) -> Result<()> {
    let dir = &cfg.run_dir;
    let path = dir.join("config.toml");
    if path.exists() {
        let stored = LoopConfig::load(&path)?;
        if comparable(&stored) != comparable(cfg) {
            return Err(RunError::RunDir(dir.clone(), "config differs from the stored snapshot".into()));
        }
        return Ok(());
    }
    std::fs::create_dir_all(dir).map_err(|e| IoError::fs(dir, e))?;
    io::write_atomic(&path, cfg.to_toml().as_bytes())?;
    io::write_json(&dir.join("run.json"), &RunMeta::current())?;
    Ok(())
}

/// Creates the run directory, or checks that an existing one belongs to
/// the same configuration when resuming.
fn prepare_run_dir(cfg: &LoopConfig, resume: bool) -> Result<()> {
    let dir = &cfg.run_dir;
    let occupied = dir.exists() && std::fs::read_dir(dir).map_err(|e| IoError::fs(dir, e))?.next().is_some();
    if occupied && !resume {
        return Err(RunError::RunDir(dir.clone(), "not empty (pass --resume to continue a run)".into()));
    }
    check_snapshot(cfg)?;
    if occupied {
        io::write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    }
    Ok(())
}

/// Dataset from the configured file or the seeded desk corpus.
pub fn load_configured_dataset(cfg: &LoopConfig) -> Result<Dataset> {
    match &cfg.dataset {
        Some(path) => {
            let labels = match &cfg.label_map {
                Some(p) => LabelMap::load(p)?,
                None => LabelMap::default(),
            };
            Ok(dataset::load_dataset(path, cfg.schema, &labels)?)
        }
        None => Ok(Dataset::from_records(desk_corpus(&cfg.desk))?),
    }
}

/// Dataset and tweets for a run directory, created on first use and
/// reloaded afterwards.
pub fn prepare_corpus(cfg: &LoopConfig, backends: &Backends) -> Result<Corpus> {
    let dir = &cfg.run_dir;
    let ds_path = dir.join("dataset.jsonl");
    let dataset = if ds_path.exists() {
        dataset::load_dataset(&ds_path, dataset::Schema::Native, &LabelMap::default())?
    } else {
        let ds = load_configured_dataset(cfg)?;
        dataset::save_dataset(&ds_path, &ds)?;
        ds
    };
    let tw_path = dir.join("tweets.jsonl");
    let tweets = if tw_path.exists() {
        dataset::load_tweets(&tw_path, &dataset)?
    } else {
        let tweets = match &cfg.tweets {
            Some(p) => dataset::load_tweets(p, &dataset)?,
            None => synthesize_tweets(
                &dataset,
                &*backends.generator,
                cfg.master_seed,
                cfg.generation.temperature,
                cfg.effective_workers(),
            )?,
        };
        dataset::save_tweets(&tw_path, &tweets)?;
        tweets
    };
    Corpus::new(dataset, tweets)
}

fn scored(texts: &[ParaphraseRecord], verdicts: &BTreeMap<String, Verdict>, source: i64, split: Split) -> BTreeMap<String, ScoredParaphrase> {
    texts
        .iter()
        .filter(|p| p.split == split)
        .map(|p| {
            (p.claim_id.clone(), ScoredParaphrase { text: p.text.clone(), verdict: verdicts[&p.claim_id], source_iteration: source })
        })
        .collect()
}

fn verdict_records(corpus: &Corpus, verdicts: &BTreeMap<String, Verdict>) -> Vec<VerdictRecord> {
    verdicts
        .iter()
        .map(|(id, v)| {
            let r = corpus.dataset.get(id).expect("known id");
            VerdictRecord {
                claim_id: id.clone(),
                split: r.split,
                gold: r.gold_label,
                verdict: *v,
                correct: v.label == r.gold_label,
            }
        })
        .collect()
}

/// Previous-iteration texts for the first update: the raw tweets.
fn tweet_baseline(cfg: &LoopConfig, corpus: &Corpus, backends: &Backends) -> Result<Vec<(ParaphraseRecord, Verdict)>> {
    let path = cfg.run_dir.join("tweet_verdicts.jsonl");
    let records = corpus.records_in(&[Split::Train, Split::Dev]);
    let texts: Vec<ParaphraseRecord> = records
        .iter()
        .map(|r| ParaphraseRecord { claim_id: r.id.clone(), split: r.split, text: corpus.tweet(&r.id).into(), fallback: false })
        .collect();
    let verdicts: BTreeMap<String, Verdict> = if path.exists() {
        io::read_jsonl::<VerdictRecord>(&path)?.into_iter().map(|v| (v.claim_id, v.verdict)).collect()
    } else {
        let map: BTreeMap<String, String> = texts.iter().map(|p| (p.claim_id.clone(), p.text.clone())).collect();
        let v = check_all(&*backends.fact_checker, corpus, &map, cfg.effective_workers(), "fact check")?;
        io::write_jsonl(&path, &verdict_records(corpus, &v))?;
        v
    };
    Ok(texts.into_iter().map(|p| {
        let v = verdicts[&p.claim_id];
        (p, v)
    }).collect())
}

fn encode_pairs(pairs: &[PreferencePair], tokenizer: &Tokenizer) -> Result<Vec<EncodedPair>> {
    Ok(pairs.iter().map(|p| EncodedPair::encode(p, tokenizer)).collect::<Result<_, _>>()?)
}

/// One DPO update of `policy` on `train`, with `dev` pairs for held-out
/// loss. The reference is a frozen copy of `policy`.
pub fn dpo_update(
    policy: &Policy,
    train: &[PreferencePair],
    dev: &[PreferencePair],
    cfg: &LoopConfig,
    iteration: usize,
) -> Result<(Policy, Option<TrainReport>)> {
    if train.is_empty() {
        log::warn!("iteration {iteration}: no preference pairs, policy left unchanged");
        return Ok((policy.clone(), None));
    }
    let seeds = SeedPath::new(cfg.master_seed).with_str("dpo").with_u64(iteration as u64);
    let reference = clone_frozen(&policy.params);
    let mut params = policy.params.clone();
    if cfg.policy.adapter_rank > 0 {
        params.attach_adapter(cfg.policy.adapter_rank, &mut seeds.with_str("adapter").rng());
    }
    let dpo_cfg = dpo::DpoConfig { shuffle_seed: seeds.with_str("shuffle").seed(), ..cfg.dpo.clone() };
    let enc_train = encode_pairs(train, &policy.tokenizer)?;
    let enc_dev = encode_pairs(dev, &policy.tokenizer)?;
    let report = dpo::train(&enc_train, &enc_dev, &mut params, &reference, &dpo_cfg)?;
    params.merge_adapter();
    Ok((Policy { tokenizer: policy.tokenizer.clone(), params }, Some(report)))
}

fn load_iteration(dir: &Path, index: usize) -> Result<(IterationState, Vec<ParaphraseRecord>)> {
    let paraphrases: Vec<ParaphraseRecord> = io::read_jsonl(&dir.join("paraphrases.jsonl"))?;
    let verdicts: Vec<VerdictRecord> = io::read_jsonl(&dir.join("verdicts.jsonl"))?;
    let pairs_path = dir.join("pairs.json");
    let train_path = dir.join("train_report.json");
    let state = IterationState {
        index,
        paraphrases: paraphrases.iter().map(|p| (p.claim_id.clone(), p.text.clone())).collect(),
        verdicts: verdicts.into_iter().map(|v| (v.claim_id, v.verdict)).collect(),
        classification: io::read_json(&dir.join("classification.json"))?,
        similarity: io::read_json(&dir.join("similarity.json"))?,
        lengths: io::read_json(&dir.join("lengths.json"))?,
        pairs: if pairs_path.exists() { Some(io::read_json(&pairs_path)?) } else { None },
        train_report: if train_path.exists() { Some(io::read_json(&train_path)?) } else { None },
    };
    Ok((state, paraphrases))
}

/// Runs (or resumes) the loop. Iteration `i` in `0..cfg.iterations`
/// evaluates the policy after `i` updates, then trains the next one.
pub fn run_loop(cfg: &LoopConfig, backends: &Backends, resume: bool) -> Result<Vec<IterationState>> {
    cfg.validate()?;
    prepare_run_dir(cfg, resume)?;
    let corpus = prepare_corpus(cfg, backends)?;
    let workers = cfg.effective_workers();

    let base_path = cfg.run_dir.join("base").join("checkpoint.json");
    let mut policy = if base_path.exists() {
        checkpoint::load(&base_path)?
    } else {
        let (policy, history) = build_base_policy(&corpus, cfg)?;
        io::write_json(&cfg.run_dir.join("base").join("warm_start.json"), &history)?;
        checkpoint::save(&base_path, &policy)?;
        log::info!("base policy: vocab {}, warm-start NLL {:?}", policy.tokenizer.len(), history.last());
        policy
    };

    let all = corpus.records_in(&[Split::Train, Split::Dev, Split::Test]);
    let mut previous: Option<Vec<(ParaphraseRecord, Verdict)>> = None;
    let mut states = Vec::with_capacity(cfg.iterations);

    for i in 0..cfg.iterations {
        let dir = iteration_dir(&cfg.run_dir, i);
        if iteration_complete(&dir) {
            let (state, paraphrases) = load_iteration(&dir, i)?;
            log::info!("iteration {i}: complete on disk, weighted F1 {:.4}", state.classification.weighted_f1);
            previous = Some(paraphrases.into_iter().map(|p| {
                let v = state.verdicts[&p.claim_id];
                (p, v)
            }).collect());
            policy = checkpoint::load(&dir.join("checkpoint.json"))?;
            states.push(state);
            continue;
        }
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| IoError::fs(&dir, e))?;
        }

        let paraphrases = generate_paraphrases(&policy, &corpus, &all, cfg, i)?;
        let texts: BTreeMap<String, String> = paraphrases.iter().map(|p| (p.claim_id.clone(), p.text.clone())).collect();
        let verdicts = check_all(&*backends.fact_checker, &corpus, &texts, workers, "fact check")?;
        let (classification, similarity, lengths) = test_reports(&corpus, &texts, &verdicts)?;

        let mut files: Vec<(&str, Vec<u8>)> = vec![
            ("paraphrases.jsonl", io::to_jsonl(&paraphrases)),
            ("verdicts.jsonl", io::to_jsonl(&verdict_records(&corpus, &verdicts))),
            ("classification.json", io::to_pretty_json(&classification)),
            ("similarity.json", io::to_pretty_json(&similarity)),
            ("lengths.json", io::to_pretty_json(&lengths)),
        ];

        let (pair_stats, train_report) = {
            let prev = match previous.take() {
                Some(p) => p,
                None => tweet_baseline(cfg, &corpus, backends)?,
            };
            let prev_verdicts: BTreeMap<String, Verdict> = prev.iter().map(|(p, v)| (p.claim_id.clone(), *v)).collect();
            let prev_texts: Vec<ParaphraseRecord> = prev.into_iter().map(|(p, _)| p).collect();
            let source = i as i64 - 1;
            let pair_seed = SeedPath::new(cfg.master_seed).with_str("pairs").with_u64(i as u64).seed();
            let mut sets = Vec::new();
            for split in [Split::Train, Split::Dev] {
                let cur = scored(&paraphrases, &verdicts, i as i64, split);
                let old = scored(&prev_texts, &prev_verdicts, source, split);
                let golds = cur.keys().map(|id| (id.clone(), corpus.dataset.get(id).expect("known").gold_label)).collect();
                let prompts =
                    cur.keys().map(|id| (id.clone(), policy_prompt(corpus.tweet(id), cfg.variant))).collect();
                sets.push(build_pairs(&cur, &old, &golds, &prompts, pair_seed)?);
            }
            let (train_set, dev_set) = (&sets[0], &sets[1]);
            let (next, report) = dpo_update(&policy, &train_set.pairs, &dev_set.pairs, cfg, i)?;
            let stats = PairStats {
                pair_count: train_set.pairs.len(),
                skip_count: train_set.skipped,
                dev_pair_count: dev_set.pairs.len(),
                rationale_counts: train_set.rationale_counts.clone(),
            };
            files.push(("preferences.jsonl", io::to_jsonl(&train_set.pairs)));
            files.push(("pairs.json", io::to_pretty_json(&stats)));
            if let Some(r) = &report {
                files.push(("train_report.json", io::to_pretty_json(r)));
            }
            files.push(("checkpoint.json", checkpoint::Checkpoint::new(&next).to_bytes()));
            policy = next;
            (Some(stats), report)
        };

        let mut manifest = Manifest { iteration: i, files: BTreeMap::new() };
        for (name, bytes) in &files {
            io::write_atomic(&dir.join(name), bytes)?;
            manifest.files.insert((*name).to_string(), io::sha256_hex(bytes));
        }
        io::write_json(&dir.join("manifest.json"), &manifest)?;

        log::info!(
            "iteration {i}: weighted F1 {:.4}, mean length {:.2}, pairs {:?}",
            classification.weighted_f1,
            lengths.mean_words,
            pair_stats.as_ref().map(|s| s.pair_count)
        );
        previous = Some(paraphrases.iter().cloned().map(|p| {
            let v = verdicts[&p.claim_id];
            (p, v)
        }).collect());
        states.push(IterationState {
            index: i,
            paraphrases: texts,
            verdicts,
            classification,
            similarity,
            lengths,
            pairs: pair_stats,
            train_report,
        });
    }
    Ok(states)
}

/// Evaluates the four baselines and stores them under `baselines/`.
pub fn run_baselines(cfg: &LoopConfig, backends: &Backends, variants: &[InputVariant]) -> Result<Vec<VariantEvaluation>> {
    cfg.validate()?;
    check_snapshot(cfg)?;
    let corpus = prepare_corpus(cfg, backends)?;
    let mut out = Vec::new();
    for &variant in variants {
        let eval = evaluate_variant(
            variant,
            &corpus,
            backends,
            None,
            cfg.master_seed,
            cfg.generation.temperature,
            cfg.effective_workers(),
        )?;
        let dir = cfg.run_dir.join("baselines").join(variant.dir_name());
        let texts: Vec<ParaphraseRecord> = eval
            .texts
            .iter()
            .map(|(id, t)| ParaphraseRecord { claim_id: id.clone(), split: Split::Test, text: t.clone(), fallback: false })
            .collect();
        io::write_jsonl(&dir.join("texts.jsonl"), &texts)?;
        io::write_jsonl(&dir.join("verdicts.jsonl"), &verdict_records(&corpus, &eval.verdicts))?;
        io::write_json(&dir.join("classification.json"), &eval.classification)?;
        io::write_json(&dir.join("similarity.json"), &eval.similarity)?;
        io::write_json(&dir.join("lengths.json"), &eval.lengths)?;
        log::info!("baseline {variant}: weighted F1 {:.4}", eval.classification.weighted_f1);
        out.push(eval);
    }
    Ok(out)
}
