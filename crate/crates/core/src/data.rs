//! Dataset schema, personas and synthetic tweet generation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::rng::StreamRng;
use crate::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "val" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(DataError::UnknownSplit(s.into())),
        }
    }
}

/// One seed claim with its gold evidence and verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    pub seed_claim: String,
    pub evidence: String,
    pub gold_label: Label,
    pub split: Split,
}

impl ClaimRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.id.trim().is_empty() {
            return Err(DataError::EmptyField { id: self.id.clone(), field: "id" });
        }
        if self.seed_claim.trim().is_empty() {
            return Err(DataError::EmptyField { id: self.id.clone(), field: "seed_claim" });
        }
        if self.evidence.trim().is_empty() {
            return Err(DataError::EmptyField { id: self.id.clone(), field: "evidence" });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("record {id:?}: field {field} is empty")]
    EmptyField { id: String, field: &'static str },
    #[error("duplicate claim id {0:?}")]
    DuplicateId(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("tweet references unknown claim id {0:?}")]
    UnknownClaim(String),
    #[error("tweet for claim {0:?} has empty text")]
    EmptyTweet(String),
    #[error("seed claim is empty")]
    EmptyPrompt,
}

/// Immutable, validated collection of claim records in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    records: Vec<ClaimRecord>,
    index: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn from_records(records: Vec<ClaimRecord>) -> Result<Self, DataError> {
        let mut index = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if index.insert(r.id.clone(), i).is_some() {
                return Err(DataError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Dataset { records, index })
    }

    pub fn records(&self) -> &[ClaimRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ClaimRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ClaimRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.split).or_insert(0) += 1;
        }
        counts
    }
}

// Verbatim attribute lists for persona construction. "British" appears twice
// in the source list; `PersonaPool::standard` collapses the duplicate.
pub const RAW_DEMOGRAPHICS: [&str; 21] = [
    "a teenager",
    "a young adult",
    "an adult",
    "a senior citizen",
    "a male social media user",
    "a female  social media user",
    "a non-binary social media user",
    "American",
    "Canadian",
    "British",
    "Indian",
    "Chinese",
    "Brazilian",
    "Nigerian",
    "Mexican",
    "Japanese",
    "Australian",
    "British",
    "French",
    "German",
    "Italian",
];

pub const PROFESSIONS: [&str; 34] = [
    "a retail cashier",
    "a teacher",
    "a receptionist",
    "a customer service representative",
    "a construction worker",
    "a security guard",
    "a barista",
    "a truck driver",
    "an electrician",
    "a plumber",
    "a carpenter",
    "a mechanic",
    "a HVAC technician",
    "a welder",
    "a software engineer",
    "a nurse",
    "an accountant",
    "a marketing manager",
    "a human resources manager",
    "a graphic designer",
    "a real estate agent",
    "a pharmacist",
    "a data scientist",
    "a robotics engineer",
    "a cybersecurity analyst",
    "a marine biologist",
    "a cryptographer",
    "a neurosurgeon",
    "an ethical hacker",
    "a sommelier",
    "an artisan cheesemaker",
    "an astronaut",
    "a high school student",
    "a college student",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub demographic_1: String,
    pub demographic_2: String,
    pub profession: String,
}

/// De-duplicated attribute lists that personas are sampled from.
#[derive(Clone, Debug)]
pub struct PersonaPool {
    demographics: Vec<String>,
    professions: Vec<String>,
}

impl PersonaPool {
    pub fn standard() -> Self {
        Self::from_lists(&RAW_DEMOGRAPHICS, &PROFESSIONS)
    }

    /// Whitespace is collapsed and exact duplicates dropped (first one wins).
    pub fn from_lists(demographics: &[&str], professions: &[&str]) -> Self {
        PersonaPool {
            demographics: dedup_entries(demographics, "demographic"),
            professions: dedup_entries(professions, "profession"),
        }
    }

    pub fn demographics(&self) -> &[String] {
        &self.demographics
    }

    pub fn professions(&self) -> &[String] {
        &self.professions
    }

    /// Samples two distinct demographic entries (by rejection) and one
    /// profession, all uniformly.
    pub fn build_persona(&self, rng: &mut StreamRng) -> Persona {
        let n = self.demographics.len();
        let d1 = rng.random_range(0..n);
        let d2 = if n > 1 {
            loop {
                let candidate = rng.random_range(0..n);
                if candidate != d1 {
                    break candidate;
                }
            }
        } else {
            d1
        };
        let p = rng.random_range(0..self.professions.len());
        Persona {
            demographic_1: self.demographics[d1].clone(),
            demographic_2: self.demographics[d2].clone(),
            profession: self.professions[p].clone(),
        }
    }
}

fn dedup_entries(entries: &[&str], kind: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in entries {
        let clean = crate::text::collapse_whitespace(e);
        if seen.insert(clean.clone()) {
            out.push(clean);
        } else {
            log::info!("collapsed duplicate {kind} entry {clean:?}");
        }
    }
    out
}

/// Samples a persona from the standard attribute lists.
pub fn build_persona(rng: &mut StreamRng) -> Persona {
    PersonaPool::standard().build_persona(rng)
}

pub fn persona_system_prompt(p: &Persona) -> String {
    format!("You are {}. You are {}. You are {}.", p.demographic_1, p.demographic_2, p.profession)
}

/// Marker preceding the seed claim in the tweet-writing prompt.
pub const STATEMENT_MARKER: &str = "Here is the statement: ";

/// The structured-reply instruction shared by the tweet and zero-shot prompts.
pub const JSON_INSTRUCTION: &str =
    "Please format your reply as valid json: {\"post\": \"YOUR REPLY\"} Only output the json.";

pub fn tweet_prompt(c: &ClaimRecord) -> Result<String, DataError> {
    let claim = c.seed_claim.trim();
    if claim.is_empty() {
        return Err(DataError::EmptyPrompt);
    }
    Ok(format!(
        "Your task is to write a Twitter post in which you paraphrase a claim or statement that I give you. \
         Please paraphrase the statement so that it reads like one of your social media posts. \
         {JSON_INSTRUCTION} {STATEMENT_MARKER}{claim}"
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Backend,
    Template,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub claim_id: String,
    pub text: String,
    pub persona: Persona,
    pub provenance: Provenance,
}

/// Checks tweets against a dataset: every claim id resolves, texts are
/// non-empty, at most one tweet per claim.
pub fn index_tweets<'a>(
    dataset: &Dataset,
    tweets: &'a [TweetRecord],
) -> Result<BTreeMap<String, &'a TweetRecord>, DataError> {
    let mut out = BTreeMap::new();
    for t in tweets {
        if dataset.get(&t.claim_id).is_none() {
            return Err(DataError::UnknownClaim(t.claim_id.clone()));
        }
        if t.text.trim().is_empty() {
            return Err(DataError::EmptyTweet(t.claim_id.clone()));
        }
        if out.insert(t.claim_id.clone(), t).is_some() {
            return Err(DataError::DuplicateId(t.claim_id.clone()));
        }
    }
    Ok(out)
}

/// A single text-generation call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub system: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

/// Anything that turns a (system, prompt) pair into text.
pub trait GeneratorBackend {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError>;

    fn provenance(&self) -> Provenance {
        Provenance::Backend
    }
}

impl<T: GeneratorBackend + ?Sized> GeneratorBackend for &T {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }

    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("could not extract a post from the reply: {raw:?}")]
    ExtractionFailure { raw: String },
}

impl SynthError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SynthError::Backend(e) if e.is_retryable())
    }
}

/// Pulls the `post` field out of a structured reply.
///
/// Accepts bare JSON, JSON wrapped in a code fence, or JSON embedded in
/// surrounding chatter (the first `{` to the last `}`).
pub fn parse_structured_reply(raw: &str) -> Option<String> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end < start {
        return None;
    }
    let value: serde_json::Value = serde_json::from_str(&raw[start..=end]).ok()?;
    let post = value.get("post")?.as_str()?;
    let post = crate::text::collapse_whitespace(post);
    (!post.is_empty()).then_some(post)
}

/// Renders a structured reply the way an instruction-following model would.
pub fn structured_reply(post: &str) -> String {
    let mut map = serde_json::Map::new();
    map.insert("post".to_string(), serde_json::Value::String(post.to_string()));
    serde_json::Value::Object(map).to_string()
}

pub fn synthesize_tweet<G: GeneratorBackend + ?Sized>(
    backend: &G,
    claim: &ClaimRecord,
    persona: &Persona,
    seed: u64,
    temperature: f64,
) -> Result<TweetRecord, SynthError> {
    let request = GenerateRequest {
        system: persona_system_prompt(persona),
        prompt: tweet_prompt(claim)?,
        temperature,
        max_new_tokens: 256,
        seed,
    };
    let raw = backend.generate(&request)?;
    let text = parse_structured_reply(&raw).ok_or(SynthError::ExtractionFailure { raw })?;
    Ok(TweetRecord {
        claim_id: claim.id.clone(),
        text,
        persona: persona.clone(),
        provenance: backend.provenance(),
    })
}

/// Tweet frames used by the template generator. `{claim}` is replaced by the
/// seed claim verbatim.
///
/// Every frame follows the statement with exactly eight word tokens, so the
/// statement always sits at the same distance from the end of the post.
pub const TWEET_FRAMES: [&str; 6] = [
    "Just learned that {claim}! Stay safe folks and spread the word. #health",
    "Did you know that {claim}? Sharing with family friends and coworkers today. #wellness",
    "Someone at work told me {claim}. Wow honestly mind blown right now everyone! #staysafe",
    "Apparently {claim}! Asking my doctor tomorrow morning first thing. #medtwitter",
    "My neighbor swears {claim}. Bookmarking this thread forever seriously great info. #facts",
    "Reading everywhere today that {claim}! Stay safe folks and spread the word. #healthtips",
];

/// Marker preceding the post in every extraction prompt.
pub const TEXT_MARKER: &str = "Here is the text: ";

/// A model-free generator.
///
/// Tweet-writing prompts get a seeded frame around the statement. Extraction
/// prompts get the first sentence of the post with hashtags removed. Replies
/// are structured like a real model's.
#[derive(Clone, Copy, Debug, Default)]
pub struct TemplateGenerator;

impl TemplateGenerator {
    pub fn render_frame(frame: usize, claim: &str) -> String {
        TWEET_FRAMES[frame % TWEET_FRAMES.len()].replace("{claim}", claim)
    }

    pub fn frame_for_seed(seed: u64) -> usize {
        let mut rng = crate::rng::rng_from_seed(seed);
        rng.random_range(0..TWEET_FRAMES.len())
    }

    /// First sentence of a post, hashtags dropped, whitespace collapsed.
    pub fn first_sentence(post: &str) -> String {
        let mut end = post.len();
        let mut iter = post.char_indices().peekable();
        while let Some((i, c)) = iter.next() {
            if matches!(c, '.' | '!' | '?') && iter.peek().is_none_or(|(_, n)| n.is_whitespace()) {
                end = i;
                break;
            }
        }
        let sentence: Vec<&str> = post[..end].split_whitespace().filter(|w| !w.starts_with('#')).collect();
        sentence.join(" ")
    }
}

impl GeneratorBackend for TemplateGenerator {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        if let Some(pos) = request.prompt.rfind(STATEMENT_MARKER) {
            let claim = request.prompt[pos + STATEMENT_MARKER.len()..].trim();
            if claim.is_empty() {
                return Err(BackendError::InvalidInput("empty statement".into()));
            }
            let frame = Self::frame_for_seed(request.seed);
            return Ok(structured_reply(&Self::render_frame(frame, claim)));
        }
        if let Some(pos) = request.prompt.rfind(TEXT_MARKER) {
            let post = request.prompt[pos + TEXT_MARKER.len()..].trim();
            let sentence = Self::first_sentence(post);
            let reply = if sentence.is_empty() { crate::text::collapse_whitespace(post) } else { sentence };
            if reply.is_empty() {
                return Err(BackendError::InvalidInput("empty post".into()));
            }
            return Ok(structured_reply(&reply));
        }
        Err(BackendError::InvalidInput(format!(
            "template generator does not recognise the prompt: {:?}",
            request.prompt
        )))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Template
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use alloc::vec;

    fn record(id: &str, claim: &str) -> ClaimRecord {
        ClaimRecord {
            id: id.into(),
            seed_claim: claim.into(),
            evidence: "some evidence".into(),
            gold_label: Label::Supported,
            split: Split::Train,
        }
    }

    #[test]
    fn dataset_rejects_duplicates_and_blank_fields() {
        let err = Dataset::from_records(vec![record("c1", "x"), record("c1", "y")]).unwrap_err();
        assert_eq!(err, DataError::DuplicateId("c1".into()));
        let err = Dataset::from_records(vec![record("c2", "   ")]).unwrap_err();
        assert!(matches!(err, DataError::EmptyField { field: "seed_claim", .. }));
    }

    #[test]
    fn standard_pool_collapses_duplicate_demographic() {
        let pool = PersonaPool::standard();
        assert_eq!(RAW_DEMOGRAPHICS.len(), 21);
        assert_eq!(pool.demographics().len(), 20);
        assert_eq!(pool.professions().len(), 34);
        assert!(pool.demographics().iter().any(|d| d == "a female social media user"));
    }

    #[test]
    fn persona_seed_42_is_pinned() {
        // Regression value fixed from the first run of the seeded sampler.
        let p = build_persona(&mut rng_from_seed(42));
        assert_eq!(p, build_persona(&mut rng_from_seed(42)));
        assert_eq!(
            (p.demographic_1.as_str(), p.demographic_2.as_str(), p.profession.as_str()),
            PINNED_SEED_42
        );
    }

    const PINNED_SEED_42: (&str, &str, &str) = ("a male social media user", "Nigerian", "a construction worker");

    #[test]
    fn persona_demographics_distinct() {
        let pool = PersonaPool::standard();
        let mut rng = rng_from_seed(3);
        for _ in 0..2000 {
            let p = pool.build_persona(&mut rng);
            assert_ne!(p.demographic_1, p.demographic_2);
        }
    }

    #[test]
    fn persona_prompt_template() {
        let p = Persona {
            demographic_1: "a teenager".into(),
            demographic_2: "a non-binary social media user".into(),
            profession: "a high school student".into(),
        };
        assert_eq!(
            persona_system_prompt(&p),
            "You are a teenager. You are a non-binary social media user. You are a high school student."
        );
        let p = Persona { demographic_1: "American".into(), demographic_2: "French".into(), profession: "a plumber".into() };
        let prompt = persona_system_prompt(&p);
        assert_eq!(prompt, "You are American. You are French. You are a plumber.");
        assert_eq!(prompt.matches("You are ").count(), 3);
    }

    #[test]
    fn tweet_prompt_shape() {
        let prompt = tweet_prompt(&record("c", "X cures Y")).unwrap();
        assert!(prompt.ends_with("Here is the statement: X cures Y"));
        assert!(prompt.contains("Only output the json"));
        assert!(prompt.contains("{\"post\": \"YOUR REPLY\"}"));
        assert_eq!(tweet_prompt(&record("c", " ")), Err(DataError::EmptyPrompt));
    }

    #[test]
    fn template_frame_zero() {
        let tweet = TemplateGenerator::render_frame(0, "garlic water cures COVID-19");
        assert!(tweet.starts_with("Just learned that garlic water cures COVID-19! "));
    }

    #[test]
    fn frames_share_trailing_length() {
        for frame in TWEET_FRAMES {
            let (_, tail) = frame.split_once("{claim}").unwrap();
            assert_eq!(crate::text::words(tail).len(), 8, "{frame}");
        }
    }

    #[test]
    fn template_synthesis_is_deterministic_and_embeds_claim() {
        let c = record("c9", "zinc lozenges prevent influenza");
        let persona = build_persona(&mut rng_from_seed(1));
        let a = synthesize_tweet(&TemplateGenerator, &c, &persona, 99, 0.7).unwrap();
        let b = synthesize_tweet(&TemplateGenerator, &c, &persona, 99, 0.7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.provenance, Provenance::Template);
        assert!(a.text.contains(&c.seed_claim));
    }

    #[test]
    fn structured_reply_parsing() {
        assert_eq!(parse_structured_reply("{\"post\": \"hi  there\"}").as_deref(), Some("hi there"));
        assert_eq!(parse_structured_reply("```json\n{\"post\": \"x\"}\n```").as_deref(), Some("x"));
        assert_eq!(parse_structured_reply("no json here"), None);
        assert_eq!(parse_structured_reply("{\"text\": \"x\"}"), None);
    }

    struct Broken;
    impl GeneratorBackend for Broken {
        fn generate(&self, _: &GenerateRequest) -> Result<String, BackendError> {
            Ok("sure! here you go".into())
        }
    }

    #[test]
    fn malformed_reply_carries_raw_text() {
        let c = record("c1", "x cures y");
        let persona = build_persona(&mut rng_from_seed(1));
        let err = synthesize_tweet(&Broken, &c, &persona, 1, 0.7).unwrap_err();
        assert_eq!(err, SynthError::ExtractionFailure { raw: "sure! here you go".into() });
    }

    #[test]
    fn template_extraction_takes_first_sentence() {
        assert_eq!(
            TemplateGenerator::first_sentence("Did you know that vitamin d treats asthma? Wow. #health"),
            "Did you know that vitamin d treats asthma"
        );
        assert_eq!(TemplateGenerator::first_sentence("#tag only words"), "only words");
        assert_eq!(TemplateGenerator::first_sentence("covid-19 is 2.5 times worse"), "covid-19 is 2.5 times worse");
    }
}
