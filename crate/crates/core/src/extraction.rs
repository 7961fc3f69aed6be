//! Claim-extraction prompts and reply clean-up.

use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::data::{parse_structured_reply, JSON_INSTRUCTION, TEXT_MARKER};
use crate::text::collapse_whitespace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    /// The prompt the trained policy sees.
    Dpo,
    /// Zero-shot "core claim" extraction.
    ZeroshotCore,
    /// Zero-shot "checkworthy claim" extraction.
    ZeroshotCheckworthy,
}

impl PromptVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Dpo => "dpo",
            PromptVariant::ZeroshotCore => "zeroshot_core",
            PromptVariant::ZeroshotCheckworthy => "zeroshot_checkworthy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionPrompt {
    pub system: String,
    pub task: String,
}

impl ExtractionPrompt {
    /// Single string fed to the toy policy.
    pub fn policy_text(&self) -> String {
        format!("{} {}", self.system, self.task)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("cannot build an extraction prompt for an empty post")]
pub struct EmptyPost;

pub fn extraction_prompt(tweet: &str, variant: PromptVariant) -> Result<ExtractionPrompt, EmptyPost> {
    let tweet = collapse_whitespace(tweet);
    if tweet.is_empty() {
        return Err(EmptyPost);
    }
    let (system, task) = match variant {
        PromptVariant::Dpo => (
            "You are a fact checking assistant.",
            format!("Your task is to extract the checkworthy claim from a piece of text. {TEXT_MARKER}{tweet}"),
        ),
        PromptVariant::ZeroshotCore => (
            "You are a helpful, highly skilled assistant.",
            format!("Your task is to extract the core claim from a piece of text. {JSON_INSTRUCTION} {TEXT_MARKER}{tweet}"),
        ),
        PromptVariant::ZeroshotCheckworthy => (
            "You are an experienced fact checker.",
            format!(
                "Your task is to extract the checkworthy claim from a piece of text. {JSON_INSTRUCTION} {TEXT_MARKER}{tweet}"
            ),
        ),
    };
    Ok(ExtractionPrompt { system: system.into(), task })
}

/// Strips a structured-output wrapper if present, trims and collapses
/// whitespace. May return an empty string.
pub fn clean_paraphrase(raw: &str) -> String {
    parse_structured_reply(raw).unwrap_or_else(|| collapse_whitespace(raw))
}
