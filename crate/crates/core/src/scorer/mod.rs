//! Masked-word log-probability backends.
//!
//! Every backend answers two questions:
//!
//! * [`Scorer::score_word`]: the mean per-subtoken log-probability of `word`
//!   filling the `[KW]` slot of a template, with all of the word's subtokens
//!   masked at once.
//! * [`Scorer::score_sentence_words`]: pseudo-log-likelihood terms, i.e. for
//!   each requested whitespace word the summed log-probability of its
//!   subtokens when that word alone is masked.
//!
//! Logs are natural logs throughout.

mod cache;
mod hash;
mod remote;
mod table;
mod unigram;

pub use cache::Cached;
pub use hash::HashScorer;
pub use remote::{wire, RemoteScorer};
pub use table::{FixtureTable, PllEntry, TableScorer, WordEntry};
pub use unigram::UnigramScorer;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::slot_count;
use crate::freqprior::{FreqError, FreqTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub mean_log_prob: f64,
    pub token_count: u32,
}

/// One pseudo-log-likelihood term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordLogProb {
    pub sum_log_prob: f64,
    pub token_count: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("invalid scorer input: {0}")]
    InvalidInput(String),
    #[error("fixture has no entry for `{word}` in `{template}`")]
    MissingWordEntry { template: String, word: String },
    #[error("fixture has no entry for word {index} of `{sentence}`")]
    MissingPllEntry { sentence: String, index: usize },
    #[error("word `{0}` is not in the frequency table")]
    UnknownWord(String),
    #[error("word index {index} out of range for a {len}-word sentence")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("remote scorer {endpoint}: {message} (request {payload})")]
    Remote {
        endpoint: String,
        message: String,
        payload: String,
    },
}

pub trait Scorer: Send + Sync {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError>;

    fn score_sentence_words(
        &self,
        sentence: &str,
        word_indices: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError> {
        (**self).score_word(template, word)
    }

    fn score_sentence_words(
        &self,
        sentence: &str,
        idx: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError> {
        (**self).score_sentence_words(sentence, idx)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError> {
        (**self).score_word(template, word)
    }

    fn score_sentence_words(
        &self,
        sentence: &str,
        idx: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError> {
        (**self).score_sentence_words(sentence, idx)
    }
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError> {
        (**self).score_word(template, word)
    }

    fn score_sentence_words(
        &self,
        sentence: &str,
        idx: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError> {
        (**self).score_sentence_words(sentence, idx)
    }
}

/// Shared precondition of `score_word` for every backend.
pub(crate) fn check_word_request(template: &str, word: &str) -> Result<(), ScoreError> {
    let count = slot_count(template);
    if count != 1 {
        return Err(ScoreError::InvalidInput(format!(
            "template must contain exactly one [KW], found {count}: `{template}`"
        )));
    }
    if word.trim().is_empty() {
        return Err(ScoreError::InvalidInput("empty word".into()));
    }
    Ok(())
}

/// Whitespace words of `sentence` at `indices`, bounds-checked.
pub(crate) fn select_words<'a>(
    sentence: &'a str,
    indices: &[usize],
) -> Result<Vec<&'a str>, ScoreError> {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    indices
        .iter()
        .map(|&index| {
            words
                .get(index)
                .copied()
                .ok_or(ScoreError::IndexOutOfRange {
                    index,
                    len: words.len(),
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Backend {
    /// Fixed values from a JSON fixture file.
    Table { fixture: PathBuf },
    /// Context-free `log g(word)` from a frequency table.
    Unigram { freq_table: PathBuf },
    /// Deterministic pseudo-random values keyed by input and seed.
    Hash { seed: u64 },
    /// A scoring service speaking the `/v1` JSON protocol.
    Remote {
        endpoint: String,
        max_in_flight: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub backend: Backend,
    pub cache_enabled: bool,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed fixture {path}: {source}")]
    Fixture {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error("invalid remote configuration: {0}")]
    Remote(String),
}

fn read_bytes(path: &PathBuf) -> Result<Vec<u8>, BuildError> {
    std::fs::read(path).map_err(|source| BuildError::Io {
        path: path.clone(),
        source,
    })
}

impl ScorerConfig {
    pub fn build(&self) -> Result<Arc<dyn Scorer>, BuildError> {
        let inner: Arc<dyn Scorer> = match &self.backend {
            Backend::Table { fixture } => {
                let bytes = read_bytes(fixture)?;
                let table: FixtureTable =
                    serde_json::from_slice(&bytes).map_err(|source| BuildError::Fixture {
                        path: fixture.clone(),
                        source,
                    })?;
                Arc::new(TableScorer::new(table))
            }
            Backend::Unigram { freq_table } => {
                Arc::new(UnigramScorer::new(FreqTable::load(freq_table)?))
            }
            Backend::Hash { seed } => Arc::new(HashScorer::new(*seed)),
            Backend::Remote {
                endpoint,
                max_in_flight,
            } => Arc::new(RemoteScorer::new(endpoint, *max_in_flight).map_err(BuildError::Remote)?),
        };
        Ok(if self.cache_enabled {
            Arc::new(Cached::new(inner))
        } else {
            inner
        })
    }

    /// SHA-256 over everything that can change returned values: backend kind,
    /// the contents (not the path) of any backing file, the seed or endpoint.
    pub fn digest(&self) -> Result<String, BuildError> {
        let mut h = Sha256::new();
        match &self.backend {
            Backend::Table { fixture } => {
                h.update(b"table\0");
                h.update(read_bytes(fixture)?);
            }
            Backend::Unigram { freq_table } => {
                h.update(b"unigram\0");
                h.update(read_bytes(freq_table)?);
            }
            Backend::Hash { seed } => {
                h.update(b"hash\0");
                h.update(seed.to_le_bytes());
            }
            Backend::Remote { endpoint, .. } => {
                h.update(b"remote\0");
                h.update(endpoint.as_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn backend_name(&self) -> &'static str {
        match self.backend {
            Backend::Table { .. } => "table",
            Backend::Unigram { .. } => "unigram",
            Backend::Hash { .. } => "hash",
            Backend::Remote { .. } => "remote",
        }
    }
}
