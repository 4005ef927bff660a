use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_word_request, select_words, ScoreError, Scorer, WordLogProb, WordScore};

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordEntry {
    pub template: String,
    pub word: String,
    pub mean_log_prob: f64,
    #[serde(default = "one")]
    pub token_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PllEntry {
    pub sentence: String,
    pub index: usize,
    pub sum_log_prob: f64,
    #[serde(default = "one")]
    pub token_count: u32,
}

/// Fixture file layout: `{"words": [...], "pll": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureTable {
    #[serde(default)]
    pub words: Vec<WordEntry>,
    #[serde(default)]
    pub pll: Vec<PllEntry>,
}

/// Looks every answer up in a fixture. Later entries for the same key win.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    words: HashMap<(String, String), WordScore>,
    pll: HashMap<(String, usize), WordLogProb>,
}

impl TableScorer {
    pub fn new(table: FixtureTable) -> Self {
        let words = table
            .words
            .into_iter()
            .map(|e| {
                (
                    (e.template, e.word),
                    WordScore {
                        mean_log_prob: e.mean_log_prob,
                        token_count: e.token_count,
                    },
                )
            })
            .collect();
        let pll = table
            .pll
            .into_iter()
            .map(|e| {
                (
                    (e.sentence, e.index),
                    WordLogProb {
                        sum_log_prob: e.sum_log_prob,
                        token_count: e.token_count,
                    },
                )
            })
            .collect();
        TableScorer { words, pll }
    }
}

impl Scorer for TableScorer {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError> {
        check_word_request(template, word)?;
        self.words
            .get(&(template.to_string(), word.to_string()))
            .copied()
            .ok_or_else(|| ScoreError::MissingWordEntry {
                template: template.into(),
                word: word.into(),
            })
    }

    fn score_sentence_words(
        &self,
        sentence: &str,
        word_indices: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError> {
        select_words(sentence, word_indices)?;
        word_indices
            .iter()
            .map(|&index| {
                self.pll
                    .get(&(sentence.to_string(), index))
                    .copied()
                    .ok_or_else(|| ScoreError::MissingPllEntry {
                        sentence: sentence.into(),
                        index,
                    })
            })
            .collect()
    }
}
