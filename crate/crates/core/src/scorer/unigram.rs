use super::{check_word_request, select_words, ScoreError, Scorer, WordLogProb, WordScore};
use crate::freqprior::FreqTable;

/// Context-free backend: every word scores `ln g(word)` regardless of the
/// template or sentence around it.
#[derive(Debug, Clone)]
pub struct UnigramScorer {
    table: FreqTable,
}

impl UnigramScorer {
    pub fn new(table: FreqTable) -> Self {
        UnigramScorer { table }
    }

    fn log_freq(&self, word: &str) -> Result<f64, ScoreError> {
        self.table
            .log_freq(word)
            .map_err(|_| ScoreError::UnknownWord(word.to_string()))
    }
}

impl Scorer for UnigramScorer {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError> {
        check_word_request(template, word)?;
        Ok(WordScore {
            mean_log_prob: self.log_freq(word)?,
            token_count: 1,
        })
    }

    fn score_sentence_words(
        &self,
        sentence: &str,
        word_indices: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError> {
        select_words(sentence, word_indices)?
            .into_iter()
            .map(|w| {
                Ok(WordLogProb {
                    sum_log_prob: self.log_freq(w)?,
                    token_count: 1,
                })
            })
            .collect()
    }
}
