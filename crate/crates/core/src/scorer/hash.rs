use sha2::{Digest, Sha256};

use super::{check_word_request, select_words, ScoreError, Scorer, WordLogProb, WordScore};

pub const HASH_MIN: f64 = -12.0;
pub const HASH_MAX: f64 = -0.5;

/// Deterministic stand-in for a language model.
///
/// Values are derived from SHA-256 of the seed and the request, so they are
/// identical on every platform. Each request gets 1 to 3 pseudo subtokens,
/// each with a log-probability drawn uniformly from `[-12, -0.5)`.
#[derive(Debug, Clone, Copy)]
pub struct HashScorer {
    seed: u64,
}

impl HashScorer {
    pub fn new(seed: u64) -> Self {
        HashScorer { seed }
    }

    /// (token_count, per-token log-probs) for a domain-separated key.
    fn draw(&self, domain: &[u8], parts: &[&[u8]]) -> (u32, [f64; 3]) {
        let mut h = Sha256::new();
        h.update(domain);
        h.update(self.seed.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        let bytes = h.finalize();
        let word =
            |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        let count = 1 + (word(0) % 3) as u32;
        let mut vals = [0.0; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            let unit = (word(k + 1) >> 11) as f64 / (1u64 << 53) as f64;
            *v = HASH_MIN + (HASH_MAX - HASH_MIN) * unit;
        }
        (count, vals)
    }
}

impl Scorer for HashScorer {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError> {
        check_word_request(template, word)?;
        let (count, vals) = self.draw(b"word", &[template.as_bytes(), word.as_bytes()]);
        let sum: f64 = vals[..count as usize].iter().sum();
        Ok(WordScore {
            mean_log_prob: (sum / count as f64).clamp(HASH_MIN, HASH_MAX),
            token_count: count,
        })
    }

    fn score_sentence_words(
        &self,
        sentence: &str,
        word_indices: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError> {
        select_words(sentence, word_indices)?;
        Ok(word_indices
            .iter()
            .map(|&i| {
                let (count, vals) =
                    self.draw(b"pll", &[sentence.as_bytes(), &(i as u64).to_le_bytes()]);
                WordLogProb {
                    sum_log_prob: vals[..count as usize].iter().sum(),
                    token_count: count,
                }
            })
            .collect())
    }
}
