use std::collections::HashMap;
use std::hash::Hash;
use std::sync::{Arc, Mutex, OnceLock};

use super::{ScoreError, Scorer, WordLogProb, WordScore};

type Slot<T> = Arc<OnceLock<Result<T, ScoreError>>>;
type Memo<K, T> = Mutex<HashMap<K, Slot<T>>>;

/// Memoizing wrapper keyed by the exact request strings.
///
/// Concurrent callers asking for the same key wait on a single backend call,
/// so the wrapped scorer sees at most one request per distinct key. Errors
/// are memoized as well.
pub struct Cached<S> {
    inner: S,
    words: Memo<(String, String), WordScore>,
    sentences: Memo<(String, Vec<usize>), Vec<WordLogProb>>,
}

impl<S: Scorer> Cached<S> {
    pub fn new(inner: S) -> Self {
        Cached {
            inner,
            words: Mutex::default(),
            sentences: Mutex::default(),
        }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

fn slot<K: Eq + Hash, T>(map: &Mutex<HashMap<K, Slot<T>>>, key: K) -> Slot<T> {
    let mut guard = map.lock().unwrap_or_else(|e| e.into_inner());
    guard.entry(key).or_default().clone()
}

impl<S: Scorer> Scorer for Cached<S> {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError> {
        slot(&self.words, (template.to_string(), word.to_string()))
            .get_or_init(|| self.inner.score_word(template, word))
            .clone()
    }

    fn score_sentence_words(
        &self,
        sentence: &str,
        word_indices: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError> {
        slot(
            &self.sentences,
            (sentence.to_string(), word_indices.to_vec()),
        )
        .get_or_init(|| self.inner.score_sentence_words(sentence, word_indices))
        .clone()
    }
}
