//! Control-group construction.
//!
//! Gender controls swap gendered words through a two-column lexicon. Race and
//! profession controls replace the group term with terms drawn at random from
//! a list of other groups of the same kind.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    contains_whole_word, replace_whole_word, BiasType, PairSample, QuadSample, Sample,
};

const ENGLISH_GENDER: &str = include_str!("../data/gender_lexicon.tsv");

#[derive(Debug, Error)]
pub enum ControlGenError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("group list line {line}: {message}")]
    GroupList { line: usize, message: String },
    #[error("group list is empty")]
    EmptyGroupList,
    #[error("group term `{term}` does not occur in template `{template}`")]
    GroupTermAbsent { term: String, template: String },
    #[error("need {needed} group terms other than `{term}`, list has {available}")]
    TooFewCandidates {
        term: String,
        needed: usize,
        available: usize,
    },
}

fn read(path: &Path) -> Result<String, ControlGenError> {
    fs::read_to_string(path).map_err(|source| ControlGenError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Symmetric word-for-word swaps, matched case-insensitively.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapLexicon {
    pairs: Vec<(String, String)>,
    partner: HashMap<String, String>,
}

impl SwapLexicon {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, ControlGenError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut lex = SwapLexicon {
            pairs: Vec::new(),
            partner: HashMap::new(),
        };
        for (k, (a, b)) in pairs.into_iter().enumerate() {
            lex.insert(k + 1, a.as_ref(), b.as_ref())?;
        }
        Ok(lex)
    }

    fn insert(&mut self, line: usize, a: &str, b: &str) -> Result<(), ControlGenError> {
        let err = |message: String| ControlGenError::Lexicon { line, message };
        let (a, b) = (a.trim().to_lowercase(), b.trim().to_lowercase());
        for t in [&a, &b] {
            if t.is_empty() || !t.chars().all(char::is_alphanumeric) {
                return Err(err(format!("`{t}` is not a single word")));
            }
        }
        if a == b {
            return Err(err(format!("`{a}` is paired with itself")));
        }
        for t in [&a, &b] {
            if self.partner.contains_key(t) {
                return Err(err(format!("`{t}` already appears in another pair")));
            }
        }
        self.partner.insert(a.clone(), b.clone());
        self.partner.insert(b.clone(), a.clone());
        self.pairs.push((a, b));
        Ok(())
    }

    /// `term_a<TAB>term_b` per line; blank lines and `#` comments are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, ControlGenError> {
        let mut lex = SwapLexicon::from_pairs(std::iter::empty::<(&str, &str)>())?;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let Some((a, b)) = line.split_once('\t') else {
                return Err(ControlGenError::Lexicon {
                    line: line_no,
                    message: "expected `term_a<TAB>term_b`".into(),
                });
            };
            lex.insert(line_no, a, b)?;
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, ControlGenError> {
        Self::parse_tsv(&read(path)?)
    }

    /// The bundled English male/female lexicon.
    pub fn english_gender() -> Self {
        Self::parse_tsv(ENGLISH_GENDER).expect("bundled lexicon is valid")
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn partner(&self, word: &str) -> Option<&str> {
        self.partner.get(&word.to_lowercase()).map(String::as_str)
    }
}

/// Carry the casing of `like` over to `word` (all caps, title case, else as is).
fn match_case(word: &str, like: &str) -> String {
    let mut letters = like.chars().filter(|c| c.is_alphabetic());
    let first_upper = letters.next().is_some_and(char::is_uppercase);
    let rest_upper = letters.clone().all(char::is_uppercase);
    let has_rest = letters.next().is_some();
    if first_upper && rest_upper && has_rest {
        word.to_uppercase()
    } else if first_upper {
        let mut cs = word.chars();
        cs.next()
            .map(|c| c.to_uppercase().chain(cs).collect())
            .unwrap_or_default()
    } else {
        word.to_string()
    }
}

/// Swap every lexicon word in one left-to-right pass.
///
/// Words are maximal runs of alphanumeric characters, so `[KW]` and
/// punctuation are left alone. A replaced word is never looked up again.
pub fn gender_swap(sentence: &str, lex: &SwapLexicon) -> (String, usize) {
    let mut out = String::with_capacity(sentence.len());
    let mut count = 0;
    let mut rest = sentence;
    while !rest.is_empty() {
        let split = rest
            .find(|c: char| c.is_alphanumeric() != rest.starts_with(char::is_alphanumeric))
            .unwrap_or(rest.len());
        let (run, tail) = rest.split_at(split);
        match lex
            .partner(run)
            .filter(|_| run.starts_with(char::is_alphanumeric))
        {
            Some(p) => {
                out.push_str(&match_case(p, run));
                count += 1;
            }
            None => out.push_str(run),
        }
        rest = tail;
    }
    (out, count)
}

/// Pairs become quads when their template contains at least one lexicon word
/// and the swapped quad is valid; the remaining ids are returned for review.
pub fn build_quads(pairs: &[PairSample], lex: &SwapLexicon) -> (Vec<QuadSample>, Vec<String>) {
    let mut quads = Vec::new();
    let mut skipped = Vec::new();
    for p in pairs {
        let (template_control, n) = gender_swap(&p.template, lex);
        let (group_term_control, _) = gender_swap(&p.group_term, lex);
        let q = QuadSample::from_halves(p, template_control, group_term_control);
        if n > 0 && q.violations().is_empty() {
            quads.push(q);
        } else {
            skipped.push(p.id.clone());
        }
    }
    (quads, skipped)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTermList {
    pub bias_type: BiasType,
    pub terms: Vec<String>,
}

impl GroupTermList {
    pub fn new(bias_type: BiasType, terms: Vec<String>) -> Result<Self, ControlGenError> {
        if terms.is_empty() {
            return Err(ControlGenError::EmptyGroupList);
        }
        let mut seen = HashMap::new();
        for (k, t) in terms.iter().enumerate() {
            if t.trim().is_empty() {
                return Err(ControlGenError::GroupList {
                    line: k + 1,
                    message: "empty term".into(),
                });
            }
            if let Some(first) = seen.insert(t.as_str(), k + 1) {
                return Err(ControlGenError::GroupList {
                    line: k + 1,
                    message: format!("`{t}` repeats entry {first}"),
                });
            }
        }
        Ok(GroupTermList { bias_type, terms })
    }

    /// One term per line; surrounding whitespace is trimmed, blank lines skipped.
    pub fn parse(bias_type: BiasType, text: &str) -> Result<Self, ControlGenError> {
        let terms = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(bias_type, terms)
    }

    pub fn load(bias_type: BiasType, path: &Path) -> Result<Self, ControlGenError> {
        Self::parse(bias_type, &read(path)?)
    }
}

/// ChaCha8 seeded with `SHA-256(seed as u64 LE || sample id)`, so each sample's
/// draw depends only on the run seed and its own id.
fn sample_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// `k` quads whose control template names `k` distinct groups drawn uniformly
/// from `groups` (never the original term, compared case-insensitively).
/// Ids are `<id>#ctl<j>` for `j` in `0..k`, in draw order.
pub fn random_substitution(
    s: &PairSample,
    groups: &GroupTermList,
    k: usize,
    seed: u64,
) -> Result<Vec<QuadSample>, ControlGenError> {
    if !contains_whole_word(&s.template, &s.group_term) {
        return Err(ControlGenError::GroupTermAbsent {
            term: s.group_term.clone(),
            template: s.template.clone(),
        });
    }
    let original = s.group_term.to_lowercase();
    let candidates: Vec<&String> = groups
        .terms
        .iter()
        .filter(|t| t.to_lowercase() != original)
        .collect();
    if candidates.len() < k {
        return Err(ControlGenError::TooFewCandidates {
            term: s.group_term.clone(),
            needed: k,
            available: candidates.len(),
        });
    }
    let mut rng = sample_rng(seed, &s.id);
    let drawn = rand::seq::index::sample(&mut rng, candidates.len(), k);
    Ok(drawn
        .iter()
        .enumerate()
        .map(|(j, i)| {
            let term = candidates[i];
            let mut q = QuadSample::from_halves(
                s,
                replace_whole_word(&s.template, &s.group_term, term),
                term.clone(),
            );
            q.id = format!("{}#ctl{j}", s.id);
            q
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

/// [`random_substitution`] over a whole dataset, in input order. Samples that
/// cannot be substituted are reported instead of failing the batch.
pub fn substitute_all(
    pairs: &[PairSample],
    groups: &GroupTermList,
    k: usize,
    seed: u64,
) -> (Vec<QuadSample>, Vec<Skipped>) {
    let results: Vec<_> = pairs
        .par_iter()
        .map(|p| random_substitution(p, groups, k, seed).map_err(|e| (p.id.clone(), e)))
        .collect();
    let mut quads = Vec::with_capacity(pairs.len() * k);
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(qs) => quads.extend(qs),
            Err((id, e)) => skipped.push(Skipped {
                id,
                reason: e.to_string(),
            }),
        }
    }
    (quads, skipped)
}
