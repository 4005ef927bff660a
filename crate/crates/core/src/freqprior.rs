//! Keyword frequency priors: `log g(w_s) - log g(w_a)` for a frequency
//! table `g`, and its correlation with ss scores.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PairSample;
use crate::measures::{ScoreKind, ScoreRecord};
use crate::stats::{self, StatsError};

#[derive(Debug, Error)]
pub enum FreqError {
    #[error("failed to read frequency table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("frequency table line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("word `{0}` is not in the frequency table")]
    MissingWord(String),
    #[error("only {0} samples have both keywords in the table; need at least 2")]
    TooFewUsable(usize),
    #[error("no ss records to correlate")]
    NoSsRecords,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Relative word frequencies, looked up by exact string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FreqTable {
    freqs: HashMap<String, f64>,
}

impl FreqTable {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, FreqError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut freqs = HashMap::new();
        for (k, (word, g)) in pairs.into_iter().enumerate() {
            let word = word.into();
            if !(g.is_finite() && g > 0.0) {
                return Err(FreqError::Format {
                    line: k + 1,
                    message: format!("frequency of `{word}` must be positive, got {g}"),
                });
            }
            if freqs.insert(word.clone(), g).is_some() {
                return Err(FreqError::Format {
                    line: k + 1,
                    message: format!("duplicate word `{word}`"),
                });
            }
        }
        Ok(FreqTable { freqs })
    }

    /// Parse `word<TAB>relative_frequency` lines. Blank lines are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, FreqError> {
        let mut freqs = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (word, value) = line.split_once('\t').ok_or_else(|| FreqError::Format {
                line: line_no,
                message: "expected `word<TAB>frequency`".into(),
            })?;
            let g: f64 = value.trim().parse().map_err(|_| FreqError::Format {
                line: line_no,
                message: format!("bad frequency `{value}`"),
            })?;
            if !(g.is_finite() && g > 0.0) {
                return Err(FreqError::Format {
                    line: line_no,
                    message: format!("frequency must be positive, got {g}"),
                });
            }
            if freqs.insert(word.to_string(), g).is_some() {
                return Err(FreqError::Format {
                    line: line_no,
                    message: format!("duplicate word `{word}`"),
                });
            }
        }
        Ok(FreqTable { freqs })
    }

    pub fn load(path: &Path) -> Result<Self, FreqError> {
        let text = fs::read_to_string(path).map_err(|source| FreqError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_tsv(&text)
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.freqs.get(word).copied()
    }

    /// Natural log of the word's frequency.
    pub fn log_freq(&self, word: &str) -> Result<f64, FreqError> {
        self.get(word)
            .map(f64::ln)
            .ok_or_else(|| FreqError::MissingWord(word.to_string()))
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// `log g(stereo) - log g(anti)`.
pub fn prior_score(stereo: &str, anti: &str, table: &FreqTable) -> Result<f64, FreqError> {
    Ok(table.log_freq(stereo)? - table.log_freq(anti)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorCorrelation {
    pub rho: f64,
    pub n_used: usize,
    pub n_skipped: usize,
}

/// Pearson correlation between ss values and keyword priors.
///
/// `samples` supplies the keywords for each record's `sample_id`; records
/// whose keywords are missing from the table (or whose sample is unknown)
/// are skipped and counted.
pub fn correlate_priors(
    records: &[ScoreRecord],
    samples: &[PairSample],
    table: &FreqTable,
) -> Result<PriorCorrelation, FreqError> {
    let by_id: HashMap<&str, &PairSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut ss = Vec::new();
    let mut priors = Vec::new();
    let mut n_skipped = 0;
    let mut ss_records: Vec<&ScoreRecord> =
        records.iter().filter(|r| r.kind == ScoreKind::Ss).collect();
    if ss_records.is_empty() {
        return Err(FreqError::NoSsRecords);
    }
    ss_records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    for rec in ss_records {
        let prior = by_id
            .get(rec.sample_id.as_str())
            .and_then(|s| prior_score(&s.stereo_word, &s.anti_word, table).ok());
        match prior {
            Some(p) => {
                ss.push(rec.value_original);
                priors.push(p);
            }
            None => n_skipped += 1,
        }
    }
    if ss.len() < 2 {
        return Err(FreqError::TooFewUsable(ss.len()));
    }
    Ok(PriorCorrelation {
        rho: stats::pearson(&ss, &priors)?,
        n_used: ss.len(),
        n_skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BiasType;

    fn pair(id: &str, s: &str, a: &str) -> PairSample {
        PairSample {
            id: id.into(),
            bias_type: BiasType::Gender,
            template: "The male is [KW].".into(),
            group_term: "male".into(),
            stereo_word: s.into(),
            anti_word: a.into(),
        }
    }

    fn record(id: &str, v: f64) -> ScoreRecord {
        ScoreRecord {
            sample_id: id.into(),
            kind: ScoreKind::Ss,
            value_original: v,
            value_control: None,
        }
    }

    #[test]
    fn parses_tsv() {
        let t = FreqTable::parse_tsv("strong\t0.02\nweak\t0.01\n\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("strong"), Some(0.02));
        assert!(FreqTable::parse_tsv("a\t0").is_err());
        assert!(FreqTable::parse_tsv("a 0.1").is_err());
        assert!(FreqTable::parse_tsv("a\t0.1\na\t0.2").is_err());
    }

    #[test]
    fn prior_of_doubled_frequency_is_ln2() {
        let t = FreqTable::parse_tsv("strong\t0.02\nweak\t0.01").unwrap();
        assert!(
            (prior_score("strong", "weak", &t).unwrap() - std::f64::consts::LN_2).abs() < 1e-15
        );
        assert_eq!(prior_score("strong", "strong", &t).unwrap(), 0.0);
        assert_eq!(
            prior_score("weak", "strong", &t).unwrap(),
            -prior_score("strong", "weak", &t).unwrap()
        );
        assert!(
            matches!(prior_score("strong", "frail", &t), Err(FreqError::MissingWord(w)) if w == "frail")
        );
    }

    #[test]
    fn correlation_matches_brute_force() {
        let t = FreqTable::parse_tsv("a\t0.5\nb\t0.25\nc\t0.1\nd\t0.05\ne\t0.01\nf\t0.3").unwrap();
        let samples = vec![
            pair("1", "a", "b"),
            pair("2", "c", "d"),
            pair("3", "e", "f"),
            pair("4", "b", "e"),
            pair("5", "d", "a"),
        ];
        let ss = [0.3, -1.2, 2.0, 0.7, -0.4];
        let records: Vec<_> = samples
            .iter()
            .zip(ss)
            .map(|(s, v)| record(&s.id, v))
            .collect();
        let got = correlate_priors(&records, &samples, &t).unwrap();

        let priors: Vec<f64> = samples
            .iter()
            .map(|s| t.get(&s.stereo_word).unwrap().ln() - t.get(&s.anti_word).unwrap().ln())
            .collect();
        let n = 5.0;
        let (mx, my) = (ss.iter().sum::<f64>() / n, priors.iter().sum::<f64>() / n);
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for i in 0..5 {
            sxy += (ss[i] - mx) * (priors[i] - my);
            sxx += (ss[i] - mx).powi(2);
            syy += (priors[i] - my).powi(2);
        }
        assert!((got.rho - sxy / (sxx * syy).sqrt()).abs() < 1e-12);
        assert_eq!((got.n_used, got.n_skipped), (5, 0));
    }

    #[test]
    fn missing_words_are_skipped_and_counted() {
        let t = FreqTable::parse_tsv("a\t0.5\nb\t0.25\nc\t0.1").unwrap();
        let samples = vec![
            pair("1", "a", "b"),
            pair("2", "c", "a"),
            pair("3", "x", "a"),
        ];
        let records = vec![record("1", 1.0), record("2", -1.0), record("3", 0.0)];
        let got = correlate_priors(&records, &samples, &t).unwrap();
        assert_eq!((got.n_used, got.n_skipped), (2, 1));
    }

    #[test]
    fn table_missing_everything_fails() {
        let t = FreqTable::parse_tsv("zzz\t0.5").unwrap();
        let samples = vec![pair("1", "a", "b"), pair("2", "c", "d")];
        let records = vec![record("1", 1.0), record("2", -1.0)];
        assert!(matches!(
            correlate_priors(&records, &samples, &t),
            Err(FreqError::TooFewUsable(0))
        ));
    }
}
