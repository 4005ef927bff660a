//! Converters from the published benchmark layouts into the JSONL shapes.
//!
//! * StereoSet intrasentence JSON (`{"data":{"intrasentence":[...]}}`, the
//!   context carries a `BLANK` placeholder) becomes [`PairSample`]s.
//! * CrowS-Pairs CSV (`sent_more`, `sent_less`, `bias_type` columns) becomes
//!   [`CrowsSample`]s without control pairs.
//!
//! Entries that cannot be converted are returned alongside the converted
//! samples instead of aborting the whole import.

use serde::Deserialize;

use super::{BiasType, CrowsSample, PairSample, Sample, SLOT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("malformed StereoSet JSON: {0}")]
    StereoSet(#[from] serde_json::Error),
    #[error("malformed CrowS-Pairs CSV: {0}")]
    Crows(#[from] csv::Error),
}

#[derive(Deserialize)]
struct StereoSetFile {
    data: StereoSetData,
}

#[derive(Deserialize)]
struct StereoSetData {
    intrasentence: Vec<StereoSetEntry>,
}

#[derive(Deserialize)]
struct StereoSetEntry {
    id: String,
    target: String,
    bias_type: String,
    context: String,
    sentences: Vec<StereoSetSentence>,
}

#[derive(Deserialize)]
struct StereoSetSentence {
    sentence: String,
    gold_label: String,
}

const BLANK: &str = "BLANK";

fn stereoset_bias_type(name: &str) -> BiasType {
    match name {
        "gender" => BiasType::Gender,
        "race" => BiasType::Race,
        "profession" => BiasType::Profession,
        _ => BiasType::Other,
    }
}

/// The word a filled sentence puts where `context` has `BLANK`.
fn extract_keyword(context: &str, sentence: &str) -> Option<String> {
    let at = context.find(BLANK)?;
    let (prefix, suffix) = (&context[..at], &context[at + BLANK.len()..]);
    // Annotators sometimes changed trailing punctuation; compare without it.
    let suffix_core = suffix.trim_end_matches(|c: char| c.is_ascii_punctuation());
    let sentence_core = sentence.trim_end_matches(|c: char| c.is_ascii_punctuation());
    let word = sentence_core
        .strip_prefix(prefix)?
        .strip_suffix(suffix_core)?;
    let word = word.trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    (!word.is_empty()).then(|| word.to_string())
}

pub fn stereoset_intrasentence(
    json: &str,
) -> Result<(Vec<PairSample>, Vec<Rejected>), ImportError> {
    let file: StereoSetFile = serde_json::from_str(json)?;
    let mut out = Vec::new();
    let mut rejected = Vec::new();
    for entry in file.data.intrasentence {
        let keyword = |label: &str| {
            entry
                .sentences
                .iter()
                .find(|s| s.gold_label == label)
                .and_then(|s| extract_keyword(&entry.context, &s.sentence))
        };
        let (Some(stereo_word), Some(anti_word)) =
            (keyword("stereotype"), keyword("anti-stereotype"))
        else {
            rejected.push(Rejected {
                id: entry.id,
                reason: "could not recover both keywords from the filled sentences".into(),
            });
            continue;
        };
        let sample = PairSample {
            id: entry.id,
            bias_type: stereoset_bias_type(&entry.bias_type),
            template: entry.context.replacen(BLANK, SLOT, 1),
            group_term: entry.target,
            stereo_word,
            anti_word,
        };
        match sample.violations().first() {
            None => out.push(sample),
            Some(v) => rejected.push(Rejected {
                id: sample.id,
                reason: v.to_string(),
            }),
        }
    }
    Ok((out, rejected))
}

#[derive(Deserialize)]
struct CrowsRow {
    #[serde(default)]
    id: Option<String>,
    sent_more: String,
    sent_less: String,
    bias_type: String,
}

fn crows_bias_type(name: &str) -> BiasType {
    match name {
        "gender" => BiasType::Gender,
        "race-color" | "race" => BiasType::Race,
        _ => BiasType::Other,
    }
}

/// Rows without an `id` column get `crows-<row number>` (1-based).
pub fn crows_pairs_csv(csv_text: &str) -> Result<(Vec<CrowsSample>, Vec<Rejected>), ImportError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let mut out = Vec::new();
    let mut rejected = Vec::new();
    for (k, row) in reader.deserialize::<CrowsRow>().enumerate() {
        let row = row?;
        let sample = CrowsSample {
            id: row.id.unwrap_or_else(|| format!("crows-{}", k + 1)),
            bias_type: crows_bias_type(&row.bias_type),
            sent_more: row.sent_more,
            sent_less: row.sent_less,
            control_sent_more: None,
            control_sent_less: None,
            control_kind: None,
        };
        match sample.violations().first() {
            None => out.push(sample),
            Some(v) => rejected.push(Rejected {
                id: sample.id,
                reason: v.to_string(),
            }),
        }
    }
    Ok((out, rejected))
}
