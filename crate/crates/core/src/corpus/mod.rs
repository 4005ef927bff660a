//! Sample shapes, JSONL dataset files and their validation.
//!
//! Three shapes share one file convention (one JSON object per line, unknown
//! keys rejected):
//!
//! * [`PairSample`]: a template with a `[KW]` slot and two keywords.
//! * [`QuadSample`]: a pair plus a control-group template, giving the four
//!   sentences `{original, control} x {stereo, anti}`.
//! * [`CrowsSample`]: two full sentences that differ in the group mentioned,
//!   optionally with a control pair.

mod align;
pub mod import;

pub(crate) use align::align_tokens;
pub use align::{align_shared_words, word_tokens, WordAlignment};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slot marker that stands for the keyword position in a template.
pub const SLOT: &str = "[KW]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasType {
    Gender,
    Race,
    Profession,
    Other,
}

impl fmt::Display for BiasType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiasType::Gender => "gender",
            BiasType::Race => "race",
            BiasType::Profession => "profession",
            BiasType::Other => "other",
        })
    }
}

impl std::str::FromStr for BiasType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gender" => Ok(BiasType::Gender),
            "race" => Ok(BiasType::Race),
            "profession" => Ok(BiasType::Profession),
            "other" => Ok(BiasType::Other),
            _ => Err(format!("unknown bias type `{s}`")),
        }
    }
}

/// How a crows control pair was derived from the original pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Negation,
    Antistereotype,
}

/// A template with one keyword slot and a stereotypical / anti-stereotypical
/// keyword pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSample {
    pub id: String,
    pub bias_type: BiasType,
    pub template: String,
    pub group_term: String,
    pub stereo_word: String,
    pub anti_word: String,
}

/// A pair sample extended with a control-group template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSample {
    pub id: String,
    pub bias_type: BiasType,
    pub template: String,
    pub group_term: String,
    pub stereo_word: String,
    pub anti_word: String,
    pub template_control: String,
    pub group_term_control: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrowsSample {
    pub id: String,
    pub bias_type: BiasType,
    /// Sentence stereotyping the marginalized group.
    pub sent_more: String,
    /// The same sentence rewritten about the control group.
    pub sent_less: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_sent_more: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_sent_less: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_kind: Option<ControlKind>,
}

impl CrowsSample {
    /// The control pair as `(more, less)`, when present.
    pub fn control_pair(&self) -> Option<(&str, &str)> {
        match (&self.control_sent_more, &self.control_sent_less) {
            (Some(more), Some(less)) => Some((more, less)),
            _ => None,
        }
    }
}

impl QuadSample {
    /// The original half: template `t_o` with both keywords.
    pub fn original(&self) -> PairSample {
        PairSample {
            id: self.id.clone(),
            bias_type: self.bias_type,
            template: self.template.clone(),
            group_term: self.group_term.clone(),
            stereo_word: self.stereo_word.clone(),
            anti_word: self.anti_word.clone(),
        }
    }

    /// The control half: template `t_c` with the same keywords.
    pub fn control(&self) -> PairSample {
        PairSample {
            id: self.id.clone(),
            bias_type: self.bias_type,
            template: self.template_control.clone(),
            group_term: self.group_term_control.clone(),
            stereo_word: self.stereo_word.clone(),
            anti_word: self.anti_word.clone(),
        }
    }

    pub fn from_halves(
        original: &PairSample,
        template_control: String,
        group_term_control: String,
    ) -> Self {
        QuadSample {
            id: original.id.clone(),
            bias_type: original.bias_type,
            template: original.template.clone(),
            group_term: original.group_term.clone(),
            stereo_word: original.stereo_word.clone(),
            anti_word: original.anti_word.clone(),
            template_control,
            group_term_control,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadView {
    SsPair,
    CsPair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Pair(PairSample),
    Crows(CrowsSample),
}

/// Project a quadruplet onto the pair shape (original half) or onto the crows
/// shape (stereo keyword in both groups, anti keyword as the control pair).
pub fn project_quad(q: &QuadSample, view: QuadView) -> Projection {
    match view {
        QuadView::SsPair => Projection::Pair(q.original()),
        QuadView::CsPair => Projection::Crows(quad_to_crows(q)),
    }
}

pub fn quad_to_crows(q: &QuadSample) -> CrowsSample {
    CrowsSample {
        id: q.id.clone(),
        bias_type: q.bias_type,
        sent_more: fill_slot(&q.template, &q.stereo_word),
        sent_less: fill_slot(&q.template_control, &q.stereo_word),
        control_sent_more: Some(fill_slot(&q.template, &q.anti_word)),
        control_sent_less: Some(fill_slot(&q.template_control, &q.anti_word)),
        control_kind: Some(ControlKind::Antistereotype),
    }
}

/// Replace the slot marker with `word`.
pub fn fill_slot(template: &str, word: &str) -> String {
    template.replacen(SLOT, word, 1)
}

pub fn slot_count(template: &str) -> usize {
    template.matches(SLOT).count()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Byte offsets of every occurrence of `term` in `text` bounded by non-word
/// characters (or the string ends) on both sides.
pub fn whole_word_matches(text: &str, term: &str) -> Vec<usize> {
    if term.is_empty() {
        return Vec::new();
    }
    text.match_indices(term)
        .filter(|(start, _)| {
            let before = text[..*start].chars().next_back();
            let after = text[start + term.len()..].chars().next();
            !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
        })
        .map(|(start, _)| start)
        .collect()
}

pub fn contains_whole_word(text: &str, term: &str) -> bool {
    !whole_word_matches(text, term).is_empty()
}

/// Replace every whole-word occurrence of `term` with `replacement`.
pub fn replace_whole_word(text: &str, term: &str, replacement: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for start in whole_word_matches(text, term) {
        out.push_str(&text[last..start]);
        out.push_str(replacement);
        last = start + term.len();
    }
    out.push_str(&text[last..]);
    out
}

/// A single invariant violation found in one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Parse(String),
    SlotMarker { field: &'static str, count: usize },
    Keyword(String),
    GroupTerm { field: &'static str, term: String },
    NoSharedWords { pair: &'static str },
    ControlFields,
    DuplicateId { first_line: usize },
}

impl Violation {
    /// Stable short name used when counting violations per invariant.
    pub fn category(&self) -> &'static str {
        match self {
            Violation::Parse(_) => "parse",
            Violation::SlotMarker { .. } => "slot_marker",
            Violation::Keyword(_) => "keywords",
            Violation::GroupTerm { .. } => "group_term",
            Violation::NoSharedWords { .. } => "shared_words",
            Violation::ControlFields => "control_fields",
            Violation::DuplicateId { .. } => "duplicate_id",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Parse(msg) => write!(f, "parse error: {msg}"),
            Violation::SlotMarker { field, count } => {
                write!(
                    f,
                    "{field} must contain \"{SLOT}\" exactly once, found {count}"
                )
            }
            Violation::Keyword(msg) => f.write_str(msg),
            Violation::GroupTerm { field, term } => {
                write!(
                    f,
                    "group term `{term}` does not occur as a whole word in {field}"
                )
            }
            Violation::NoSharedWords { pair } => write!(f, "{pair} share no words"),
            Violation::ControlFields => f.write_str(
                "control_sent_more, control_sent_less and control_kind must be given together",
            ),
            Violation::DuplicateId { first_line } => {
                write!(f, "duplicate id, first seen on line {first_line}")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sample `{id}` (line {line}): {violation}")]
    Invalid {
        id: String,
        line: usize,
        violation: Violation,
    },
    #[error("duplicate id `{id}` on lines {first_line} and {line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        line: usize,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Common behaviour of the three sample shapes.
pub trait Sample: Serialize + DeserializeOwned + Clone + Send + Sync {
    const SHAPE: Shape;

    fn id(&self) -> &str;

    /// All invariant violations of this record (empty when valid).
    fn violations(&self) -> Vec<Violation>;
}

fn keyword_violations(stereo: &str, anti: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    if stereo.trim().is_empty() || anti.trim().is_empty() {
        out.push(Violation::Keyword("keywords must be non-empty".into()));
    } else if stereo == anti {
        out.push(Violation::Keyword(format!(
            "stereo_word and anti_word are both `{stereo}`"
        )));
    }
    out
}

fn template_violations(
    field: &'static str,
    template: &str,
    group_field: &'static str,
    group_term: &str,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let count = slot_count(template);
    if count != 1 {
        out.push(Violation::SlotMarker { field, count });
    }
    if group_term.trim().is_empty() || !contains_whole_word(template, group_term) {
        out.push(Violation::GroupTerm {
            field: group_field,
            term: group_term.to_string(),
        });
    }
    out
}

impl Sample for PairSample {
    const SHAPE: Shape = Shape::Pair;

    fn id(&self) -> &str {
        &self.id
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = template_violations("template", &self.template, "template", &self.group_term);
        out.extend(keyword_violations(&self.stereo_word, &self.anti_word));
        out
    }
}

impl Sample for QuadSample {
    const SHAPE: Shape = Shape::Quad;

    fn id(&self) -> &str {
        &self.id
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = template_violations("template", &self.template, "template", &self.group_term);
        out.extend(template_violations(
            "template_control",
            &self.template_control,
            "template_control",
            &self.group_term_control,
        ));
        out.extend(keyword_violations(&self.stereo_word, &self.anti_word));
        out
    }
}

impl Sample for CrowsSample {
    const SHAPE: Shape = Shape::Crows;

    fn id(&self) -> &str {
        &self.id
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if align_shared_words(&self.sent_more, &self.sent_less).is_empty() {
            out.push(Violation::NoSharedWords {
                pair: "sent_more and sent_less",
            });
        }
        let present = [
            self.control_sent_more.is_some(),
            self.control_sent_less.is_some(),
            self.control_kind.is_some(),
        ];
        if present.iter().any(|p| *p) && !present.iter().all(|p| *p) {
            out.push(Violation::ControlFields);
        }
        if let Some((more, less)) = self.control_pair() {
            if align_shared_words(more, less).is_empty() {
                out.push(Violation::NoSharedWords {
                    pair: "control_sent_more and control_sent_less",
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Pair,
    Quad,
    Crows,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Pair => "pair",
            Shape::Quad => "quad",
            Shape::Crows => "crows",
        })
    }
}

impl std::str::FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pair" => Ok(Shape::Pair),
            "quad" => Ok(Shape::Quad),
            "crows" => Ok(Shape::Crows),
            _ => Err(format!(
                "unknown shape `{s}` (expected pair, quad or crows)"
            )),
        }
    }
}

/// A loaded dataset of one shape, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dataset {
    Pair(Vec<PairSample>),
    Quad(Vec<QuadSample>),
    Crows(Vec<CrowsSample>),
}

impl Dataset {
    pub fn shape(&self) -> Shape {
        match self {
            Dataset::Pair(_) => Shape::Pair,
            Dataset::Quad(_) => Shape::Quad,
            Dataset::Crows(_) => Shape::Crows,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Pair(v) => v.len(),
            Dataset::Quad(v) => v.len(),
            Dataset::Crows(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Dataset::Pair(v) => v.iter().map(|s| s.id.as_str()).collect(),
            Dataset::Quad(v) => v.iter().map(|s| s.id.as_str()).collect(),
            Dataset::Crows(v) => v.iter().map(|s| s.id.as_str()).collect(),
        }
    }
}

/// One violation tied to its source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineViolation {
    pub line: usize,
    pub id: Option<String>,
    pub violation: Violation,
}

impl fmt::Display for LineViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {}: `{}`: {}", self.line, id, self.violation),
            None => write!(f, "line {}: {}", self.line, self.violation),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub records: usize,
    pub violations: Vec<LineViolation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts = BTreeMap::new();
        for v in &self.violations {
            *counts.entry(v.violation.category()).or_insert(0) += 1;
        }
        counts
    }
}

struct Scan<T> {
    samples: Vec<(usize, T)>,
    report: ValidationReport,
}

fn scan<T: Sample>(text: &str) -> Scan<T> {
    let mut samples = Vec::new();
    let mut report = ValidationReport::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        report.records += 1;
        let sample: T = match serde_json::from_str(raw) {
            Ok(s) => s,
            Err(e) => {
                report.violations.push(LineViolation {
                    line,
                    id: None,
                    violation: Violation::Parse(e.to_string()),
                });
                continue;
            }
        };
        for violation in sample.violations() {
            report.violations.push(LineViolation {
                line,
                id: Some(sample.id().to_string()),
                violation,
            });
        }
        if let Some(&first_line) = seen.get(sample.id()) {
            report.violations.push(LineViolation {
                line,
                id: Some(sample.id().to_string()),
                violation: Violation::DuplicateId { first_line },
            });
        } else {
            seen.insert(sample.id().to_string(), line);
        }
        samples.push((line, sample));
    }
    Scan { samples, report }
}

/// Parse and validate JSONL text, failing on the first problem.
pub fn parse_samples<T: Sample>(text: &str) -> Result<Vec<T>, CorpusError> {
    let scan = scan::<T>(text);
    if let Some(first) = scan.report.violations.into_iter().next() {
        return Err(match first.violation {
            Violation::Parse(message) => CorpusError::Parse {
                line: first.line,
                message,
            },
            Violation::DuplicateId { first_line } => CorpusError::DuplicateId {
                id: first.id.unwrap_or_default(),
                first_line,
                line: first.line,
            },
            violation => CorpusError::Invalid {
                id: first.id.unwrap_or_default(),
                line: first.line,
                violation,
            },
        });
    }
    Ok(scan.samples.into_iter().map(|(_, s)| s).collect())
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_samples<T: Sample>(path: &Path) -> Result<Vec<T>, CorpusError> {
    parse_samples(&read_text(path)?)
}

pub fn load_dataset(path: &Path, shape: Shape) -> Result<Dataset, CorpusError> {
    Ok(match shape {
        Shape::Pair => Dataset::Pair(load_samples(path)?),
        Shape::Quad => Dataset::Quad(load_samples(path)?),
        Shape::Crows => Dataset::Crows(load_samples(path)?),
    })
}

/// Collect every violation in a file instead of stopping at the first one.
pub fn validate_text(text: &str, shape: Shape) -> ValidationReport {
    match shape {
        Shape::Pair => scan::<PairSample>(text).report,
        Shape::Quad => scan::<QuadSample>(text).report,
        Shape::Crows => scan::<CrowsSample>(text).report,
    }
}

pub fn validate_file(path: &Path, shape: Shape) -> Result<ValidationReport, CorpusError> {
    Ok(validate_text(&read_text(path)?, shape))
}

/// Serialize samples as JSONL, one object per line.
pub fn to_jsonl<T: Serialize>(samples: &[T]) -> String {
    let mut out = String::new();
    for s in samples {
        // Plain structs of strings and enums always serialize.
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn write_samples<T: Serialize>(path: &Path, samples: &[T]) -> Result<(), CorpusError> {
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(to_jsonl(samples).as_bytes())?;
        f.flush()
    };
    write().map_err(|source| CorpusError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), CorpusError> {
    match dataset {
        Dataset::Pair(v) => write_samples(path, v),
        Dataset::Quad(v) => write_samples(path, v),
        Dataset::Crows(v) => write_samples(path, v),
    }
}
