//! Summary tables and scatter exports built from score records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::measures::{records_to_jsonl, ScoreKind, ScoreRecord};
use crate::stats::{self, CiStat};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no {0} records to summarize")]
    MissingKind(ScoreKind),
    #[error("{kind} records mix samples with and without control values")]
    MixedControl { kind: ScoreKind },
    #[error("duplicate {kind} record for sample `{id}`")]
    DuplicateRecord { id: String, kind: ScoreKind },
    #[error("{a} and {b} records cover different samples")]
    MismatchedSamples { a: ScoreKind, b: ScoreKind },
    #[error("{0} records carry no control values")]
    NoControl(ScoreKind),
    #[error("malformed summary JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Ci(CiStat),
    Value(f64),
    /// Empty denominator, too few samples or zero variance.
    Undefined,
}

impl<E> From<Result<CiStat, E>> for Cell {
    fn from(r: Result<CiStat, E>) -> Self {
        r.map_or(Cell::Undefined, Cell::Ci)
    }
}

impl<E> From<Result<f64, E>> for Cell {
    fn from(r: Result<f64, E>) -> Self {
        r.map_or(Cell::Undefined, Cell::Value)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Undefined, Cell::Value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub cell: Cell,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    /// SHA-256 of the records' canonical JSONL form.
    pub records_digest: String,
    #[serde(default)]
    pub scorer_digest: Option<String>,
    #[serde(default)]
    pub dataset_digest: Option<String>,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; left out unless asked for, so that
    /// reruns produce identical files.
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub label: String,
    pub rows: Vec<Row>,
    pub metadata: Metadata,
}

impl SummaryTable {
    pub fn get(&self, name: &str) -> Option<&Cell> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.cell)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One kind's records in sample-id order.
struct Column<'a> {
    ids: Vec<&'a str>,
    original: Vec<f64>,
    control: Option<Vec<f64>>,
}

impl<'a> Column<'a> {
    fn by_id(&self) -> BTreeMap<&'a str, f64> {
        self.ids
            .iter()
            .copied()
            .zip(self.original.iter().copied())
            .collect()
    }
}

fn column(records: &[ScoreRecord], kind: ScoreKind) -> Result<Column<'_>, ReportError> {
    let mut recs: Vec<&ScoreRecord> = records.iter().filter(|r| r.kind == kind).collect();
    if recs.is_empty() {
        return Err(ReportError::MissingKind(kind));
    }
    recs.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    if let Some(w) = recs.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
        return Err(ReportError::DuplicateRecord {
            id: w[0].sample_id.clone(),
            kind,
        });
    }
    let with_control = recs.iter().filter(|r| r.value_control.is_some()).count();
    let control = match with_control {
        0 => None,
        n if n == recs.len() => Some(recs.iter().filter_map(|r| r.value_control).collect()),
        _ => return Err(ReportError::MixedControl { kind }),
    };
    Ok(Column {
        ids: recs.iter().map(|r| r.sample_id.as_str()).collect(),
        original: recs.iter().map(|r| r.value_original).collect(),
        control,
    })
}

/// Original values of two kinds aligned on sample id.
fn joined(
    a: &Column,
    ak: ScoreKind,
    b: &Column,
    bk: ScoreKind,
) -> Result<(Vec<f64>, Vec<f64>), ReportError> {
    let (ma, mb) = (a.by_id(), b.by_id());
    if !ma.keys().eq(mb.keys()) {
        return Err(ReportError::MismatchedSamples { a: ak, b: bk });
    }
    Ok((ma.into_values().collect(), mb.into_values().collect()))
}

/// Build the statistics table for `kinds`.
///
/// Records are put in sample-id order first, so the result does not depend
/// on record order. Every cell is a plain function of the records through
/// [`crate::stats`].
pub fn summarize(
    label: &str,
    records: &[ScoreRecord],
    kinds: &BTreeSet<ScoreKind>,
) -> Result<SummaryTable, ReportError> {
    let mut rows = Vec::new();
    let mut push = |name: String, cell: Cell| rows.push(Row { name, cell });
    let mut cols = BTreeMap::new();
    for &kind in kinds {
        cols.insert(kind, column(records, kind)?);
    }

    for (&kind, col) in &cols {
        if kind == ScoreKind::F {
            push("fμ".into(), stats::mean_ci(&col.original).into());
            push("f+".into(), stats::percent_positive(&col.original).into());
            continue;
        }
        push(
            format!("{kind}μ Original"),
            stats::mean_ci(&col.original).into(),
        );
        if let Some(c) = &col.control {
            push(format!("{kind}μ Control"), stats::mean_ci(c).into());
        }
        push(
            format!("{kind}+ Original"),
            stats::percent_positive(&col.original).into(),
        );
        if let Some(c) = &col.control {
            push(
                format!("{kind}+ Control"),
                stats::percent_positive(c).into(),
            );
            push(format!("{kind} ρ"), stats::pearson(&col.original, c).into());
            if kind == ScoreKind::Ss {
                match stats::fp_fn_rates(&col.original, c) {
                    Ok(r) => {
                        push("False Positive Rate".into(), r.fpr.into());
                        push("False Negative Rate".into(), r.fnr.into());
                    }
                    Err(_) => {
                        push("False Positive Rate".into(), Cell::Undefined);
                        push("False Negative Rate".into(), Cell::Undefined);
                    }
                }
            }
        }
    }

    if let (Some(cs), Some(csk)) = (cols.get(&ScoreKind::Cs), cols.get(&ScoreKind::Csk)) {
        let (a, b) = joined(cs, ScoreKind::Cs, csk, ScoreKind::Csk)?;
        push("cs-csk ρ".into(), stats::pearson(&a, &b).into());
    }
    if let Some(f) = cols.get(&ScoreKind::F) {
        for other in [ScoreKind::Ss, ScoreKind::Cs] {
            if let Some(o) = cols.get(&other) {
                let (fv, ov) = joined(f, ScoreKind::F, o, other)?;
                push(format!("f-{other} ρ"), stats::pearson(&fv, &ov).into());
                push(
                    format!("f-{other} agreement"),
                    stats::sign_agreement(&fv, &ov).into(),
                );
            }
        }
    }

    let mut sorted: Vec<ScoreRecord> = records
        .iter()
        .filter(|r| kinds.contains(&r.kind))
        .cloned()
        .collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id).then(a.kind.cmp(&b.kind)));
    Ok(SummaryTable {
        label: label.to_string(),
        rows,
        metadata: Metadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            records_digest: sha256_hex(records_to_jsonl(&sorted).as_bytes()),
            ..Metadata::default()
        },
    })
}

/// Four significant digits, shortest form.
pub fn sig4(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.3e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn cell_text(cell: &Cell) -> String {
    match cell {
        Cell::Ci(c) => format!("{} ± {}", sig4(c.estimate), sig4(c.ci_halfwidth)),
        Cell::Value(v) => sig4(*v),
        Cell::Undefined => "undefined".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Csv,
    Json,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Markdown, Format::Csv, Format::Json];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn metadata_pairs(m: &Metadata) -> Vec<(&'static str, String)> {
    let mut out = vec![
        ("tool_version", m.tool_version.clone()),
        ("records_digest", m.records_digest.clone()),
    ];
    let optional = [
        ("scorer_digest", m.scorer_digest.clone()),
        ("dataset_digest", m.dataset_digest.clone()),
        ("backend", m.backend.clone()),
        ("seed", m.seed.map(|s| s.to_string())),
        ("timestamp", m.timestamp.map(|t| t.to_string())),
    ];
    out.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
    out
}

pub fn emit(table: &SummaryTable, format: Format) -> Result<Vec<u8>, ReportError> {
    Ok(match format {
        Format::Markdown => {
            let mut s = String::new();
            let _ = writeln!(s, "| | {} |\n|---|---:|", table.label);
            for row in &table.rows {
                let _ = writeln!(s, "| {} | {} |", row.name, cell_text(&row.cell));
            }
            s.push('\n');
            for (k, v) in metadata_pairs(&table.metadata) {
                let _ = writeln!(s, "- {k}: `{v}`");
            }
            s.into_bytes()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["statistic", "estimate", "ci_halfwidth", "n"])?;
            for row in &table.rows {
                let fields = match row.cell {
                    Cell::Ci(c) => [sig4(c.estimate), sig4(c.ci_halfwidth), c.n.to_string()],
                    Cell::Value(v) => [sig4(v), String::new(), String::new()],
                    Cell::Undefined => ["undefined".into(), String::new(), String::new()],
                };
                w.write_record([row.name.as_str(), &fields[0], &fields[1], &fields[2]])?;
            }
            w.into_inner()
                .map_err(|e| csv::Error::from(e.into_error()))?
        }
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(table)?;
            v.push(b'\n');
            v
        }
    })
}

pub fn parse_json(bytes: &[u8]) -> Result<SummaryTable, ReportError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// `sample_id<TAB>value_original<TAB>value_control` rows for one kind, in id
/// order, values printed in shortest round-trip form.
pub fn scatter_export(records: &[ScoreRecord], kind: ScoreKind) -> Result<String, ReportError> {
    let col = column(records, kind)?;
    let control = col.control.ok_or(ReportError::NoControl(kind))?;
    let mut s = String::from("sample_id\tvalue_original\tvalue_control\n");
    for ((id, o), c) in col.ids.iter().zip(&col.original).zip(&control) {
        let _ = writeln!(s, "{id}\t{o}\t{c}");
    }
    Ok(s)
}
