//! Similarity and sweep reports, serialized as JSON (full metadata) or CSV
//! (one row per item or frequency).
//!
//! CSV column order is fixed:
//!
//! - similarity: `index,stylized,content,clip_score,projected_score,directional_loss,patch_rejected,status`
//! - sweep: `frequency,period,mean,std,scored,skipped` (baseline row last, `frequency = baseline`)

use serde::Serialize;

use crate::bands::period_of;
use crate::error::{Error, Result};
use crate::similarity::{MeanStd, SweepReport};
use crate::spectral::BandFilter;

pub const SIMILARITY_CSV_COLUMNS: [&str; 8] =
    ["index", "stylized", "content", "clip_score", "projected_score", "directional_loss", "patch_rejected", "status"];
pub const SWEEP_CSV_COLUMNS: [&str; 6] = ["frequency", "period", "mean", "std", "scored", "skipped"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterInfo {
    pub spec: String,
    pub n: usize,
    pub masked: Vec<usize>,
}

impl FilterInfo {
    pub fn new(spec: impl Into<String>, filter: &BandFilter) -> Self {
        Self { spec: spec.into(), n: filter.n(), masked: filter.masked().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionInfo {
    pub path: String,
    pub sha256: String,
    pub out_dim: usize,
    pub in_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub precision: &'static str,
    /// Which vector represents each image: always the filtered class token.
    pub representation: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub projection: Option<ProjectionInfo>,
}

impl ReportMetadata {
    pub fn new(command: &'static str, precision: &'static str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            precision,
            representation: "filtered_class_token",
            filter: None,
            tau: None,
            projection: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityItem {
    pub index: usize,
    pub stylized: String,
    pub content: String,
    /// Cosine between the filtered stylized class token and the style text embedding.
    pub clip_score: Option<f64>,
    pub projected_score: Option<f64>,
    pub directional_loss: Option<f64>,
    pub patch_rejected: bool,
    pub status: ItemStatus,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Ok,
    Degenerate,
}

impl ItemStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemStatus::Ok => "ok",
            ItemStatus::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilaritySummary {
    pub clip_score: Option<MeanStd>,
    pub projected_score: Option<MeanStd>,
    pub directional_loss: Option<MeanStd>,
    /// Thresholded patch loss over all items.
    pub patch_loss: f64,
    pub degenerate_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityReport {
    pub metadata: ReportMetadata,
    pub items: Vec<SimilarityItem>,
    pub summary: SimilaritySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationScore {
    pub name: String,
    pub masked: Vec<usize>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub scored: usize,
    pub skipped: usize,
    /// 1 = highest mean score. Informational only.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDocument {
    pub metadata: ReportMetadata,
    pub sweep: SweepReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub combinations: Vec<CombinationScore>,
}

/// Assigns ranks by descending mean; unscored combinations stay unranked.
pub fn rank_combinations(combos: &mut [CombinationScore]) {
    let mut order: Vec<usize> = (0..combos.len()).filter(|&k| combos[k].mean.is_some()).collect();
    order.sort_by(|&a, &b| {
        combos[b].mean.partial_cmp(&combos[a].mean).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for (rank, k) in order.into_iter().enumerate() {
        combos[k].rank = Some(rank + 1);
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Schema { path: "csv".into(), message: e.to_string() }
}

pub fn to_json<R: Serialize>(report: &R) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn similarity_csv(report: &SimilarityReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SIMILARITY_CSV_COLUMNS).map_err(csv_error)?;
    for item in &report.items {
        w.write_record([
            item.index.to_string(),
            item.stylized.clone(),
            item.content.clone(),
            opt(item.clip_score),
            opt(item.projected_score),
            opt(item.directional_loss),
            item.patch_rejected.to_string(),
            item.status.as_str().to_string(),
        ])
        .map_err(csv_error)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_error)?).map_err(csv_error)
}

pub fn sweep_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_COLUMNS).map_err(csv_error)?;
    for row in &report.rows {
        let (label, period) = match row.frequency {
            Some(m) => (m.to_string(), period_of(m, report.n)?.to_f64().to_string()),
            None => ("baseline".to_string(), String::new()),
        };
        w.write_record([label, period, opt(row.mean), opt(row.std), row.scored.to_string(), row.skipped.to_string()])
            .map_err(csv_error)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_error)?).map_err(csv_error)
}
