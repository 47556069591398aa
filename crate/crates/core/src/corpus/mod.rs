//! Corpus ingestion: image filtering, paper/figure records and the on-disk manifest.

mod filter;
mod ingest;
mod manifest;
mod store;

pub use filter::{filter_image, is_full_page_print, FilterDecision, KeptImage, MAX_EDGE};
pub use ingest::{figure_id_of, ingest, store_png, IngestOptions, MetadataFigure, MetadataRecord};
pub use manifest::Manifest;
pub use store::{FsStore, MemoryStore, ObjectStore};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Rect;
use crate::labels::FigureLabel;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot decode image `{name}`: {message}")]
    Decode { name: String, message: String },
    #[error("unsupported image format for `{0}`")]
    UnsupportedFormat(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("object `{0}` not found")]
    MissingObject(String),
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authors: Vec<String>,
    pub journal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    pub year: i32,
    pub page_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alef_score: Option<f64>,
    #[serde(default)]
    pub source_uri: String,
}

impl PaperRecord {
    pub fn new(paper_id: &str, journal: &str, year: i32, page_count: u32) -> Self {
        PaperRecord {
            paper_id: paper_id.to_string(),
            title: String::new(),
            abstract_text: String::new(),
            authors: Vec::new(),
            journal: journal.to_string(),
            topic: None,
            year,
            page_count,
            alef_score: None,
            source_uri: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        use chrono::Datelike;
        if self.paper_id.trim().is_empty() {
            return Err(CorpusError::InvalidRecord("empty paper_id".into()));
        }
        if self.page_count < 1 {
            return Err(CorpusError::InvalidRecord(format!("{}: page_count must be ≥ 1", self.paper_id)));
        }
        let now = chrono::Utc::now().year();
        if !(1900..=now).contains(&self.year) {
            return Err(CorpusError::InvalidRecord(format!("{}: year {} outside [1900, {now}]", self.paper_id, self.year)));
        }
        if let Some(s) = self.alef_score {
            if !(s >= 0.0) {
                return Err(CorpusError::InvalidRecord(format!("{}: negative score", self.paper_id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRecord {
    pub figure_id: String,
    pub paper_id: String,
    pub image_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub width: u32,
    pub height: u32,
    pub label: FigureLabel,
    /// Probabilities over [`FigureLabel::SINGLETON`]; empty until classified.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_probs: Vec<f64>,
    /// Multi-chart probability assigned by the gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_figure_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox_in_parent: Option<Rect>,
}

impl FigureRecord {
    pub fn validate(&self, parent: Option<&FigureRecord>) -> Result<()> {
        let id = &self.figure_id;
        if self.label.is_singleton() && !self.class_probs.is_empty() {
            if self.class_probs.len() != 5 || self.class_probs.iter().any(|&p| !(p >= 0.0)) {
                return Err(CorpusError::InvalidRecord(format!("{id}: class_probs must be 5 nonnegative reals")));
            }
            let total: f64 = self.class_probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(CorpusError::InvalidRecord(format!("{id}: class_probs sum to {total}")));
            }
        }
        if self.parent_figure_id.is_some() != self.bbox_in_parent.is_some() {
            return Err(CorpusError::InvalidRecord(format!("{id}: parent id and bbox must be set together")));
        }
        if let (Some(bbox), Some(p)) = (self.bbox_in_parent, parent) {
            if !Rect::new(0, 0, p.width, p.height).contains_rect(&bbox) {
                return Err(CorpusError::InvalidRecord(format!("{id}: bbox outside parent image")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Gif,
    FullPagePrint,
    Duplicate,
    /// Not decodable or not an accepted image format.
    Unreadable,
    /// No metadata record references the file.
    Unreferenced,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub seen: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub resized: usize,
    pub retained: usize,
    pub skipped_records: usize,
    pub missing_files: usize,
}

impl IngestReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn dropped(&self, reason: DropReason) -> usize {
        self.dropped.get(&reason).copied().unwrap_or(0)
    }

    pub fn is_balanced(&self) -> bool {
        self.seen == self.dropped_total() + self.retained
    }
}
