//! Figure search: keyword index ranked by ALEF, figure details and the
//! label-verification log.

mod index;
mod verify;

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, FigureRecord, Manifest, ObjectStore, PaperRecord};
use crate::labels::FigureLabel;

pub use index::{
    snippet, tokenize, Field, IndexedFigure, MatchMode, PaperSummary, Posting, Query, SearchIndex, SearchPage, SearchResult,
    SNIPPET_RADIUS,
};
pub use verify::{parse_proposed_label, Submission, VerificationEvent, VerificationLog, DEDUP_WINDOW_HOURS};

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("empty query")]
    EmptyQuery,
    #[error("figure `{0}` not found")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SearchError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSummary {
    pub figure_id: String,
    pub label: FigureLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_figure_id: Option<String>,
}

impl From<&FigureRecord> for FigureSummary {
    fn from(f: &FigureRecord) -> Self {
        FigureSummary { figure_id: f.figure_id.clone(), label: f.label, caption: f.caption.clone(), parent_figure_id: f.parent_figure_id.clone() }
    }
}

/// Everything the detail view shows for one figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureDetail {
    #[serde(flatten)]
    pub figure: FigureRecord,
    pub paper: PaperRecord,
    /// Other figures of the same paper.
    pub siblings: Vec<FigureSummary>,
    /// Sub-figures extracted from this figure.
    pub children: Vec<FigureSummary>,
}

/// Read-only search state over one manifest.
pub struct SearchEngine {
    manifest: Manifest,
    index: SearchIndex,
    store: Option<Arc<dyn ObjectStore>>,
}

impl SearchEngine {
    /// `scores` overrides the manifest's stored paper scores, both in the
    /// index and in details.
    pub fn new(mut manifest: Manifest, scores: &HashMap<String, f64>, store: Option<Arc<dyn ObjectStore>>) -> Self {
        manifest.sort();
        for p in &mut manifest.papers {
            if let Some(&s) = scores.get(&p.paper_id) {
                p.alef_score = Some(s);
            }
        }
        let index = SearchIndex::build(&manifest, &HashMap::new());
        SearchEngine { manifest, index, store }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn index(&self) -> &SearchIndex {
        &self.index
    }

    pub fn search(&self, q: &Query) -> Result<SearchPage> {
        self.index.search(q)
    }

    pub fn figure_detail(&self, figure_id: &str) -> Result<FigureDetail> {
        let figure = self.manifest.figure(figure_id).ok_or_else(|| SearchError::NotFound(figure_id.to_string()))?;
        let paper = self.manifest.paper(&figure.paper_id).ok_or_else(|| SearchError::NotFound(figure.paper_id.clone()))?;
        let siblings = self
            .manifest
            .figures
            .iter()
            .filter(|f| f.paper_id == figure.paper_id && f.figure_id != figure.figure_id)
            .map(FigureSummary::from)
            .collect();
        let children = self.manifest.children_of(figure_id).map(FigureSummary::from).collect();
        Ok(FigureDetail { figure: figure.clone(), paper: paper.clone(), siblings, children })
    }

    /// Stored PNG bytes of a figure.
    pub fn image_png(&self, figure_id: &str) -> Result<Vec<u8>> {
        let figure = self.manifest.figure(figure_id).ok_or_else(|| SearchError::NotFound(figure_id.to_string()))?;
        let store = self.store.as_ref().ok_or_else(|| SearchError::NotFound(format!("{figure_id}: no image store")))?;
        if !store.contains(&figure.image_key) {
            return Err(SearchError::NotFound(format!("{figure_id}: image missing")));
        }
        Ok(store.get(&figure.image_key)?)
    }

    /// Validates and records a proposed label. The machine label is never touched.
    pub fn submit_verification(
        &self,
        log: &VerificationLog,
        figure_id: &str,
        label: &str,
        client_token: &str,
        now: DateTime<Utc>,
    ) -> Result<Submission> {
        let proposed_label = parse_proposed_label(label)?;
        if client_token.trim().is_empty() {
            return Err(SearchError::BadRequest("missing client token".into()));
        }
        if self.manifest.figure(figure_id).is_none() {
            return Err(SearchError::NotFound(figure_id.to_string()));
        }
        log.append(&VerificationEvent { figure_id: figure_id.to_string(), proposed_label, timestamp: now, client_token: client_token.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MemoryStore;
    use crate::geometry::Rect;

    fn fig(id: &str, paper: &str, parent: Option<&str>) -> FigureRecord {
        FigureRecord {
            figure_id: id.into(),
            paper_id: paper.into(),
            image_key: format!("{id}.png"),
            caption: Some(format!("caption of {id}")),
            width: 100,
            height: 80,
            label: if parent.is_some() { FigureLabel::Plot } else { FigureLabel::Diagram },
            class_probs: vec![],
            gate_prob: None,
            parent_figure_id: parent.map(String::from),
            bbox_in_parent: parent.map(|_| Rect::new(5, 5, 40, 30)),
        }
    }

    fn engine() -> SearchEngine {
        let mut m = Manifest::default();
        m.papers.push(PaperRecord::new("p", "J", 2015, 4));
        m.papers.push(PaperRecord::new("q", "J", 2015, 4));
        for id in ["f1", "f2", "f3", "f4"] {
            m.figures.push(fig(id, "p", None));
        }
        m.figures.push(fig("g1", "q", None));
        m.figures.push(fig("g1c", "q", Some("g1")));
        let store = MemoryStore::default();
        store.put("f1.png", b"png").unwrap();
        SearchEngine::new(m, &HashMap::from([("p".to_string(), 2.0)]), Some(Arc::new(store)))
    }

    #[test]
    fn detail_lists_siblings_and_provenance() {
        let e = engine();
        let d = e.figure_detail("f2").unwrap();
        assert_eq!(d.siblings.len(), 3);
        assert_eq!(d.paper.alef_score, Some(2.0));
        let c = e.figure_detail("g1c").unwrap();
        assert_eq!(c.figure.parent_figure_id.as_deref(), Some("g1"));
        assert_eq!(c.figure.bbox_in_parent, Some(Rect::new(5, 5, 40, 30)));
        assert_eq!(e.figure_detail("g1").unwrap().children[0].figure_id, "g1c");
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["parent_figure_id"], "g1");
        assert!(matches!(e.figure_detail("nope"), Err(SearchError::NotFound(_))));
    }

    #[test]
    fn images() {
        let e = engine();
        assert_eq!(e.image_png("f1").unwrap(), b"png");
        assert!(matches!(e.image_png("f2"), Err(SearchError::NotFound(_))));
        assert!(matches!(e.image_png("zz"), Err(SearchError::NotFound(_))));
    }

    #[test]
    fn verification_leaves_labels_alone() {
        let e = engine();
        let log = VerificationLog::in_memory();
        let now = Utc::now();
        assert!(e.submit_verification(&log, "f1", "photo", "tok", now).unwrap().appended);
        assert!(!e.submit_verification(&log, "f1", "photo", "tok", now).unwrap().appended);
        assert!(matches!(e.submit_verification(&log, "f1", "banana", "tok", now), Err(SearchError::BadRequest(_))));
        assert!(matches!(e.submit_verification(&log, "zz", "photo", "tok", now), Err(SearchError::NotFound(_))));
        assert_eq!(log.len(), 1);
        assert_eq!(e.figure_detail("f1").unwrap().figure.label, FigureLabel::Diagram);
    }
}
