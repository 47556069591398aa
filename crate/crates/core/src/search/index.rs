use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::{Result, SearchError};
use crate::corpus::{FigureRecord, Manifest, PaperRecord};
use crate::labels::FigureLabel;

/// Words on either side of the first caption match.
pub const SNIPPET_RADIUS: usize = 6;

/// Lowercased, accent-stripped alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded: String = text.nfkd().filter(|c| !is_combining_mark(*c)).flat_map(char::to_lowercase).collect();
    folded.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(String::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Abstract,
    Caption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position in the index's figure list.
    pub doc: u32,
    pub field: Field,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperSummary {
    pub paper_id: String,
    pub title: String,
    pub journal: String,
    pub year: i32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authors: Vec<String>,
}

impl From<&PaperRecord> for PaperSummary {
    fn from(p: &PaperRecord) -> Self {
        PaperSummary { paper_id: p.paper_id.clone(), title: p.title.clone(), journal: p.journal.clone(), year: p.year, authors: p.authors.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedFigure {
    pub figure_id: String,
    pub paper_id: String,
    pub label: FigureLabel,
    pub alef_score: Option<f64>,
    pub caption: Option<String>,
}

/// Inverted index over paper titles, abstracts and figure captions, keyed
/// by figure. Built deterministically: identical manifests serialize to
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchIndex {
    figures: Vec<IndexedFigure>,
    papers: BTreeMap<String, PaperSummary>,
    postings: BTreeMap<String, Vec<Posting>>,
    /// Rank of each figure under ALEF-descending, id-ascending order.
    rank: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Every query token must occur.
    #[default]
    All,
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    /// Empty means every label.
    #[serde(default)]
    pub types: Vec<FigureLabel>,
    #[serde(default)]
    pub page: usize,
    #[serde(default = "default_page_size")]
    pub size: usize,
    #[serde(default)]
    pub mode: MatchMode,
    /// Orders by text relevance weighted by ALEF instead of ALEF alone.
    #[serde(default)]
    pub blended: bool,
}

fn default_page_size() -> usize {
    20
}

impl Query {
    pub fn new(text: &str) -> Self {
        Query { text: text.to_string(), types: Vec::new(), page: 0, size: default_page_size(), mode: MatchMode::All, blended: false }
    }

    pub fn types(mut self, types: &[FigureLabel]) -> Self {
        self.types = types.to_vec();
        self
    }

    pub fn page(mut self, page: usize, size: usize) -> Self {
        self.page = page;
        self.size = size;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub figure_id: String,
    pub snippet: String,
    pub label: FigureLabel,
    pub alef_score: Option<f64>,
    pub paper: PaperSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPage {
    /// Hits across all pages.
    pub total: usize,
    pub page: usize,
    pub size: usize,
    pub results: Vec<SearchResult>,
}

fn score_order(a: &IndexedFigure, b: &IndexedFigure) -> std::cmp::Ordering {
    let sa = a.alef_score.unwrap_or(f64::NEG_INFINITY);
    let sb = b.alef_score.unwrap_or(f64::NEG_INFINITY);
    sb.total_cmp(&sa).then_with(|| a.figure_id.cmp(&b.figure_id))
}

impl SearchIndex {
    /// Indexes every figure in `manifest`. `scores` overrides stored paper scores.
    pub fn build(manifest: &Manifest, scores: &HashMap<String, f64>) -> Self {
        let papers: HashMap<&str, &PaperRecord> = manifest.papers.iter().map(|p| (p.paper_id.as_str(), p)).collect();
        let mut figs: Vec<&FigureRecord> = manifest.figures.iter().filter(|f| papers.contains_key(f.paper_id.as_str())).collect();
        figs.sort_by(|a, b| a.figure_id.cmp(&b.figure_id));

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut figures = Vec::with_capacity(figs.len());
        for (doc, f) in figs.iter().enumerate() {
            let paper = papers[f.paper_id.as_str()];
            let fields = [
                (Field::Title, paper.title.as_str()),
                (Field::Abstract, paper.abstract_text.as_str()),
                (Field::Caption, f.caption.as_deref().unwrap_or("")),
            ];
            for (field, text) in fields {
                let mut tf: BTreeMap<String, u32> = BTreeMap::new();
                for t in tokenize(text) {
                    *tf.entry(t).or_default() += 1;
                }
                for (t, n) in tf {
                    postings.entry(t).or_default().push(Posting { doc: doc as u32, field, tf: n });
                }
            }
            figures.push(IndexedFigure {
                figure_id: f.figure_id.clone(),
                paper_id: f.paper_id.clone(),
                label: f.label,
                alef_score: scores.get(&f.paper_id).copied().or(paper.alef_score),
                caption: f.caption.clone(),
            });
        }
        let mut order: Vec<usize> = (0..figures.len()).collect();
        order.sort_by(|&a, &b| score_order(&figures[a], &figures[b]));
        let mut rank = vec![0u32; figures.len()];
        for (r, &d) in order.iter().enumerate() {
            rank[d] = r as u32;
        }
        let used: BTreeSet<&str> = figures.iter().map(|f| f.paper_id.as_str()).collect();
        let papers = used.into_iter().map(|id| (id.to_string(), PaperSummary::from(papers[id]))).collect();
        SearchIndex { figures, papers, postings, rank }
    }

    pub fn len(&self) -> usize {
        self.figures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.figures.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.postings.len()
    }

    pub fn posting_count(&self) -> usize {
        self.postings.values().map(Vec::len).sum()
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn figure(&self, doc: u32) -> &IndexedFigure {
        &self.figures[doc as usize]
    }

    pub fn paper(&self, paper_id: &str) -> Option<&PaperSummary> {
        self.papers.get(paper_id)
    }

    /// Canonical serialized form.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("index serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    fn matching_docs(&self, tokens: &[String], mode: MatchMode) -> BTreeSet<u32> {
        let sets = tokens.iter().map(|t| self.postings(t).iter().map(|p| p.doc).collect::<BTreeSet<u32>>());
        match mode {
            MatchMode::Any => sets.flatten().collect(),
            MatchMode::All => sets.reduce(|a, b| a.intersection(&b).copied().collect()).unwrap_or_default(),
        }
    }

    fn relevance(&self, tokens: &[String]) -> HashMap<u32, f64> {
        let n = self.figures.len().max(1) as f64;
        let mut rel: HashMap<u32, f64> = HashMap::new();
        for t in tokens {
            let ps = self.postings(t);
            let docs: BTreeSet<u32> = ps.iter().map(|p| p.doc).collect();
            let idf = (1.0 + n / docs.len().max(1) as f64).ln();
            for p in ps {
                *rel.entry(p.doc).or_default() += (1.0 + (p.tf as f64).ln()) * idf;
            }
        }
        rel
    }

    /// All hits in result order, before pagination.
    pub fn search_all(&self, q: &Query) -> Result<Vec<u32>> {
        let mut tokens = tokenize(&q.text);
        tokens.sort();
        tokens.dedup();
        if tokens.is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let mut hits: Vec<u32> = self
            .matching_docs(&tokens, q.mode)
            .into_iter()
            .filter(|&d| q.types.is_empty() || q.types.contains(&self.figure(d).label))
            .collect();
        if q.blended {
            let rel = self.relevance(&tokens);
            let top = self.figures.iter().filter_map(|f| f.alef_score).fold(0.0, f64::max);
            let key = |d: u32| {
                let alef = self.figure(d).alef_score.unwrap_or(0.0);
                rel[&d] * (1.0 + if top > 0.0 { alef / top } else { 0.0 })
            };
            hits.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(self.rank[a as usize].cmp(&self.rank[b as usize])));
        } else {
            hits.sort_by_key(|&d| self.rank[d as usize]);
        }
        Ok(hits)
    }

    pub fn search(&self, q: &Query) -> Result<SearchPage> {
        if q.size == 0 {
            return Err(SearchError::BadRequest("page size must be ≥ 1".into()));
        }
        let hits = self.search_all(q)?;
        let tokens: BTreeSet<String> = tokenize(&q.text).into_iter().collect();
        let results = hits
            .iter()
            .skip(q.page.saturating_mul(q.size))
            .take(q.size)
            .map(|&d| {
                let f = self.figure(d);
                let paper = self.papers[&f.paper_id].clone();
                SearchResult {
                    figure_id: f.figure_id.clone(),
                    snippet: snippet(f.caption.as_deref().unwrap_or(&paper.title), &tokens),
                    label: f.label,
                    alef_score: f.alef_score,
                    paper,
                }
            })
            .collect();
        Ok(SearchPage { total: hits.len(), page: q.page, size: q.size, results })
    }
}

/// Up to `SNIPPET_RADIUS` words either side of the first word containing a
/// query token; the leading words when nothing matches.
pub fn snippet(text: &str, tokens: &BTreeSet<String>) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    let hit = words.iter().position(|w| tokenize(w).iter().any(|t| tokens.contains(t)));
    let center = hit.unwrap_or(0);
    let start = center.saturating_sub(SNIPPET_RADIUS);
    let end = (center + SNIPPET_RADIUS + 1).min(words.len());
    let mut s = words[start..end].join(" ");
    if start > 0 {
        s.insert_str(0, "... ");
    }
    if end < words.len() {
        s.push_str(" ...");
    }
    s
}
