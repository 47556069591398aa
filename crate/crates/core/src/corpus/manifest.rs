use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{CorpusError, FigureRecord, FsStore, IngestReport, ObjectStore, PaperRecord, Result};
use crate::raster::LumaImage;

pub const PAPERS_FILE: &str = "papers.jsonl";
pub const FIGURES_FILE: &str = "figures.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const IMAGES_DIR: &str = "images";

/// Papers and figures of one corpus, kept sorted by id.
///
/// On disk a manifest directory holds `papers.jsonl`, `figures.jsonl`,
/// `report.json` and the content-addressed `images/` store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub papers: Vec<PaperRecord>,
    pub figures: Vec<FigureRecord>,
    pub report: IngestReport,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Json { path: format!("{}:{}", path.display(), i + 1), source })?;
        out.push(rec);
    }
    Ok(out)
}

fn jsonl_bytes<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    buf
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)?;
    Ok(())
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let papers = read_jsonl(&dir.join(PAPERS_FILE))?;
        let figures = read_jsonl(&dir.join(FIGURES_FILE))?;
        let report_path = dir.join(REPORT_FILE);
        let report = if report_path.exists() {
            let text = fs::read_to_string(&report_path)?;
            serde_json::from_str(&text)
                .map_err(|source| CorpusError::Json { path: report_path.display().to_string(), source })?
        } else {
            IngestReport::default()
        };
        let mut m = Manifest { papers, figures, report };
        m.sort();
        Ok(m)
    }

    /// Whether `dir` already holds a manifest.
    pub fn exists(dir: impl AsRef<Path>) -> bool {
        let dir = dir.as_ref();
        dir.join(PAPERS_FILE).is_file() && dir.join(FIGURES_FILE).is_file()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut sorted = self.clone();
        sorted.sort();
        write_atomic(&dir.join(PAPERS_FILE), &jsonl_bytes(&sorted.papers))?;
        write_atomic(&dir.join(FIGURES_FILE), &jsonl_bytes(&sorted.figures))?;
        let mut report = serde_json::to_vec_pretty(&sorted.report).expect("report serializes");
        report.push(b'\n');
        write_atomic(&dir.join(REPORT_FILE), &report)?;
        Ok(())
    }

    pub fn image_store(dir: impl AsRef<Path>) -> Result<FsStore> {
        FsStore::open(dir.as_ref().join(IMAGES_DIR))
    }

    pub fn image_path(dir: impl AsRef<Path>, fig: &FigureRecord) -> PathBuf {
        dir.as_ref().join(IMAGES_DIR).join(&fig.image_key)
    }

    pub fn sort(&mut self) {
        self.papers.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
        self.figures.sort_by(|a, b| a.figure_id.cmp(&b.figure_id));
    }

    pub fn paper(&self, paper_id: &str) -> Option<&PaperRecord> {
        self.papers
            .binary_search_by(|p| p.paper_id.as_str().cmp(paper_id))
            .ok()
            .map(|i| &self.papers[i])
    }

    pub fn figure(&self, figure_id: &str) -> Option<&FigureRecord> {
        self.figures
            .binary_search_by(|f| f.figure_id.as_str().cmp(figure_id))
            .ok()
            .map(|i| &self.figures[i])
    }

    pub fn figure_mut(&mut self, figure_id: &str) -> Option<&mut FigureRecord> {
        match self.figures.binary_search_by(|f| f.figure_id.as_str().cmp(figure_id)) {
            Ok(i) => Some(&mut self.figures[i]),
            Err(_) => None,
        }
    }

    /// Figures of each paper, in figure id order.
    pub fn figures_by_paper(&self) -> HashMap<&str, Vec<&FigureRecord>> {
        let mut out: HashMap<&str, Vec<&FigureRecord>> = HashMap::new();
        for f in &self.figures {
            out.entry(f.paper_id.as_str()).or_default().push(f);
        }
        out
    }

    pub fn children_of<'a>(&'a self, figure_id: &'a str) -> impl Iterator<Item = &'a FigureRecord> + 'a {
        self.figures.iter().filter(move |f| f.parent_figure_id.as_deref() == Some(figure_id))
    }

    /// Top-level figures, i.e. those not produced by dismantling.
    pub fn originals(&self) -> impl Iterator<Item = &FigureRecord> {
        self.figures.iter().filter(|f| f.parent_figure_id.is_none())
    }

    /// Checks record invariants and cross references.
    pub fn validate(&self) -> Result<()> {
        for p in &self.papers {
            p.validate()?;
        }
        for f in &self.figures {
            if self.paper(&f.paper_id).is_none() {
                return Err(CorpusError::InvalidRecord(format!("{}: unknown paper {}", f.figure_id, f.paper_id)));
            }
            let parent = match &f.parent_figure_id {
                Some(pid) => Some(
                    self.figure(pid)
                        .ok_or_else(|| CorpusError::InvalidRecord(format!("{}: unknown parent {pid}", f.figure_id)))?,
                ),
                None => None,
            };
            f.validate(parent)?;
        }
        Ok(())
    }

    pub fn load_image(store: &dyn ObjectStore, fig: &FigureRecord) -> Result<image::DynamicImage> {
        let bytes = store.get(&fig.image_key)?;
        image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| CorpusError::Decode { name: fig.image_key.clone(), message: e.to_string() })
    }

    pub fn load_luma(store: &dyn ObjectStore, fig: &FigureRecord) -> Result<LumaImage> {
        Ok(LumaImage::from_dynamic(&Self::load_image(store, fig)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::labels::FigureLabel;

    pub(crate) fn figure(id: &str, paper: &str) -> FigureRecord {
        FigureRecord {
            figure_id: id.into(),
            paper_id: paper.into(),
            image_key: format!("{id}.png"),
            caption: Some(format!("caption of {id}")),
            width: 100,
            height: 80,
            label: FigureLabel::Unclassified,
            class_probs: Vec::new(),
            gate_prob: None,
            parent_figure_id: None,
            bbox_in_parent: None,
        }
    }

    #[test]
    fn round_trip_is_structurally_equal() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = PaperRecord::new("p1", "Cell", 2010, 12);
        p.topic = Some("Biology".into());
        p.alef_score = Some(0.25);
        let mut child = figure("f2", "p1");
        child.parent_figure_id = Some("f1".into());
        child.bbox_in_parent = Some(Rect::new(0, 0, 50, 40));
        child.label = FigureLabel::Plot;
        child.class_probs = vec![0.1, 0.1, 0.1, 0.6, 0.1];
        let mut m = Manifest {
            papers: vec![p, PaperRecord::new("p0", "Nature", 1999, 3)],
            figures: vec![child, figure("f1", "p1")],
            report: IngestReport { seen: 2, retained: 2, ..Default::default() },
        };
        m.save(dir.path()).unwrap();
        let back = Manifest::load(dir.path()).unwrap();
        m.sort();
        assert_eq!(back, m);
        back.validate().unwrap();
        assert_eq!(back.children_of("f1").count(), 1);
        assert_eq!(back.originals().count(), 1);
        assert_eq!(back.paper("p0").unwrap().year, 1999);
    }

    #[test]
    fn dangling_references_fail_validation() {
        let m = Manifest {
            papers: vec![PaperRecord::new("p1", "J", 2000, 1)],
            figures: vec![figure("f1", "p9")],
            report: IngestReport::default(),
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(PAPERS_FILE), "{\"paper_id\":\"a\",\"journal\":\"j\",\"year\":2000,\"page_count\":1}\n{oops\n").unwrap();
        fs::write(dir.path().join(FIGURES_FILE), "").unwrap();
        match Manifest::load(dir.path()) {
            Err(CorpusError::Json { path, .. }) => assert!(path.ends_with(":2"), "{path}"),
            other => panic!("{other:?}"),
        }
    }
}
