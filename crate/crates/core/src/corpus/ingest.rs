use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::filter::{encode_png, filter_image, FilterDecision};
use super::{
    CorpusError, DropReason, FigureRecord, IngestReport, Manifest, ObjectStore, PaperRecord, Result,
};
use crate::labels::FigureLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataFigure {
    /// File name relative to the image directory.
    pub file: String,
    #[serde(default)]
    pub caption: Option<String>,
}

/// One line of the metadata file: a paper plus the figure files it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    #[serde(flatten)]
    pub paper: PaperRecord,
    #[serde(default)]
    pub figures: Vec<MetadataFigure>,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub image_dir: PathBuf,
    pub metadata: PathBuf,
    pub out_dir: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stores `img` as PNG under `<sha256>.png` and returns the key.
pub fn store_png(store: &dyn ObjectStore, img: &image::DynamicImage) -> Result<String> {
    let png = encode_png(img);
    let key = format!("{}.png", sha256_hex(&png));
    store.put(&key, &png)?;
    Ok(key)
}

fn figure_id_from_hash(hash: &str) -> String {
    hash[..16].to_string()
}

/// The figure id ingest assigns to an image file, or `None` when the file
/// would be dropped.
pub fn figure_id_of(bytes: &[u8], name: &str) -> Result<Option<String>> {
    match filter_image(bytes, name)? {
        FilterDecision::Keep(k) => Ok(Some(figure_id_from_hash(&sha256_hex(&encode_png(&k.image))))),
        FilterDecision::Drop(_) => Ok(None),
    }
}

fn list_files(dir: &Path, exclude: Option<&Path>) -> Result<Vec<String>> {
    let exclude = exclude.and_then(|p| p.canonicalize().ok());
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        if exclude.is_some() && entry.path().canonicalize().ok() == exclude {
            continue;
        }
        names.push(name);
    }
    names.sort();
    Ok(names)
}

fn read_metadata(path: &Path, report: &mut IngestReport) -> Result<Vec<MetadataRecord>> {
    let file = fs::File::open(path)?;
    let mut seen_ids = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("{}:{}", path.display(), i + 1);
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json { path: at.clone(), source })?;
        let rec = match serde_json::from_value::<MetadataRecord>(value) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{at}: skipping record: {e}");
                report.skipped_records += 1;
                continue;
            }
        };
        if let Err(e) = rec.paper.validate() {
            log::warn!("{at}: skipping record: {e}");
            report.skipped_records += 1;
            continue;
        }
        if !seen_ids.insert(rec.paper.paper_id.clone()) {
            log::warn!("{at}: duplicate paper_id {}, skipping", rec.paper.paper_id);
            report.skipped_records += 1;
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

enum Processed {
    Failed(CorpusError),
    Decided { raw_hash: String, decision: FilterDecision },
}

/// Reads `image_dir` and the JSON-lines metadata, filters every image and
/// writes the manifest to `out_dir`.
///
/// Files are decoded and filtered in parallel; bookkeeping and writes happen
/// in sorted file-name order so the result does not depend on scheduling.
/// Figures already present in `out_dir` keep their labels and derived
/// children, which makes re-ingesting identical input a no-op.
pub fn ingest(opts: &IngestOptions) -> Result<(IngestReport, Manifest)> {
    let mut report = IngestReport::default();
    let records = read_metadata(&opts.metadata, &mut report)?;
    let names = list_files(&opts.image_dir, Some(&opts.metadata))?;
    report.seen = names.len();

    // file name -> (paper index, caption); first paper in id order wins
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].paper.paper_id.cmp(&records[b].paper.paper_id));
    let present: HashSet<&str> = names.iter().map(String::as_str).collect();
    let mut owner: HashMap<&str, (usize, Option<String>)> = HashMap::new();
    for &ri in &order {
        for fig in &records[ri].figures {
            if !present.contains(fig.file.as_str()) {
                log::warn!("paper {}: referenced file `{}` is missing", records[ri].paper.paper_id, fig.file);
                report.missing_files += 1;
                continue;
            }
            if owner.contains_key(fig.file.as_str()) {
                log::warn!("file `{}` referenced by several papers; keeping the first", fig.file);
                continue;
            }
            owner.insert(fig.file.as_str(), (ri, fig.caption.clone()));
        }
    }

    let processed: Vec<Processed> = crate::par::map(&names, |name| {
        let path = opts.image_dir.join(name);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => return Processed::Failed(e.into()),
        };
        match filter_image(&bytes, name) {
            Ok(decision) => Processed::Decided { raw_hash: sha256_hex(&bytes), decision },
            Err(e) => Processed::Failed(e),
        }
    });

    let existing = if Manifest::exists(&opts.out_dir) { Some(Manifest::load(&opts.out_dir)?) } else { None };
    let store = Manifest::image_store(&opts.out_dir)?;
    let mut drops: BTreeMap<DropReason, usize> = BTreeMap::new();
    let mut raw_seen = HashSet::new();
    let mut keys_seen = HashSet::new();
    let mut figures = Vec::new();
    let mut drop = |reason: DropReason, name: &str| {
        log::info!("dropping `{name}`: {reason:?}");
        *drops.entry(reason).or_default() += 1;
    };

    for (name, item) in names.iter().zip(processed) {
        let (raw_hash, decision) = match item {
            Processed::Failed(e) => {
                log::warn!("`{name}`: {e}");
                drop(DropReason::Unreadable, name);
                continue;
            }
            Processed::Decided { raw_hash, decision } => (raw_hash, decision),
        };
        if let FilterDecision::Drop(DropReason::Gif) = decision {
            drop(DropReason::Gif, name);
            continue;
        }
        if !raw_seen.insert(raw_hash) {
            drop(DropReason::Duplicate, name);
            continue;
        }
        let kept = match decision {
            FilterDecision::Drop(reason) => {
                drop(reason, name);
                continue;
            }
            FilterDecision::Keep(k) => k,
        };
        let Some((ri, caption)) = owner.get(name.as_str()) else {
            drop(DropReason::Unreferenced, name);
            continue;
        };
        let png = encode_png(&kept.image);
        let hash = sha256_hex(&png);
        if !keys_seen.insert(hash.clone()) {
            drop(DropReason::Duplicate, name);
            continue;
        }
        let key = format!("{hash}.png");
        store.put(&key, &png)?;
        if kept.resized {
            report.resized += 1;
        }
        let (width, height) = (kept.image.width(), kept.image.height());
        figures.push(FigureRecord {
            figure_id: figure_id_from_hash(&hash),
            paper_id: records[*ri].paper.paper_id.clone(),
            image_key: key,
            caption: caption.clone(),
            width,
            height,
            label: FigureLabel::Unclassified,
            class_probs: Vec::new(),
            gate_prob: None,
            parent_figure_id: None,
            bbox_in_parent: None,
        });
    }
    report.retained = figures.len();
    report.dropped = drops;
    debug_assert!(report.is_balanced());

    let mut papers: Vec<PaperRecord> = records.into_iter().map(|r| r.paper).collect();
    if let Some(old) = &existing {
        for p in &mut papers {
            if p.alef_score.is_none() {
                p.alef_score = old.paper(&p.paper_id).and_then(|o| o.alef_score);
            }
        }
        let fresh: HashSet<String> = figures.iter().map(|f| f.figure_id.clone()).collect();
        for f in &mut figures {
            if let Some(o) = old.figure(&f.figure_id) {
                if o.paper_id == f.paper_id {
                    f.label = o.label;
                    f.class_probs = o.class_probs.clone();
                    f.gate_prob = o.gate_prob;
                }
            }
        }
        let derived = old.figures.iter().filter(|f| {
            f.parent_figure_id.as_ref().is_some_and(|pid| fresh.contains(pid) && !fresh.contains(&f.figure_id))
        });
        figures.extend(derived.cloned());
    }
    let manifest = Manifest { papers, figures, report: report.clone() };
    let mut manifest = manifest;
    manifest.sort();
    manifest.save(&opts.out_dir)?;
    Ok((report, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{DynamicImage, ImageFormat, Rgb, RgbImage};

    fn write_img(dir: &Path, name: &str, seed: u8, format: ImageFormat) {
        let img = RgbImage::from_fn(64, 48, |x, y| Rgb([seed, (x * 3) as u8, (y * 5) as u8]));
        DynamicImage::ImageRgb8(img).save_with_format(dir.join(name), format).unwrap();
    }

    fn meta_line(id: &str, files: &[&str]) -> String {
        let figs: Vec<_> = files.iter().map(|f| serde_json::json!({"file": f, "caption": format!("about {f}")})).collect();
        serde_json::json!({"paper_id": id, "title": "T", "abstract": "A", "journal": "J", "year": 2001, "page_count": 8, "figures": figs})
            .to_string()
    }

    fn setup(lines: &[String]) -> (tempfile::TempDir, IngestOptions) {
        let tmp = tempfile::tempdir().unwrap();
        let images = tmp.path().join("img");
        fs::create_dir(&images).unwrap();
        let metadata = tmp.path().join("meta.jsonl");
        fs::write(&metadata, lines.join("\n")).unwrap();
        let opts = IngestOptions { image_dir: images, metadata, out_dir: tmp.path().join("out") };
        (tmp, opts)
    }

    #[test]
    fn empty_directory() {
        let (_t, opts) = setup(&[]);
        let (r, m) = ingest(&opts).unwrap();
        assert_eq!((r.seen, r.retained), (0, 0));
        assert!(m.figures.is_empty());
    }

    #[test]
    fn gif_dropped_and_jpegs_kept() {
        let (_t, opts) = setup(&[meta_line("p1", &["a.jpg", "b.jpg", "c.jpg", "d.gif"])]);
        for (i, n) in ["a.jpg", "b.jpg", "c.jpg"].iter().enumerate() {
            write_img(&opts.image_dir, n, i as u8 * 40, ImageFormat::Jpeg);
        }
        write_img(&opts.image_dir, "d.gif", 9, ImageFormat::Gif);
        let (r, m) = ingest(&opts).unwrap();
        assert_eq!(r.seen, 4);
        assert_eq!(r.dropped(DropReason::Gif), 1);
        assert_eq!(r.retained, 3);
        assert!(r.is_balanced());
        assert!(m.figures.iter().all(|f| f.label == FigureLabel::Unclassified));
        let store = Manifest::image_store(&opts.out_dir).unwrap();
        for f in &m.figures {
            let bytes = store.get(&f.image_key).unwrap();
            assert_eq!(format!("{}.png", sha256_hex(&bytes)), f.image_key);
            assert!(f.caption.as_deref().unwrap().starts_with("about "));
        }
        m.validate().unwrap();
    }

    #[test]
    fn byte_identical_duplicate() {
        let (_t, opts) = setup(&[meta_line("p1", &["x.png", "y.png"])]);
        write_img(&opts.image_dir, "x.png", 1, ImageFormat::Png);
        fs::copy(opts.image_dir.join("x.png"), opts.image_dir.join("y.png")).unwrap();
        let (r, _) = ingest(&opts).unwrap();
        // content hash oracle over the pair
        let a = sha256_hex(&fs::read(opts.image_dir.join("x.png")).unwrap());
        let b = sha256_hex(&fs::read(opts.image_dir.join("y.png")).unwrap());
        assert_eq!(a, b);
        assert_eq!(r.dropped(DropReason::Duplicate), 1);
        assert_eq!(r.retained, 1);
    }

    #[test]
    fn bad_records_and_files_are_counted() {
        let lines = vec![
            meta_line("p1", &["ok.png", "gone.png"]),
            r#"{"paper_id":"p2","year":2000}"#.to_string(),
            r#"{"paper_id":"p3","journal":"J","year":1800,"page_count":2}"#.to_string(),
        ];
        let (_t, opts) = setup(&lines);
        write_img(&opts.image_dir, "ok.png", 3, ImageFormat::Png);
        write_img(&opts.image_dir, "orphan.png", 4, ImageFormat::Png);
        fs::write(opts.image_dir.join("broken.jpg"), b"not a jpeg").unwrap();
        let (r, m) = ingest(&opts).unwrap();
        assert_eq!(r.skipped_records, 2);
        assert_eq!(r.missing_files, 1);
        assert_eq!(r.seen, 3);
        assert_eq!(r.dropped(DropReason::Unreferenced), 1);
        assert_eq!(r.dropped(DropReason::Unreadable), 1);
        assert_eq!(r.retained, 1);
        assert_eq!(m.papers.len(), 1);
    }

    #[test]
    fn malformed_json_is_an_error() {
        let (_t, opts) = setup(&["{not json".to_string()]);
        assert!(matches!(ingest(&opts), Err(CorpusError::Json { .. })));
    }

    #[test]
    fn reingest_is_idempotent_and_keeps_labels() {
        let (_t, opts) = setup(&[meta_line("p1", &["a.png", "b.tif"])]);
        write_img(&opts.image_dir, "a.png", 10, ImageFormat::Png);
        write_img(&opts.image_dir, "b.tif", 20, ImageFormat::Tiff);
        let (r1, _) = ingest(&opts).unwrap();
        let snapshot = |dir: &Path| -> Vec<(String, Vec<u8>)> {
            let mut v: Vec<_> = walk(dir).into_iter().map(|p| (p.display().to_string(), fs::read(&p).unwrap())).collect();
            v.sort();
            v
        };
        let before = snapshot(&opts.out_dir);
        let (r2, _) = ingest(&opts).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(before, snapshot(&opts.out_dir));

        let mut m = Manifest::load(&opts.out_dir).unwrap();
        let id = m.figures[0].figure_id.clone();
        let f = m.figure_mut(&id).unwrap();
        f.label = FigureLabel::Plot;
        f.class_probs = vec![0.0, 0.0, 0.0, 1.0, 0.0];
        m.save(&opts.out_dir).unwrap();
        let (_, again) = ingest(&opts).unwrap();
        assert_eq!(again.figure(&id).unwrap().label, FigureLabel::Plot);
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out
    }
}
