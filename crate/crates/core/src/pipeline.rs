//! Manifest-level stages: gate, dismantle and classify every figure of a
//! corpus, writing results back into the records.
//!
//! Images are decoded and scored in parallel; records are updated afterwards
//! in manifest order.

use serde::{Deserialize, Serialize};

use crate::corpus::{store_png, CorpusError, FigureRecord, Manifest, ObjectStore};
use crate::dismantle::{dismantle, DismantleConfig, DismantleError, FragmentClassifier};
use crate::features::{normalize_luma, Codebook};
use crate::figtype::{featurize, FigTypeError, FigureTypeClassifier};
use crate::gate::{GateError, GateModel};
use crate::labels::FigureLabel;
use crate::raster::LumaImage;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Dismantle(#[from] DismantleError),
    #[error(transparent)]
    FigType(#[from] FigTypeError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub processed: usize,
    /// Figures whose image could not be loaded; they keep their old values.
    pub failed: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateSummary {
    pub processed: usize,
    pub multichart: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DismantleSummary {
    /// Multi-chart figures without children at the start of the run.
    pub candidates: usize,
    pub dismantled: usize,
    pub children: usize,
    /// No standalone fragment was found; no children were written.
    pub degenerate: usize,
    pub failed: usize,
}

/// Figures the type classifier should label: everything except multi-chart
/// figures and parents that already have children.
pub fn singleton_candidates(m: &Manifest) -> Vec<usize> {
    let parents: std::collections::HashSet<&str> = m.figures.iter().filter_map(|f| f.parent_figure_id.as_deref()).collect();
    (0..m.figures.len())
        .filter(|&i| {
            let f = &m.figures[i];
            f.label != FigureLabel::Multichart && !parents.contains(f.figure_id.as_str())
        })
        .collect()
}

fn load_all(m: &Manifest, store: &dyn ObjectStore, idx: &[usize]) -> Vec<Option<LumaImage>> {
    crate::par::map(idx, |&i| {
        let f = &m.figures[i];
        Manifest::load_luma(store, f).map_err(|e| log::warn!("{}: {e}", f.figure_id)).ok()
    })
}

/// Runs the gate on every original figure, storing the multi-chart
/// probability and flipping labels between multichart and unclassified.
/// A figure that already has a type label keeps it when gated singleton.
pub fn gate_manifest(m: &mut Manifest, store: &dyn ObjectStore, gate: &GateModel) -> Result<GateSummary> {
    let idx: Vec<usize> = (0..m.figures.len()).filter(|&i| m.figures[i].parent_figure_id.is_none()).collect();
    let images = load_all(m, store, &idx);
    let decisions = crate::par::map(&images, |img| img.as_ref().map(|img| gate.classify(img)).transpose());
    let mut s = GateSummary::default();
    for (&i, d) in idx.iter().zip(decisions) {
        let Some(d) = d? else {
            s.failed += 1;
            continue;
        };
        let f = &mut m.figures[i];
        f.gate_prob = Some(d.prob);
        if d.multichart {
            f.label = FigureLabel::Multichart;
            f.class_probs.clear();
            s.multichart += 1;
        } else if f.label == FigureLabel::Multichart {
            f.label = FigureLabel::Unclassified;
        }
        s.processed += 1;
    }
    Ok(s)
}

/// Dismantles every multi-chart figure that has no children yet. Each
/// sub-figure is cropped from the stored image, written to the store and
/// appended as an unclassified child record.
pub fn dismantle_manifest(
    m: &mut Manifest,
    store: &dyn ObjectStore,
    frag: &FragmentClassifier,
    cfg: &DismantleConfig,
) -> Result<DismantleSummary> {
    let parents: std::collections::HashSet<String> = m.figures.iter().filter_map(|f| f.parent_figure_id.clone()).collect();
    let idx: Vec<usize> = (0..m.figures.len())
        .filter(|&i| {
            let f = &m.figures[i];
            f.label == FigureLabel::Multichart && f.parent_figure_id.is_none() && !parents.contains(&f.figure_id)
        })
        .collect();
    let mut s = DismantleSummary { candidates: idx.len(), ..Default::default() };
    let images: Vec<Option<image::DynamicImage>> = crate::par::map(&idx, |&i| {
        let f = &m.figures[i];
        Manifest::load_image(store, f).map_err(|e| log::warn!("{}: {e}", f.figure_id)).ok()
    });
    let lumas: Vec<Option<LumaImage>> = crate::par::map(&images, |img| img.as_ref().map(LumaImage::from_dynamic));
    let results = crate::par::map(&lumas, |img| img.as_ref().map(|img| dismantle(img, frag, cfg)).transpose());
    let mut children = Vec::new();
    for ((&i, img), res) in idx.iter().zip(&images).zip(results) {
        let (Some(img), Some(res)) = (img, res?) else {
            s.failed += 1;
            continue;
        };
        if res.degenerate {
            s.degenerate += 1;
            continue;
        }
        let parent = &m.figures[i];
        for (k, sub) in res.subfigures.iter().enumerate() {
            let b = sub.bbox;
            let key = store_png(store, &img.crop_imm(b.x, b.y, b.w, b.h))?;
            children.push(FigureRecord {
                figure_id: format!("{}-{k:02}", parent.figure_id),
                paper_id: parent.paper_id.clone(),
                image_key: key,
                caption: None,
                width: b.w,
                height: b.h,
                label: FigureLabel::Unclassified,
                class_probs: Vec::new(),
                gate_prob: None,
                parent_figure_id: Some(parent.figure_id.clone()),
                bbox_in_parent: Some(b),
            });
        }
        s.dismantled += 1;
    }
    s.children = children.len();
    m.figures.extend(children);
    m.sort();
    Ok(s)
}

/// Labels every singleton candidate with the figure-type classifier.
pub fn classify_manifest(m: &mut Manifest, store: &dyn ObjectStore, clf: &FigureTypeClassifier) -> Result<StageSummary> {
    let idx = singleton_candidates(m);
    let images = load_all(m, store, &idx);
    let preds = crate::par::map(&images, |img| img.as_ref().map(|img| clf.classify(img)).transpose());
    let mut s = StageSummary::default();
    for (&i, p) in idx.iter().zip(preds) {
        let Some(p) = p? else {
            s.failed += 1;
            continue;
        };
        let f = &mut m.figures[i];
        f.label = p.label;
        f.class_probs = p.probs;
        s.processed += 1;
    }
    Ok(s)
}

/// Normalized images of the given figures, skipping unreadable ones.
pub fn normalized_images(m: &Manifest, store: &dyn ObjectStore, idx: &[usize]) -> Result<Vec<LumaImage>> {
    let images: Vec<LumaImage> = load_all(m, store, idx).into_iter().flatten().collect();
    crate::par::map(&images, normalize_luma)
        .into_iter()
        .map(|r| r.map_err(|e| PipelineError::FigType(e.into())))
        .collect()
}

/// One row of a features file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub figure_id: String,
    pub features: Vec<f64>,
}

/// Classifier inputs for the given figures.
pub fn feature_rows(m: &Manifest, store: &dyn ObjectStore, codebook: &Codebook, idx: &[usize]) -> Result<Vec<FeatureRow>> {
    let images = load_all(m, store, idx);
    let feats = crate::par::map(&images, |img| img.as_ref().map(|img| featurize(img, codebook)).transpose());
    let mut out = Vec::new();
    for (&i, f) in idx.iter().zip(feats) {
        if let Some(features) = f? {
            out.push(FeatureRow { figure_id: m.figures[i].figure_id.clone(), features });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{MemoryStore, PaperRecord};
    use crate::svm::SvmParams;
    use crate::synth;
    use rand::SeedableRng;

    fn png_of(img: &LumaImage) -> image::DynamicImage {
        image::DynamicImage::ImageLuma8(img.to_gray())
    }

    fn corpus_with(images: &[LumaImage]) -> (Manifest, MemoryStore) {
        let store = MemoryStore::default();
        let mut m = Manifest::default();
        m.papers.push(PaperRecord::new("p", "J", 2014, 6));
        for (i, img) in images.iter().enumerate() {
            let key = store_png(&store, &png_of(img)).unwrap();
            m.figures.push(FigureRecord {
                figure_id: format!("f{i}"),
                paper_id: "p".into(),
                image_key: key,
                caption: None,
                width: img.width(),
                height: img.height(),
                label: FigureLabel::Unclassified,
                class_probs: vec![],
                gate_prob: None,
                parent_figure_id: None,
                bbox_in_parent: None,
            });
        }
        (m, store)
    }

    #[test]
    fn gate_then_dismantle_appends_valid_children() {
        let cfg = DismantleConfig::default();
        let params = SvmParams::rbf(0.001, 1000.0);
        let gate = GateModel::train(&synth::gate_corpus(60, 1), &params, &cfg).unwrap();
        let frag = FragmentClassifier::train(&synth::fragment_corpus(60, 2), 1.0, &params, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mont = synth::montage(&synth::MontageSpec::new(2, 2, 16), &[FigureLabel::Plot, FigureLabel::Photo, FigureLabel::Diagram, FigureLabel::Plot], &mut rng);
        let single = synth::random_singleton(FigureLabel::Photo, &mut rng);
        let (mut m, store) = corpus_with(&[mont.image.clone(), single]);

        let g = gate_manifest(&mut m, &store, &gate).unwrap();
        assert_eq!(g.processed, 2);
        assert_eq!(m.figure("f0").unwrap().label, FigureLabel::Multichart);
        assert_eq!(m.figure("f1").unwrap().label, FigureLabel::Unclassified);

        let d = dismantle_manifest(&mut m, &store, &frag, &cfg).unwrap();
        assert_eq!(d.candidates, 1);
        assert_eq!(d.children, 4);
        m.validate().unwrap();
        let parent = Manifest::load_luma(&store, m.figure("f0").unwrap()).unwrap();
        for child in m.children_of("f0") {
            let bbox = child.bbox_in_parent.unwrap();
            let stored = Manifest::load_luma(&store, child).unwrap();
            assert_eq!(stored, parent.crop(&bbox));
        }
        // a second run finds nothing left to do
        let again = dismantle_manifest(&mut m, &store, &frag, &cfg).unwrap();
        assert_eq!(again.candidates, 0);
        assert_eq!(singleton_candidates(&m).len(), 5);
    }

    #[test]
    fn missing_images_are_counted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (mut m, _) = corpus_with(&[synth::random_singleton(FigureLabel::Plot, &mut rng)]);
        let empty = MemoryStore::default();
        let cfg = DismantleConfig::default();
        let gate = GateModel::train(&synth::gate_corpus(20, 1), &SvmParams::rbf(0.001, 1000.0), &cfg).unwrap();
        let s = gate_manifest(&mut m, &empty, &gate).unwrap();
        assert_eq!((s.processed, s.failed), (0, 1));
        assert_eq!(m.figures[0].gate_prob, None);
    }
}
