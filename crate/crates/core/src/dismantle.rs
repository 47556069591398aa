//! Compound-figure dismantling: recursive gutter splitting, standalone vs
//! auxiliary fragment classification, and score-driven merging.

use serde::{Deserialize, Serialize};

use crate::gate::{self, SizeStats};
use crate::geometry::Rect;
use crate::raster::LumaImage;
use crate::svm::{self, Dataset, SvmError, SvmModel, SvmParams};

#[derive(Debug, thiserror::Error)]
pub enum DismantleError {
    #[error("fragment model: {0}")]
    Model(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

pub type Result<T, E = DismantleError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeWeights {
    pub gap: f64,
    pub alignment: f64,
    pub aspect: f64,
}

impl Default for MergeWeights {
    fn default() -> Self {
        MergeWeights { gap: 1.0, alignment: 1.0, aspect: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DismantleConfig {
    /// Thinnest background band that separates two fragments.
    pub min_gutter: u32,
    /// Fragments smaller than this in either dimension are auxiliary.
    pub min_fragment: u32,
    /// Luminance distance from the background level still counted as background.
    pub bg_tolerance: f64,
    /// Share of background pixels that makes a whole row or column background.
    pub bg_line_fraction: f64,
    pub weights: MergeWeights,
}

impl Default for DismantleConfig {
    fn default() -> Self {
        DismantleConfig { min_gutter: 8, min_fragment: 24, bg_tolerance: 0.05, bg_line_fraction: 0.99, weights: MergeWeights::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitAxis {
    /// Children are stacked top to bottom.
    Horizontal,
    /// Children sit side by side.
    Vertical,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentNode {
    pub bbox: Rect,
    pub children: Vec<FragmentNode>,
    pub split_axis: SplitAxis,
}

impl FragmentNode {
    fn leaf(bbox: Rect) -> Self {
        FragmentNode { bbox, children: Vec::new(), split_axis: SplitAxis::Leaf }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaf boxes in reading order of the tree.
    pub fn leaves(&self) -> Vec<Rect> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<Rect>) {
        if self.is_leaf() {
            out.push(self.bbox);
        } else {
            self.children.iter().for_each(|c| c.collect_leaves(out));
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(FragmentNode::depth).max().unwrap_or(0)
    }
}

/// Modal luminance of the one-pixel image frame (256-level histogram; ties → lighter).
pub fn background_level(img: &LumaImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return 1.0;
    }
    let mut hist = [0u32; 256];
    let mut add = |v: f64| hist[(v.clamp(0.0, 1.0) * 255.0).round() as usize] += 1;
    for x in 0..w {
        add(img.get(x, 0));
        if h > 1 {
            add(img.get(x, h - 1));
        }
    }
    for y in 1..h.saturating_sub(1) {
        add(img.get(0, y));
        if w > 1 {
            add(img.get(w - 1, y));
        }
    }
    let mut best = 255;
    for b in (0..256).rev() {
        if hist[b] > hist[best] {
            best = b;
        }
    }
    best as f64 / 255.0
}

struct Background<'a> {
    img: &'a LumaImage,
    level: f64,
    cfg: &'a DismantleConfig,
}

impl Background<'_> {
    #[inline]
    fn is_bg(&self, v: f64) -> bool {
        (v - self.level).abs() <= self.cfg.bg_tolerance
    }

    fn line_is_bg(&self, bg_count: usize, len: usize) -> bool {
        bg_count as f64 >= self.cfg.bg_line_fraction * len as f64
    }

    fn row_flags(&self, r: &Rect) -> Vec<bool> {
        (r.y..r.bottom())
            .map(|y| {
                let row = &self.img.row(y)[r.x as usize..r.right() as usize];
                self.line_is_bg(row.iter().filter(|&&v| self.is_bg(v)).count(), row.len())
            })
            .collect()
    }

    fn col_flags(&self, r: &Rect) -> Vec<bool> {
        let mut counts = vec![0usize; r.w as usize];
        for y in r.y..r.bottom() {
            let row = &self.img.row(y)[r.x as usize..r.right() as usize];
            for (c, &v) in counts.iter_mut().zip(row) {
                *c += self.is_bg(v) as usize;
            }
        }
        counts.into_iter().map(|c| self.line_is_bg(c, r.h as usize)).collect()
    }

    /// Shrinks `r` to its outermost non-background rows and columns.
    fn trim(&self, r: &Rect) -> Option<Rect> {
        let rows = self.row_flags(r);
        let top = rows.iter().position(|&b| !b)?;
        let bottom = rows.iter().rposition(|&b| !b)? + 1;
        let band = Rect::from_corners(r.x, r.y + top as u32, r.right(), r.y + bottom as u32);
        let cols = self.col_flags(&band);
        let left = cols.iter().position(|&b| !b)?;
        let right = cols.iter().rposition(|&b| !b)? + 1;
        Some(Rect::from_corners(r.x + left as u32, band.y, r.x + right as u32, band.bottom()))
    }
}

/// Cut positions (offsets from the line start) at the centers of background
/// runs at least `min_gutter` long. The runs never touch the ends because
/// the region has been trimmed.
fn cuts(flags: &[bool], min_gutter: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < flags.len() {
        if flags[i] {
            let start = i;
            while i < flags.len() && flags[i] {
                i += 1;
            }
            if i - start >= min_gutter as usize && start > 0 && i < flags.len() {
                out.push(((start + i) / 2) as u32);
            }
        } else {
            i += 1;
        }
    }
    out
}

fn split_region(bg: &Background, region: Rect, parent: SplitAxis) -> Option<FragmentNode> {
    let bbox = bg.trim(&region)?;
    let min = bg.cfg.min_fragment;
    if bbox.w < min && bbox.h < min {
        return Some(FragmentNode::leaf(bbox));
    }
    let h_cuts = cuts(&bg.row_flags(&bbox), bg.cfg.min_gutter);
    let v_cuts = cuts(&bg.col_flags(&bbox), bg.cfg.min_gutter);
    let axis = match h_cuts.len().cmp(&v_cuts.len()) {
        _ if h_cuts.is_empty() && v_cuts.is_empty() => return Some(FragmentNode::leaf(bbox)),
        std::cmp::Ordering::Greater => SplitAxis::Horizontal,
        std::cmp::Ordering::Less => SplitAxis::Vertical,
        std::cmp::Ordering::Equal if parent == SplitAxis::Horizontal => SplitAxis::Vertical,
        std::cmp::Ordering::Equal => SplitAxis::Horizontal,
    };
    let (positions, extent) = match axis {
        SplitAxis::Horizontal => (&h_cuts, bbox.h),
        _ => (&v_cuts, bbox.w),
    };
    let mut bounds = vec![0];
    bounds.extend(positions.iter().copied());
    bounds.push(extent);
    let children: Vec<FragmentNode> = bounds
        .windows(2)
        .filter_map(|b| {
            let part = match axis {
                SplitAxis::Horizontal => Rect::new(bbox.x, bbox.y + b[0], bbox.w, b[1] - b[0]),
                _ => Rect::new(bbox.x + b[0], bbox.y, b[1] - b[0], bbox.h),
            };
            split_region(bg, part, axis)
        })
        .collect();
    Some(FragmentNode { bbox, children, split_axis: axis })
}

/// Recursively splits `img` along background gutters. A blank image yields
/// one leaf covering the whole image.
pub fn split(img: &LumaImage, cfg: &DismantleConfig) -> FragmentNode {
    let bg = Background { img, level: background_level(img), cfg };
    split_region(&bg, img.bounds(), SplitAxis::Leaf).unwrap_or_else(|| FragmentNode::leaf(img.bounds()))
}

/// Whether each pixel of `img` differs from the background level.
pub(crate) fn content_mask(img: &LumaImage, level: f64, tol: f64) -> Vec<bool> {
    img.data().iter().map(|&v| (v - level).abs() > tol).collect()
}

/// Share of content pixels of `region` in each of `n × n` blocks.
pub(crate) fn own_density(mask: &[bool], width: u32, region: &Rect, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let (y0, y1) = gate::block_span(region.h, n, i);
        for j in 0..n {
            let (x0, x1) = gate::block_span(region.w, n, j);
            let area = (y1 - y0) as usize * (x1 - x0) as usize;
            if area == 0 {
                out.push(0.0);
                continue;
            }
            let mut hits = 0usize;
            for y in region.y + y0..region.y + y1 {
                let row = &mask[(y * width) as usize..];
                hits += row[(region.x + x0) as usize..(region.x + x1) as usize].iter().filter(|&&m| m).count();
            }
            out.push(hits as f64 / area as f64);
        }
    }
    out
}

/// Feature vector of a fragment: size ratios then its own 10×10 content density.
pub fn fragment_feature(img: &LumaImage, region: &Rect, level: f64, tol: f64, stats: &SizeStats) -> Vec<f64> {
    let mask = content_mask(img, level, tol);
    let mut f = stats.ratios(region.w, region.h).to_vec();
    f.extend(own_density(&mask, img.width(), region, gate::DENSITY_N));
    f
}

const STANDALONE: &str = "standalone";
const AUXILIARY: &str = "auxiliary";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragmentLabel {
    pub standalone: bool,
    /// Probability of the standalone class.
    pub prob: f64,
}

/// Binary standalone/auxiliary classifier over fragment features.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentClassifier {
    pub stats: SizeStats,
    pub model: SvmModel,
}

impl FragmentClassifier {
    /// Trains on whole-image fragments; `true` marks standalone.
    pub fn train(samples: &[(LumaImage, bool)], background: f64, params: &SvmParams, cfg: &DismantleConfig) -> Result<Self> {
        let (data, stats) = fragment_dataset(samples, background, cfg);
        let mut model = svm::train(&data, params)?;
        stats.store(&mut model.metadata);
        model.metadata.insert("model".into(), "fragment".into());
        Ok(FragmentClassifier { stats, model })
    }

    pub fn from_model(model: SvmModel) -> Result<Self> {
        if model.class_index(STANDALONE).is_none() || model.class_index(AUXILIARY).is_none() {
            return Err(DismantleError::Model("expected standalone/auxiliary classes".into()));
        }
        let stats = SizeStats::load(&model.metadata).ok_or_else(|| DismantleError::Model("missing size statistics".into()))?;
        Ok(FragmentClassifier { stats, model })
    }

    pub fn classify_feature(&self, feature: &[f64]) -> Result<FragmentLabel> {
        let p = self.model.predict(feature)?;
        let si = self.model.class_index(STANDALONE).expect("checked at construction");
        Ok(FragmentLabel { standalone: p.class == si, prob: p.probs[si] })
    }

    /// Labels `region` of `img`; regions under the minimum fragment size are auxiliary.
    pub fn classify(&self, img: &LumaImage, region: &Rect, level: f64, cfg: &DismantleConfig) -> Result<FragmentLabel> {
        if region.w < cfg.min_fragment || region.h < cfg.min_fragment {
            return Ok(FragmentLabel { standalone: false, prob: 0.0 });
        }
        self.classify_feature(&fragment_feature(img, region, level, cfg.bg_tolerance, &self.stats))
    }
}

/// Features of whole-image fragments cut from pages whose background level is `background`.
pub fn fragment_dataset(samples: &[(LumaImage, bool)], background: f64, cfg: &DismantleConfig) -> (Dataset, SizeStats) {
    let stats = SizeStats::from_dims(samples.iter().map(|(img, _)| (img.width(), img.height())));
    let features = crate::par::map(samples, |(img, _)| {
        fragment_feature(img, &img.bounds(), background, cfg.bg_tolerance, &stats)
    });
    let names: Vec<&str> = samples.iter().map(|(_, s)| if *s { STANDALONE } else { AUXILIARY }).collect();
    (Dataset::from_named(features, &names), stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubFigureKind {
    StandaloneDerived,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubFigure {
    pub bbox: Rect,
    pub members: Vec<Rect>,
    pub kind: SubFigureKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub subfigures: Vec<SubFigure>,
    /// Set when no leaf was standalone and the whole image was returned.
    pub degenerate: bool,
}

fn overlap(a0: u32, a1: u32, b0: u32, b1: u32) -> u32 {
    a1.min(b1).saturating_sub(a0.max(b0))
}

fn log_aspect(r: &Rect) -> f64 {
    (r.w.max(1) as f64 / r.h.max(1) as f64).ln()
}

/// Attachment score of auxiliary box `a` to group box `s`:
/// `w_gap / gap + w_alignment · overlap − w_aspect · |Δ ln aspect|`.
///
/// Overlap is the larger share of `a`'s extent shared with `s` along either
/// axis; the aspect term is how far the union's aspect ratio moves from `s`'s.
pub fn merge_score(a: &Rect, s: &Rect, w: &MergeWeights) -> f64 {
    let gap = a.gap(s).max(1) as f64;
    let ox = overlap(a.x, a.right(), s.x, s.right()) as f64 / a.w.max(1) as f64;
    let oy = overlap(a.y, a.bottom(), s.y, s.bottom()) as f64 / a.h.max(1) as f64;
    let distortion = (log_aspect(&a.union(s)) - log_aspect(s)).abs();
    w.gap / gap + w.alignment * ox.max(oy) - w.aspect * distortion
}

/// Attaches every auxiliary leaf to a standalone group, best score first,
/// then coalesces groups whose boxes overlap so the output is disjoint.
pub fn merge(leaves: &[Rect], standalone: &[bool], image: Rect, weights: &MergeWeights) -> MergeOutcome {
    assert_eq!(leaves.len(), standalone.len(), "one label per leaf");
    let mut groups: Vec<SubFigure> = leaves
        .iter()
        .zip(standalone)
        .filter(|(_, &s)| s)
        .map(|(r, _)| SubFigure { bbox: *r, members: vec![*r], kind: SubFigureKind::StandaloneDerived })
        .collect();
    if groups.is_empty() {
        log::warn!("no standalone fragment among {} leaves; keeping the whole image", leaves.len());
        return MergeOutcome {
            subfigures: vec![SubFigure { bbox: image, members: leaves.to_vec(), kind: SubFigureKind::Merged }],
            degenerate: true,
        };
    }
    let mut pending: Vec<Rect> = leaves.iter().zip(standalone).filter(|(_, &s)| !s).map(|(r, _)| *r).collect();
    while !pending.is_empty() {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, a) in pending.iter().enumerate() {
            for (gi, g) in groups.iter().enumerate() {
                let score = merge_score(a, &g.bbox, weights);
                let better = match best {
                    None => true,
                    Some((bs, _, bg)) => {
                        score > bs || (score == bs && (g.bbox.x, g.bbox.y) < (groups[bg].bbox.x, groups[bg].bbox.y))
                    }
                };
                if better {
                    best = Some((score, ai, gi));
                }
            }
        }
        let (_, ai, gi) = best.expect("groups and pending are nonempty");
        let a = pending.remove(ai);
        let g = &mut groups[gi];
        g.bbox = g.bbox.union(&a);
        g.members.push(a);
        g.kind = SubFigureKind::Merged;
    }
    // unions can grow into neighbors
    loop {
        let hit = (0..groups.len())
            .flat_map(|i| (i + 1..groups.len()).map(move |j| (i, j)))
            .find(|&(i, j)| groups[i].bbox.intersects(&groups[j].bbox));
        let Some((i, j)) = hit else { break };
        let other = groups.remove(j);
        let g = &mut groups[i];
        g.bbox = g.bbox.union(&other.bbox);
        g.members.extend(other.members);
        g.kind = SubFigureKind::Merged;
    }
    groups.sort_by_key(|g| (g.bbox.y, g.bbox.x));
    MergeOutcome { subfigures: groups, degenerate: false }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dismantled {
    pub tree: FragmentNode,
    pub leaf_labels: Vec<FragmentLabel>,
    pub subfigures: Vec<SubFigure>,
    pub degenerate: bool,
}

impl Dismantled {
    pub fn boxes(&self) -> Vec<Rect> {
        self.subfigures.iter().map(|s| s.bbox).collect()
    }
}

/// Split, classify every leaf, merge.
pub fn dismantle(img: &LumaImage, classifier: &FragmentClassifier, cfg: &DismantleConfig) -> Result<Dismantled> {
    let tree = split(img, cfg);
    let level = background_level(img);
    let leaves = tree.leaves();
    let leaf_labels = leaves
        .iter()
        .map(|r| classifier.classify(img, r, level, cfg))
        .collect::<Result<Vec<_>>>()?;
    let flags: Vec<bool> = leaf_labels.iter().map(|l| l.standalone).collect();
    let merged = merge(&leaves, &flags, img.bounds(), &cfg.weights);
    Ok(Dismantled { tree, leaf_labels, subfigures: merged.subfigures, degenerate: merged.degenerate })
}

/// Greedy one-to-one matching at an IoU threshold; returns the number of matched pairs.
pub fn match_boxes(predicted: &[Rect], truth: &[Rect], min_iou: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in predicted.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let iou = p.iou(t);
            if iou >= min_iou {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_p, mut used_t) = (vec![false; predicted.len()], vec![false; truth.len()]);
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            matched += 1;
        }
    }
    matched
}
