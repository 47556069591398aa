//! Multi-chart gate: effective-figure-region density maps plus size ratios,
//! fed to a binary SVM that routes figures to the dismantler.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dismantle::{self, DismantleConfig};
use crate::geometry::Rect;
use crate::raster::LumaImage;
use crate::svm::{self, Dataset, SvmError, SvmModel, SvmParams};

/// Blocks per side of the density map.
pub const DENSITY_N: usize = 10;
/// Two size ratios followed by the `DENSITY_N²` densities.
pub const GATE_FEATURE_LEN: usize = 2 + DENSITY_N * DENSITY_N;
/// Pixels darker than this count as content.
pub const CONTENT_LUMA: f64 = 0.95;

const MULTICHART: &str = "multichart";
const SINGLETON: &str = "singleton";

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error("region {region:?} outside {width}x{height} image")]
    InvalidRegion { region: Rect, width: u32, height: u32 },
    #[error("gate model: {0}")]
    Model(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

pub type Result<T, E = GateError> = std::result::Result<T, E>;

/// `[start, end)` of block `i` when `len` pixels are cut into `n` blocks;
/// the remainder goes to the last block.
pub fn block_span(len: u32, n: usize, i: usize) -> (u32, u32) {
    let step = len / n as u32;
    let start = step * i as u32;
    let end = if i + 1 == n { len } else { start + step };
    (start, end)
}

/// Mean training-set dimensions, frozen into a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub height_avg: f64,
    pub width_avg: f64,
}

impl SizeStats {
    pub fn from_dims(dims: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let (mut w, mut h, mut n) = (0.0, 0.0, 0usize);
        for (dw, dh) in dims {
            w += dw as f64;
            h += dh as f64;
            n += 1;
        }
        let n = n.max(1) as f64;
        SizeStats { height_avg: (h / n).max(1.0), width_avg: (w / n).max(1.0) }
    }

    /// `[height / height_avg, width / width_avg]`.
    pub fn ratios(&self, width: u32, height: u32) -> [f64; 2] {
        [height as f64 / self.height_avg, width as f64 / self.width_avg]
    }

    pub(crate) fn store(&self, meta: &mut BTreeMap<String, String>) {
        meta.insert("height_avg".into(), format!("{:?}", self.height_avg));
        meta.insert("width_avg".into(), format!("{:?}", self.width_avg));
    }

    pub(crate) fn load(meta: &BTreeMap<String, String>) -> Option<Self> {
        Some(SizeStats {
            height_avg: meta.get("height_avg")?.parse().ok()?,
            width_avg: meta.get("width_avg")?.parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfrDensityMap {
    pub n: usize,
    /// Row-major `n × n`.
    pub densities: Vec<f64>,
}

impl EfrDensityMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.densities[row * self.n + col]
    }
}

/// Effective figure regions: the content box of every block produced by the
/// dismantler's splitting pass. Blank blocks contribute nothing.
pub fn compute_efr_mask(img: &LumaImage, cfg: &DismantleConfig) -> Vec<Rect> {
    dismantle::split(img, cfg)
        .leaves()
        .iter()
        .filter_map(|leaf| img.content_bbox(leaf, CONTENT_LUMA))
        .collect()
}

/// Fraction of every block covered by the union of `regions`.
pub fn efr_density_map(regions: &[Rect], width: u32, height: u32, n: usize) -> Result<EfrDensityMap> {
    let bounds = Rect::new(0, 0, width, height);
    for r in regions {
        if !bounds.contains_rect(r) {
            return Err(GateError::InvalidRegion { region: *r, width, height });
        }
    }
    let mut covered = vec![false; width as usize * height as usize];
    for r in regions {
        for y in r.y..r.bottom() {
            let start = (y * width + r.x) as usize;
            covered[start..start + r.w as usize].fill(true);
        }
    }
    let mut densities = Vec::with_capacity(n * n);
    for i in 0..n {
        let (y0, y1) = block_span(height, n, i);
        for j in 0..n {
            let (x0, x1) = block_span(width, n, j);
            let area = (y1 - y0) as usize * (x1 - x0) as usize;
            if area == 0 {
                densities.push(0.0);
                continue;
            }
            let hits: usize = (y0..y1)
                .map(|y| covered[(y * width + x0) as usize..(y * width + x1) as usize].iter().filter(|&&c| c).count())
                .sum();
            densities.push(hits as f64 / area as f64);
        }
    }
    Ok(EfrDensityMap { n, densities })
}

/// The 102-element gate feature of `img`.
pub fn gate_feature(img: &LumaImage, stats: &SizeStats, cfg: &DismantleConfig) -> Vec<f64> {
    let regions = compute_efr_mask(img, cfg);
    let map = efr_density_map(&regions, img.width(), img.height(), DENSITY_N).expect("regions come from the image");
    let mut f = Vec::with_capacity(GATE_FEATURE_LEN);
    f.extend(stats.ratios(img.width(), img.height()));
    f.extend(map.densities);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub multichart: bool,
    /// Probability of the multi-chart class.
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateModel {
    pub stats: SizeStats,
    pub model: SvmModel,
    pub config: DismantleConfig,
}

/// Gate features for labeled images (`true` = multi-chart), with size
/// statistics taken from the same images.
pub fn gate_dataset(samples: &[(LumaImage, bool)], cfg: &DismantleConfig) -> (Dataset, SizeStats) {
    let stats = SizeStats::from_dims(samples.iter().map(|(img, _)| (img.width(), img.height())));
    let features = crate::par::map(samples, |(img, _)| gate_feature(img, &stats, cfg));
    let names: Vec<&str> = samples.iter().map(|(_, m)| if *m { MULTICHART } else { SINGLETON }).collect();
    (Dataset::from_named(features, &names), stats)
}

impl GateModel {
    pub fn train(samples: &[(LumaImage, bool)], params: &SvmParams, cfg: &DismantleConfig) -> Result<Self> {
        let (data, stats) = gate_dataset(samples, cfg);
        let mut model = svm::train(&data, params)?;
        stats.store(&mut model.metadata);
        model.metadata.insert("model".into(), "gate".into());
        Ok(GateModel { stats, model, config: *cfg })
    }

    pub fn from_model(model: SvmModel) -> Result<Self> {
        if model.class_index(MULTICHART).is_none() || model.class_index(SINGLETON).is_none() {
            return Err(GateError::Model("expected multichart/singleton classes".into()));
        }
        if model.dim != GATE_FEATURE_LEN {
            return Err(GateError::Model(format!("feature length {} != {GATE_FEATURE_LEN}", model.dim)));
        }
        let stats = SizeStats::load(&model.metadata).ok_or_else(|| GateError::Model("missing size statistics".into()))?;
        Ok(GateModel { stats, model, config: DismantleConfig::default() })
    }

    pub fn classify(&self, img: &LumaImage) -> Result<GateDecision> {
        let p = self.model.predict(&gate_feature(img, &self.stats, &self.config))?;
        let mi = self.model.class_index(MULTICHART).expect("checked at construction");
        Ok(GateDecision { multichart: p.class == mi, prob: p.probs[mi] })
    }
}
