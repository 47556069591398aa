use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeansConfig};
use super::patch::{contrast_normalize, extract_window};
use super::{FeatureError, PatchSet, Result, WhiteningTransform};
use crate::par;
use crate::raster::LumaImage;

const MAGIC: &[u8; 8] = b"FMCODEBK";
const VERSION: u32 = 1;

/// Whitening transform plus `k` centroid patches in whitened space.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    window: usize,
    image_size: u32,
    whitening: WhiteningTransform,
    centroids: PatchSet,
    centroid_norms: Vec<f64>,
}

/// Hyperparameters written next to a serialized codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub version: u32,
    pub k: usize,
    pub window: usize,
    pub image_size: u32,
    pub zca_epsilon: f64,
    pub contrast_epsilon: f64,
    pub per_image: Option<usize>,
    pub seed: Option<u64>,
    pub training_patches: Option<usize>,
}

/// Per-quadrant codeword histograms, concatenated: top-left, top-right, bottom-left, bottom-right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<u32>);

impl FeatureVector {
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

/// Clusters the whitened training patches into `k` codewords.
pub fn build_codebook(
    patches: &PatchSet,
    whitening: &WhiteningTransform,
    k: usize,
    seed: u64,
) -> Result<Codebook> {
    if patches.len() < k {
        return Err(FeatureError::InsufficientData(format!(
            "codebook of {k} entries needs at least {k} patches, got {}",
            patches.len()
        )));
    }
    let window = (patches.dim() as f64).sqrt() as usize;
    if window * window != patches.dim() || whitening.dim() != patches.dim() {
        return Err(FeatureError::InvalidParameter(format!(
            "patch dimension {} is not a square matching the whitening transform ({})",
            patches.dim(),
            whitening.dim()
        )));
    }
    let whitened = whitening.apply_all(patches);
    let fit = kmeans(&whitened, &KMeansConfig::new(k, seed))?;
    if !fit.converged {
        log::warn!("k-means hit the iteration cap after {} passes", fit.iterations);
    }
    Codebook::new(window, super::IMAGE_SIZE, whitening.clone(), fit.centroids)
}

impl Codebook {
    pub fn new(window: usize, image_size: u32, whitening: WhiteningTransform, centroids: PatchSet) -> Result<Self> {
        if centroids.dim() != window * window || whitening.dim() != window * window {
            return Err(FeatureError::InvalidParameter("codebook dimensions disagree".into()));
        }
        if window == 0 || image_size < window as u32 {
            return Err(FeatureError::InvalidParameter(format!("window {window} does not fit image {image_size}")));
        }
        let centroid_norms = centroids.rows().map(|c| c.iter().map(|v| v * v).sum()).collect();
        Ok(Codebook { window, image_size, whitening, centroids, centroid_norms })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn image_size(&self) -> u32 {
        self.image_size
    }

    pub fn whitening(&self) -> &WhiteningTransform {
        &self.whitening
    }

    pub fn centroids(&self) -> &PatchSet {
        &self.centroids
    }

    pub fn feature_len(&self) -> usize {
        4 * self.k()
    }

    pub fn windows_per_image(&self) -> u32 {
        let side = self.image_size - self.window as u32 + 1;
        side * side
    }

    /// Nearest codeword for an already whitened patch; ties → lowest index.
    #[inline]
    pub fn assign(&self, whitened: &[f64]) -> usize {
        // ‖y − c‖² = ‖y‖² − 2 y·c + ‖c‖²; ‖y‖² is common to all codewords
        let mut best = (0, f64::INFINITY);
        for (j, (c, n)) in self.centroids.rows().zip(&self.centroid_norms).enumerate() {
            let dot: f64 = c.iter().zip(whitened).map(|(a, b)| a * b).sum();
            let score = n - 2.0 * dot;
            if score < best.1 {
                best = (j, score);
            }
        }
        best.0
    }

    pub fn meta(&self) -> CodebookMeta {
        CodebookMeta {
            version: VERSION,
            k: self.k(),
            window: self.window,
            image_size: self.image_size,
            zca_epsilon: self.whitening.epsilon,
            contrast_epsilon: super::CONTRAST_EPS,
            per_image: None,
            seed: None,
            training_patches: None,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.window * self.window;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.window as u32)?;
        w.write_u32::<LittleEndian>(self.image_size)?;
        w.write_u32::<LittleEndian>(self.k() as u32)?;
        w.write_f64::<LittleEndian>(self.whitening.epsilon)?;
        for v in self.whitening.mean.iter().chain(&self.whitening.matrix).chain(self.centroids.as_flat()) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        debug_assert_eq!(self.whitening.matrix.len(), d * d);
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(FeatureError::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(FeatureError::Format(format!("unsupported version {version}")));
        }
        let window = r.read_u32::<LittleEndian>()? as usize;
        let image_size = r.read_u32::<LittleEndian>()?;
        let k = r.read_u32::<LittleEndian>()? as usize;
        let epsilon = r.read_f64::<LittleEndian>()?;
        let d = window * window;
        if d == 0 || d > 4096 || k == 0 || k > 1 << 20 {
            return Err(FeatureError::Format(format!("implausible header window={window} k={k}")));
        }
        let mut read_n = |n: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let mean = read_n(d)?;
        let matrix = read_n(d * d)?;
        let centroids = PatchSet::from_flat(d, read_n(k * d)?);
        Codebook::new(window, image_size, WhiteningTransform { mean, matrix, epsilon }, centroids)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

/// Histogram of nearest codewords over every sliding window, one histogram per quadrant.
///
/// A window with origin `(r, c)` is attributed to the quadrant holding its
/// centre pixel `(r + (w−1)/2, c + (w−1)/2)`; quadrant edges sit at `size / 2`.
pub fn encode(img: &LumaImage, codebook: &Codebook) -> Result<FeatureVector> {
    let size = codebook.image_size;
    if img.width() != size || img.height() != size {
        return Err(FeatureError::InvalidImage(format!(
            "expected a {size}x{size} normalized image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let w = codebook.window;
    let d = w * w;
    let k = codebook.k();
    let half = size / 2;
    let centre = ((w - 1) / 2) as u32;
    let mut hist = vec![0u32; 4 * k];
    let mut patch = vec![0.0; d];
    let mut white = vec![0.0; d];
    let flat_code = {
        let zero = vec![0.0; d];
        codebook.whitening.apply_into(&zero, &mut white);
        codebook.assign(&white)
    };
    for r in 0..=(size - w as u32) {
        let qr = if r + centre >= half { 2 } else { 0 };
        for c in 0..=(size - w as u32) {
            let q = qr + if c + centre >= half { 1 } else { 0 };
            extract_window(img, r, c, w, &mut patch);
            let first = patch[0];
            let code = if patch.iter().all(|&v| v == first) {
                flat_code
            } else {
                contrast_normalize(&mut patch);
                codebook.whitening.apply_into(&patch, &mut white);
                codebook.assign(&white)
            };
            hist[q * k + code] += 1;
        }
    }
    Ok(FeatureVector(hist))
}

pub fn encode_batch(images: &[LumaImage], codebook: &Codebook) -> Result<Vec<FeatureVector>> {
    par::map(images, |img| encode(img, codebook)).into_iter().collect()
}
