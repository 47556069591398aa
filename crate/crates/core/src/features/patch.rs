use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::par;
use crate::raster::LumaImage;

/// Contrast-normalization regularizer, `10 / 255²` on the `[0, 1]` luminance scale.
pub const CONTRAST_EPS: f64 = 10.0 / (255.0 * 255.0);

/// Dense row-major collection of equally sized patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    dim: usize,
    data: Vec<f64>,
}

impl PatchSet {
    pub fn new(dim: usize) -> Self {
        PatchSet { dim, data: Vec::new() }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "flat data is not a multiple of {dim}");
        PatchSet { dim, data }
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut set = PatchSet::new(dim);
        for r in rows {
            set.push(r.as_ref());
        }
        set
    }

    pub fn push(&mut self, patch: &[f64]) {
        assert_eq!(patch.len(), self.dim);
        self.data.extend_from_slice(patch);
    }

    pub fn extend(&mut self, other: &PatchSet) {
        assert_eq!(other.dim, self.dim);
        self.data.extend_from_slice(&other.data);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// In-place `x ← (x − mean) / sqrt(var + CONTRAST_EPS)`. A constant patch becomes all zeros.
pub fn contrast_normalize(patch: &mut [f64]) {
    if patch.iter().all(|&v| v == patch[0]) {
        patch.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let n = patch.len() as f64;
    let mean = patch.iter().sum::<f64>() / n;
    let var = patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + CONTRAST_EPS).sqrt();
    patch.iter_mut().for_each(|v| *v = (*v - mean) * inv);
}

/// Copies the `window × window` block at origin `(row, col)` into `out`.
#[inline]
pub fn extract_window(img: &LumaImage, row: u32, col: u32, window: usize, out: &mut [f64]) {
    for dy in 0..window {
        let src = &img.row(row + dy as u32)[col as usize..col as usize + window];
        out[dy * window..(dy + 1) * window].copy_from_slice(src);
    }
}

/// Draws `per_image` random windows from each image and contrast-normalizes them.
///
/// Image `i` uses ChaCha stream `i` under `seed`, so output is independent of
/// scheduling.
pub fn sample_patches(images: &[LumaImage], window: usize, per_image: usize, seed: u64) -> PatchSet {
    let dim = window * window;
    let per: Vec<Vec<f64>> = par::map_range(images.len(), |i| {
        let img = &images[i];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let max_r = img.height() - window as u32;
        let max_c = img.width() - window as u32;
        let mut out = vec![0.0; per_image * dim];
        for p in out.chunks_exact_mut(dim) {
            let r = rng.gen_range(0..=max_r);
            let c = rng.gen_range(0..=max_c);
            extract_window(img, r, c, window, p);
            contrast_normalize(p);
        }
        out
    });
    PatchSet::from_flat(dim, per.concat())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_patch_has_zero_mean() {
        let mut p: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5).collect();
        let n = 36.0;
        let raw_mean = p.iter().sum::<f64>() / n;
        let raw_var = p.iter().map(|v| (v - raw_mean).powi(2)).sum::<f64>() / n;
        contrast_normalize(&mut p);
        let mean = p.iter().sum::<f64>() / n;
        let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        // variance is 1 up to the regularizer's shrinkage
        let expected = raw_var / (raw_var + CONTRAST_EPS);
        assert!((var - expected).abs() < 1e-6, "var {var} expected {expected}");
        assert!(var <= 1.0);
    }

    #[test]
    fn constant_patch_maps_to_zero() {
        let mut p = vec![0.7; 36];
        contrast_normalize(&mut p);
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_counts_and_determinism() {
        let imgs: Vec<LumaImage> = (0..10)
            .map(|k| {
                let data = (0..128 * 128).map(|i| ((i * (k + 3)) % 97) as f64 / 97.0).collect();
                LumaImage::from_vec(128, 128, data)
            })
            .collect();
        let a = sample_patches(&imgs, 6, 100, 7);
        let b = sample_patches(&imgs, 6, 100, 7);
        assert_eq!(a.len(), 1000);
        assert_eq!(a, b);
        assert_ne!(a, sample_patches(&imgs, 6, 100, 8));
    }

    #[test]
    fn white_image_yields_zero_patches() {
        let imgs = vec![LumaImage::new(128, 128, 1.0)];
        let set = sample_patches(&imgs, 6, 50, 1);
        assert!(set.as_flat().iter().all(|&v| v == 0.0));
    }
}
