use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{FeatureError, PatchSet, Result};

/// Default eigenvalue floor for the ZCA transform.
pub const DEFAULT_ZCA_EPS: f64 = 0.01;

/// ZCA whitening: `y = W (x − mean)` with `W = U diag(1 / sqrt(max(λ, ε))) Uᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningTransform {
    pub mean: Vec<f64>,
    /// Row-major `dim × dim`.
    pub matrix: Vec<f64>,
    pub epsilon: f64,
}

impl WhiteningTransform {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.matrix[i * d..(i + 1) * d];
            *o = row
                .iter()
                .zip(x.iter().zip(&self.mean))
                .map(|(w, (xv, m))| w * (xv - m))
                .sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_all(&self, patches: &PatchSet) -> PatchSet {
        let mut out = PatchSet::new(self.dim());
        let mut buf = vec![0.0; self.dim()];
        for p in patches.rows() {
            self.apply_into(p, &mut buf);
            out.push(&buf);
        }
        out
    }
}

/// Population mean and covariance (divides by `n`).
pub(crate) fn mean_and_covariance(patches: &PatchSet) -> (Vec<f64>, DMatrix<f64>) {
    let d = patches.dim();
    let n = patches.len() as f64;
    let mut mean = vec![0.0; d];
    for p in patches.rows() {
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for p in patches.rows() {
        centered.iter_mut().zip(p.iter().zip(&mean)).for_each(|(c, (v, m))| *c = v - m);
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

pub fn fit_whitening(patches: &PatchSet, epsilon: f64) -> Result<WhiteningTransform> {
    if !(epsilon > 0.0) {
        return Err(FeatureError::InvalidParameter(format!("ZCA epsilon must be > 0, got {epsilon}")));
    }
    let d = patches.dim();
    if patches.len() <= d {
        return Err(FeatureError::InsufficientData(format!(
            "whitening needs more than {d} patches, got {}",
            patches.len()
        )));
    }
    let (mean, cov) = mean_and_covariance(patches);
    let eig = SymmetricEigen::new(cov);
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(epsilon).sqrt()));
    let w = &eig.eigenvectors * scale * eig.eigenvectors.transpose();
    let matrix = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| w[(i, j)]).collect();
    Ok(WhiteningTransform { mean, matrix, epsilon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    // Independent check: plain double loop, no shared helper.
    fn max_dev_from_identity(set: &PatchSet) -> f64 {
        let d = set.dim();
        let n = set.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| set.rows().map(|r| r[j]).sum::<f64>() / n).collect();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let c = set.rows().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / n;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((c - target).abs());
            }
        }
        worst
    }

    fn gaussian_set(n: usize, seed: u64) -> PatchSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 36).map(|_| StandardNormal.sample(&mut rng)).collect();
        PatchSet::from_flat(36, data)
    }

    #[test]
    fn standard_normal_whitens_to_identity() {
        let set = gaussian_set(5000, 1);
        let w = fit_whitening(&set, DEFAULT_ZCA_EPS).unwrap();
        assert!(max_dev_from_identity(&w.apply_all(&set)) < 1e-2);
    }

    #[test]
    fn correlated_full_rank_set_whitens_within_1e3() {
        // mix gaussians so pixels are strongly correlated but all eigenvalues exceed the floor
        let base = gaussian_set(4000, 2);
        let mixed = PatchSet::from_rows(
            36,
            base.rows().map(|r| {
                (0..36).map(|i| r[i] + 0.8 * r[(i + 1) % 36] + 0.3 * r[(i + 7) % 36]).collect::<Vec<_>>()
            }),
        );
        let w = fit_whitening(&mixed, DEFAULT_ZCA_EPS).unwrap();
        assert!(max_dev_from_identity(&w.apply_all(&mixed)) < 1e-3);
    }

    #[test]
    fn too_few_patches() {
        let set = gaussian_set(36, 3);
        assert!(matches!(fit_whitening(&set, 0.01), Err(FeatureError::InsufficientData(_))));
        let set = gaussian_set(37, 3);
        assert!(fit_whitening(&set, 0.01).is_ok());
        assert!(matches!(fit_whitening(&set, 0.0), Err(FeatureError::InvalidParameter(_))));
    }

    #[test]
    fn duplication_leaves_transform_unchanged() {
        let set = gaussian_set(200, 4);
        let mut doubled = set.clone();
        doubled.extend(&set);
        let a = fit_whitening(&set, 0.01).unwrap();
        let b = fit_whitening(&doubled, 0.01).unwrap();
        for (x, y) in a.matrix.iter().zip(&b.matrix) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
