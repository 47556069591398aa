//! Five-way figure-type classification: codebook histograms into an RBF SVM.

use crate::features::{
    build_codebook, encode, fit_whitening, normalize_luma, sample_patches, Codebook, FeatureError,
    FeatureVector, CODEBOOK_SIZE, DEFAULT_ZCA_EPS, WINDOW,
};
use crate::labels::FigureLabel;
use crate::raster::LumaImage;
use crate::svm::{self, Dataset, SvmError, SvmModel, SvmParams};

#[derive(Debug, thiserror::Error)]
pub enum FigTypeError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error("figure-type model: {0}")]
    Model(String),
}

pub type Result<T, E = FigTypeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodebookConfig {
    pub per_image: usize,
    pub k: usize,
    pub zca_eps: f64,
    pub seed: u64,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig { per_image: 100, k: CODEBOOK_SIZE, zca_eps: DEFAULT_ZCA_EPS, seed: 0 }
    }
}

/// Samples patches from already normalized images and learns whitening plus centroids.
pub fn train_codebook(normalized: &[LumaImage], cfg: &CodebookConfig) -> Result<Codebook> {
    let patches = sample_patches(normalized, WINDOW, cfg.per_image, cfg.seed);
    let whitening = fit_whitening(&patches, cfg.zca_eps)?;
    Ok(build_codebook(&patches, &whitening, cfg.k, cfg.seed)?)
}

/// SVM input for a count histogram: element-wise square root.
///
/// Square-rooted counts turn the RBF kernel into a Hellinger-style
/// similarity whose squared distances (up to 2 × 15,129) sit in a useful
/// range for γ = 0.001.
pub fn scale_counts(fv: &FeatureVector) -> Vec<f64> {
    fv.0.iter().map(|&c| (c as f64).sqrt()).collect()
}

/// Normalizes, encodes and scales one image.
pub fn featurize(img: &LumaImage, codebook: &Codebook) -> Result<Vec<f64>> {
    Ok(scale_counts(&encode(&normalize_luma(img)?, codebook)?))
}

pub fn featurize_batch(images: &[LumaImage], codebook: &Codebook) -> Result<Vec<Vec<f64>>> {
    crate::par::map(images, |img| featurize(img, codebook)).into_iter().collect()
}

/// Class list in singleton-label order, so probability vectors line up with
/// [`FigureLabel::SINGLETON`].
pub fn type_classes() -> Vec<String> {
    FigureLabel::SINGLETON.iter().map(|l| l.as_str().to_string()).collect()
}

pub fn type_dataset(features: Vec<Vec<f64>>, labels: &[FigureLabel]) -> Result<Dataset> {
    let idx = labels
        .iter()
        .map(|l| l.class_index().ok_or_else(|| FigTypeError::Model(format!("`{l}` is not a figure type"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::with_classes(features, idx, type_classes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypePrediction {
    pub label: FigureLabel,
    /// Probabilities in [`FigureLabel::SINGLETON`] order.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureTypeClassifier {
    pub codebook: Codebook,
    pub model: SvmModel,
}

impl FigureTypeClassifier {
    pub fn train(codebook: Codebook, features: Vec<Vec<f64>>, labels: &[FigureLabel], params: &SvmParams) -> Result<Self> {
        let data = type_dataset(features, labels)?;
        let mut model = svm::train(&data, params)?;
        model.metadata.insert("model".into(), "figure_type".into());
        model.metadata.insert("scaling".into(), "sqrt".into());
        Ok(FigureTypeClassifier { codebook, model })
    }

    pub fn new(codebook: Codebook, model: SvmModel) -> Result<Self> {
        if model.classes != type_classes() {
            return Err(FigTypeError::Model(format!("unexpected classes {:?}", model.classes)));
        }
        if model.dim != codebook.feature_len() {
            return Err(FigTypeError::Model(format!("model expects {} features, codebook gives {}", model.dim, codebook.feature_len())));
        }
        Ok(FigureTypeClassifier { codebook, model })
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<TypePrediction> {
        let p = self.model.predict(x)?;
        Ok(TypePrediction { label: FigureLabel::SINGLETON[p.class], probs: p.probs })
    }

    pub fn classify(&self, img: &LumaImage) -> Result<TypePrediction> {
        self.predict_features(&featurize(img, &self.codebook)?)
    }
}
