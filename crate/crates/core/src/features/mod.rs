//! Bag-of-visual-features encoding.
//!
//! A figure is normalized to a 128×128 grayscale canvas, every 6×6 window is
//! contrast-normalized and ZCA-whitened, matched to the nearest of 200 learned
//! codebook patches, and counted into one histogram per image quadrant. The
//! four histograms concatenate into an 800-element vector.

mod codebook;
mod kmeans;
mod normalize;
mod patch;
mod whitening;

pub use codebook::{build_codebook, encode, encode_batch, Codebook, CodebookMeta, FeatureVector};
pub use kmeans::{kmeans, KMeansConfig, KMeansFit};
pub use normalize::{normalize_image, normalize_luma, PAD_LUMA};
pub use patch::{contrast_normalize, extract_window, sample_patches, PatchSet, CONTRAST_EPS};
pub use whitening::{fit_whitening, WhiteningTransform, DEFAULT_ZCA_EPS};

/// Side length of the normalized canvas.
pub const IMAGE_SIZE: u32 = 128;
/// Side length of a patch window.
pub const WINDOW: usize = 6;
/// Patch dimension (`WINDOW²`).
pub const PATCH_DIM: usize = WINDOW * WINDOW;
/// Number of codebook entries.
pub const CODEBOOK_SIZE: usize = 200;
/// Length of an encoded feature vector.
pub const FEATURE_LEN: usize = 4 * CODEBOOK_SIZE;
/// Sliding windows per normalized image: (128 − 6 + 1)².
pub const WINDOWS_PER_IMAGE: u32 = (IMAGE_SIZE - WINDOW as u32 + 1) * (IMAGE_SIZE - WINDOW as u32 + 1);

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("malformed codebook file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;
