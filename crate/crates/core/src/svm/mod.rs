//! Soft-margin kernel SVM: SMO dual solver, one-vs-rest multi-class models
//! with softmax probabilities, stratified k-fold evaluation and grid search.

mod eval;
mod gram;
mod model;
mod smo;

pub use eval::{
    cross_validate, grid_search, holdout_evaluate, stratified_folds, ClassMetrics, ConfusionMatrix,
    EvalReport, GridCell, GridResult, Protocol,
};
pub use gram::Gram;
pub use model::{train, Dataset, Prediction, SvmModel};
pub use smo::{solve, SmoConfig, SmoSolution};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SvmError {
    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),
    #[error("invalid feature: {0}")]
    InvalidFeature(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SvmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub gamma: f64,
    pub penalty_c: f64,
}

impl SvmParams {
    pub fn rbf(gamma: f64, penalty_c: f64) -> Self {
        SvmParams { kernel: Kernel::Rbf, gamma, penalty_c }
    }

    pub fn linear(penalty_c: f64) -> Self {
        SvmParams { kernel: Kernel::Linear, gamma: 1.0, penalty_c }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(SvmError::InvalidParameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.penalty_c > 0.0) || !self.penalty_c.is_finite() {
            return Err(SvmError::InvalidParameter(format!("C must be > 0, got {}", self.penalty_c)));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kernel {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf => {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d).exp()
            }
        }
    }
}

impl Default for SvmParams {
    /// RBF with γ = 0.001 and C = 1000, the tuned setting for both production classifiers.
    fn default() -> Self {
        SvmParams::rbf(0.001, 1000.0)
    }
}
