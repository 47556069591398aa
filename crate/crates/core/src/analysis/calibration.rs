use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bins::{impact_bins, BinScheme};
use super::stats::{self, Correlation};
use super::{metric_from_counts, AnalysisError, PaperObservation, Result, Target};
use crate::labels::FigureLabel;
use crate::par;
use crate::svm::ConfusionMatrix;

pub const DEFAULT_TRIALS: usize = 2000;

/// Papers and their machine-labeled figures, flattened for resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInput {
    pub scores: Vec<f64>,
    pub pages: Vec<u32>,
    /// `(paper index, predicted class)` with classes in [`FigureLabel::SINGLETON`] order.
    pub figures: Vec<(usize, usize)>,
}

impl CalibrationInput {
    pub fn from_observations(papers: &[PaperObservation]) -> Self {
        let mut figures = Vec::new();
        for (p, obs) in papers.iter().enumerate() {
            for (c, &n) in obs.counts.iter().enumerate() {
                figures.extend(std::iter::repeat((p, c)).take(n as usize));
            }
        }
        CalibrationInput {
            scores: papers.iter().map(|p| p.score).collect(),
            pages: papers.iter().map(|p| p.page_count).collect(),
            figures,
        }
    }

    fn counts(&self, labels: impl Iterator<Item = usize>) -> Vec<[u32; 5]> {
        let mut counts = vec![[0u32; 5]; self.scores.len()];
        for ((p, _), c) in self.figures.iter().zip(labels) {
            counts[*p][c] += 1;
        }
        counts
    }

    /// Unbinned correlation of per-paper `target` against score.
    pub fn correlation(&self, counts: &[[u32; 5]], label: FigureLabel, target: Target) -> Correlation {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, c) in counts.iter().enumerate() {
            if let Some(m) = metric_from_counts(c, self.pages[i], label, target) {
                x.push(m);
                y.push(self.scores[i]);
            }
        }
        Correlation::compute(&x, &y)
    }

    pub fn raw_correlation(&self, label: FigureLabel, target: Target) -> Correlation {
        self.correlation(&self.counts(self.figures.iter().map(|f| f.1)), label, target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub label: FigureLabel,
    pub target: Target,
    pub trials: usize,
    /// Coefficient of the unperturbed labels.
    pub raw: Option<f64>,
    /// One per trial; `None` where a variable came out constant.
    pub coefficients: Vec<Option<f64>>,
    /// Over the defined coefficients.
    pub mean: Option<f64>,
    pub stderr: f64,
    /// Share of trials without a significant correlation.
    pub fail_rate: f64,
}

enum Resampler {
    Fixed(usize),
    Weighted(WeightedIndex<u64>),
}

fn resamplers(cm: &ConfusionMatrix) -> Result<Vec<Resampler>> {
    if cm.n_classes() != FigureLabel::SINGLETON.len() {
        return Err(AnalysisError::InvalidConfusionMatrix(format!("{} classes, expected 5", cm.n_classes())));
    }
    (0..cm.n_classes())
        .map(|j| {
            let col: Vec<u64> = cm.counts.iter().map(|r| r[j]).collect();
            let nonzero: Vec<usize> = (0..col.len()).filter(|&i| col[i] > 0).collect();
            match nonzero.as_slice() {
                [] => Err(AnalysisError::InvalidConfusionMatrix(format!("column `{}` is empty", cm.classes[j]))),
                [only] => Ok(Resampler::Fixed(*only)),
                _ => Ok(Resampler::Weighted(WeightedIndex::new(&col).expect("positive column"))),
            }
        })
        .collect()
}

/// Repeatedly replaces every machine label by a true class drawn from the
/// confusion-matrix column of its predicted class and recomputes the
/// unbinned correlation. Trial `t` draws from its own stream of `seed`.
pub fn calibration_experiment(
    input: &CalibrationInput,
    cm: &ConfusionMatrix,
    label: FigureLabel,
    target: Target,
    trials: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    if trials == 0 {
        return Err(AnalysisError::InvalidParameter("trials must be ≥ 1".into()));
    }
    if input.scores.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let samplers = resamplers(cm)?;
    let coefficients: Vec<(Option<f64>, bool)> = par::map_range(trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let labels = input.figures.iter().map(|&(_, c)| match &samplers[c] {
            Resampler::Fixed(k) => *k,
            Resampler::Weighted(w) => w.sample(&mut rng),
        });
        let c = input.correlation(&input.counts(labels), label, target);
        (c.pearson, c.significant)
    });
    let defined: Vec<f64> = coefficients.iter().filter_map(|c| c.0).collect();
    let failures = coefficients.iter().filter(|c| !c.1).count();
    Ok(CalibrationResult {
        label,
        target,
        trials,
        raw: input.raw_correlation(label, target).pearson,
        mean: (!defined.is_empty()).then(|| stats::mean(&defined)),
        stderr: stats::stderr(&defined),
        fail_rate: failures as f64 / trials as f64,
        coefficients: coefficients.into_iter().map(|c| c.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub truth: FigureLabel,
    pub predicted: FigureLabel,
    /// Score of the source paper.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBin {
    pub size: usize,
    pub mean_score: f64,
    /// Share of the bin's figures whose machine label is correct.
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAudit {
    pub bin_width: usize,
    /// Set when `percentile` gave bins below the minimum size.
    pub widened: bool,
    pub bins: Vec<AuditBin>,
    /// Precision against mean score across bins.
    pub correlation: Correlation,
}

/// Bins figures by source-paper score and tests whether per-bin precision
/// tracks impact. Bins hold `percentile` of the samples but never fewer than
/// `min_per_bin`; undersized bins left by tie shifting join their neighbor.
pub fn bias_audit(samples: &[AuditSample], percentile: f64, min_per_bin: usize) -> Result<BiasAudit> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(AnalysisError::InvalidParameter(format!("percentile {percentile}")));
    }
    let target = (percentile * samples.len() as f64).ceil() as usize;
    let bin_width = target.max(min_per_bin).max(1);
    let widened = bin_width > target;
    if widened {
        log::warn!("bins of {target} figure(s) widened to {bin_width}");
    }
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let mut bins: Vec<Vec<usize>> = Vec::new();
    for b in impact_bins(&scores, &BinScheme::FixedCount { size: bin_width })?.bins {
        match bins.last_mut() {
            Some(last) if b.len() < min_per_bin || last.len() < min_per_bin => last.extend(b),
            _ => bins.push(b),
        }
    }
    if bins.len() < 3 {
        return Err(AnalysisError::InsufficientBins { bins: bins.len() });
    }
    let summaries: Vec<AuditBin> = bins
        .iter()
        .map(|b| AuditBin {
            size: b.len(),
            mean_score: stats::mean(&b.iter().map(|&i| samples[i].score).collect::<Vec<_>>()),
            precision: b.iter().filter(|&&i| samples[i].truth == samples[i].predicted).count() as f64 / b.len() as f64,
        })
        .collect();
    let x: Vec<f64> = summaries.iter().map(|b| b.precision).collect();
    let y: Vec<f64> = summaries.iter().map(|b| b.mean_score).collect();
    let correlation = Correlation::compute(&x, &y);
    Ok(BiasAudit { bin_width, widened, bins: summaries, correlation })
}
