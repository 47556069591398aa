//! Viziometric analyses: figure densities, impact binning, binned
//! correlations, the dismantling-error metric, label-noise calibration and
//! classifier bias audits.

mod bins;
mod calibration;
mod report;
pub mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{FigureRecord, Manifest, PaperRecord};
use crate::labels::FigureLabel;

pub use bins::{impact_bins, BinScheme, ImpactBins, TIE_EPS};
pub use calibration::{
    bias_audit, calibration_experiment, AuditBin, AuditSample, BiasAudit, CalibrationInput, CalibrationResult,
    DEFAULT_TRIALS,
};
pub use report::{confusion_table, counts_table, AnalysisOptions, AnalysisReport, CountsRow, DensityAggregate};
pub use stats::Correlation;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no input")]
    EmptyInput,
    #[error("{bins} bin(s) after grouping, need at least 3")]
    InsufficientBins { bins: usize },
    #[error("invalid confusion matrix: {0}")]
    InvalidConfusionMatrix(String),
    #[error("error undefined: no correct sub-figures")]
    UndefinedError,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Figures per page.
    Density,
    /// Share of the paper's non-equation figures.
    Proportion,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Density, Target::Proportion];

    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Density => "density",
            Target::Proportion => "proportion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub paper_id: String,
    pub density: BTreeMap<FigureLabel, f64>,
    /// Empty when the paper has no counted figures.
    pub proportion: BTreeMap<FigureLabel, f64>,
    pub proportions_undefined: bool,
}

/// Per-type densities and proportions of one paper. Only figures of `paper`
/// with a singleton label count; equations are left out.
pub fn density_profile<'a>(paper: &PaperRecord, figures: impl IntoIterator<Item = &'a FigureRecord>) -> Result<DensityProfile> {
    if paper.page_count < 1 {
        return Err(AnalysisError::InvalidParameter(format!("{}: page_count 0", paper.paper_id)));
    }
    let mut counts: BTreeMap<FigureLabel, u32> = FigureLabel::DENSITY_TYPES.iter().map(|&l| (l, 0)).collect();
    for f in figures.into_iter().filter(|f| f.paper_id == paper.paper_id) {
        if let Some(c) = counts.get_mut(&f.label) {
            *c += 1;
        }
    }
    let total: u32 = counts.values().sum();
    let pages = paper.page_count as f64;
    Ok(DensityProfile {
        paper_id: paper.paper_id.clone(),
        density: counts.iter().map(|(&l, &c)| (l, c as f64 / pages)).collect(),
        proportion: if total == 0 {
            BTreeMap::new()
        } else {
            counts.iter().map(|(&l, &c)| (l, c as f64 / total as f64)).collect()
        },
        proportions_undefined: total == 0,
    })
}

/// One scored paper with its per-type figure counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperObservation {
    pub paper_id: String,
    pub journal: String,
    pub topic: Option<String>,
    pub year: i32,
    pub page_count: u32,
    pub score: f64,
    /// Figure counts in [`FigureLabel::SINGLETON`] order.
    pub counts: [u32; 5],
}

impl PaperObservation {
    pub fn count(&self, label: FigureLabel) -> u32 {
        label.class_index().map_or(0, |i| self.counts[i])
    }

    /// Figures that enter proportions (everything but equations).
    pub fn counted_total(&self) -> u32 {
        FigureLabel::DENSITY_TYPES.iter().map(|&l| self.count(l)).sum()
    }

    /// `None` for a proportion when the paper has no counted figures.
    pub fn metric(&self, label: FigureLabel, target: Target) -> Option<f64> {
        metric_from_counts(&self.counts, self.page_count, label, target)
    }
}

pub(crate) fn metric_from_counts(counts: &[u32; 5], pages: u32, label: FigureLabel, target: Target) -> Option<f64> {
    let c = label.class_index().map_or(0, |i| counts[i]) as f64;
    match target {
        Target::Density => Some(c / pages.max(1) as f64),
        Target::Proportion => {
            let total: u32 = FigureLabel::DENSITY_TYPES.iter().filter_map(|l| l.class_index()).map(|i| counts[i]).sum();
            (total > 0).then(|| c / total as f64)
        }
    }
}

/// Papers that have a score, with counts over their classified figures.
/// Multi-chart parents are represented by their dismantled children.
/// `scores` overrides the manifest's stored scores.
pub fn observations(manifest: &Manifest, scores: &HashMap<String, f64>) -> Vec<PaperObservation> {
    let mut counts: HashMap<&str, [u32; 5]> = HashMap::new();
    for f in &manifest.figures {
        if let Some(i) = f.label.class_index() {
            counts.entry(f.paper_id.as_str()).or_default()[i] += 1;
        }
    }
    manifest
        .papers
        .iter()
        .filter_map(|p| {
            let score = scores.get(&p.paper_id).copied().or(p.alef_score)?;
            Some(PaperObservation {
                paper_id: p.paper_id.clone(),
                journal: p.journal.clone(),
                topic: p.topic.clone(),
                year: p.year,
                page_count: p.page_count,
                score,
                counts: counts.get(p.paper_id.as_str()).copied().unwrap_or_default(),
            })
        })
        .collect()
}

fn excluded(journal: &str, exclude: &[String]) -> bool {
    exclude.iter().any(|e| e.trim().eq_ignore_ascii_case(journal.trim()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub size: usize,
    pub mean_score: f64,
    pub mean_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCorrelation {
    pub label: FigureLabel,
    pub target: Target,
    pub excluded_journals: Vec<String>,
    pub papers: usize,
    pub bins: Vec<BinSummary>,
    /// Per-bin mean metric against per-bin mean score.
    pub correlation: Correlation,
}

/// Bins papers by score and correlates per-bin mean `target` of `label`
/// with per-bin mean score. Excluded journals are removed before binning;
/// papers without a defined metric are skipped.
pub fn binned_correlation(
    papers: &[PaperObservation],
    label: FigureLabel,
    target: Target,
    scheme: &BinScheme,
    exclude_journals: &[String],
) -> Result<BinnedCorrelation> {
    let kept: Vec<(f64, f64)> = papers
        .iter()
        .filter(|p| !excluded(&p.journal, exclude_journals))
        .filter_map(|p| Some((p.score, p.metric(label, target)?)))
        .collect();
    if kept.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let scores: Vec<f64> = kept.iter().map(|k| k.0).collect();
    let bins = impact_bins(&scores, scheme)?;
    if bins.len() < 3 {
        return Err(AnalysisError::InsufficientBins { bins: bins.len() });
    }
    let summaries: Vec<BinSummary> = bins
        .bins
        .iter()
        .map(|b| BinSummary {
            size: b.len(),
            mean_score: stats::mean(&b.iter().map(|&i| kept[i].0).collect::<Vec<_>>()),
            mean_metric: stats::mean(&b.iter().map(|&i| kept[i].1).collect::<Vec<_>>()),
        })
        .collect();
    let x: Vec<f64> = summaries.iter().map(|s| s.mean_metric).collect();
    let y: Vec<f64> = summaries.iter().map(|s| s.mean_score).collect();
    Ok(BinnedCorrelation {
        label,
        target,
        excluded_journals: exclude_journals.to_vec(),
        papers: kept.len(),
        bins: summaries,
        correlation: Correlation::compute(&x, &y),
    })
}

/// `Σ |correct − extracted| / Σ correct` over the union of categories.
pub fn dismantling_error(correct: &BTreeMap<String, u64>, extracted: &BTreeMap<String, u64>) -> Result<f64> {
    let total: u64 = correct.values().sum();
    if total == 0 {
        return Err(AnalysisError::UndefinedError);
    }
    let l1: u64 = correct
        .keys()
        .chain(extracted.keys())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|k| {
            let a = correct.get(k).copied().unwrap_or(0);
            let b = extracted.get(k).copied().unwrap_or(0);
            a.abs_diff(b)
        })
        .sum();
    Ok(l1 as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig(id: &str, paper: &str, label: FigureLabel) -> FigureRecord {
        FigureRecord {
            figure_id: id.into(),
            paper_id: paper.into(),
            image_key: format!("{id}.png"),
            caption: None,
            width: 10,
            height: 10,
            label,
            class_probs: vec![],
            gate_prob: None,
            parent_figure_id: None,
            bbox_in_parent: None,
        }
    }

    fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn density_of_diagrams() {
        let paper = PaperRecord::new("p", "J", 2010, 8);
        let figs: Vec<_> = (0..4).map(|i| fig(&i.to_string(), "p", FigureLabel::Diagram)).collect();
        let d = density_profile(&paper, &figs).unwrap();
        assert_eq!(d.density[&FigureLabel::Diagram], 0.5);
        assert_eq!(d.proportion[&FigureLabel::Diagram], 1.0);
    }

    #[test]
    fn zero_figures_flag_proportions() {
        let d = density_profile(&PaperRecord::new("p", "J", 2010, 3), &[]).unwrap();
        assert!(d.proportions_undefined);
        assert!(d.density.values().all(|&v| v == 0.0));
        assert!(d.proportion.is_empty());
    }

    #[test]
    fn mixed_profile_recount() {
        let paper = PaperRecord::new("p", "J", 2010, 2);
        let figs = [
            fig("a", "p", FigureLabel::Plot),
            fig("b", "p", FigureLabel::Plot),
            fig("c", "p", FigureLabel::Photo),
            fig("d", "p", FigureLabel::Table),
            fig("e", "p", FigureLabel::Equation),
            fig("f", "p", FigureLabel::Multichart),
            fig("g", "other", FigureLabel::Plot),
        ];
        let d = density_profile(&paper, &figs).unwrap();
        let expect_density = [(FigureLabel::Diagram, 0.0), (FigureLabel::Photo, 0.5), (FigureLabel::Plot, 1.0), (FigureLabel::Table, 0.5)];
        assert_eq!(d.density, expect_density.into_iter().collect());
        let expect_prop = [(FigureLabel::Diagram, 0.0), (FigureLabel::Photo, 0.25), (FigureLabel::Plot, 0.5), (FigureLabel::Table, 0.25)];
        assert_eq!(d.proportion, expect_prop.into_iter().collect());
        // density × pages recovers integer counts
        for (l, v) in &d.density {
            assert_eq!(v * 2.0, (v * 2.0).round(), "{l}");
        }
    }

    #[test]
    fn dismantling_error_examples() {
        let c = counts(&[("plot", 2), ("photo", 1)]);
        assert_eq!(dismantling_error(&c, &c).unwrap(), 0.0);
        let e = counts(&[("plot", 1), ("photo", 1), ("fragment", 1)]);
        assert_eq!(dismantling_error(&c, &e).unwrap(), 2.0 / 3.0);
        assert_eq!(dismantling_error(&counts(&[("plot", 3)]), &BTreeMap::new()).unwrap(), 1.0);
        assert!(matches!(dismantling_error(&BTreeMap::new(), &c), Err(AnalysisError::UndefinedError)));
    }

    fn synthetic(n: usize, seed: u64, f: impl Fn(f64, &mut ChaCha8Rng) -> u32) -> Vec<PaperObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let score = rng.gen_range(0.0..10.0);
                let mut counts = [0; 5];
                counts[1] = f(score, &mut rng);
                counts[3] = rng.gen_range(0..5);
                PaperObservation {
                    paper_id: format!("p{i}"),
                    journal: if i % 5 == 0 { "PLoS One".into() } else { "J".into() },
                    topic: None,
                    year: 2010,
                    page_count: 10,
                    score,
                    counts,
                }
            })
            .collect()
    }

    #[test]
    fn metric_equal_to_score_correlates_perfectly() {
        let papers: Vec<PaperObservation> = (0..400)
            .map(|i| PaperObservation {
                paper_id: format!("p{i}"),
                journal: "J".into(),
                topic: None,
                year: 2000,
                page_count: 1,
                score: i as f64,
                counts: [0, i as u32, 0, 0, 0],
            })
            .collect();
        let r = binned_correlation(&papers, FigureLabel::Diagram, Target::Density, &BinScheme::half_percentile(), &[]).unwrap();
        assert_eq!(r.bins.len(), 200);
        assert!((r.correlation.pearson.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.correlation.significant);
    }

    #[test]
    fn independent_metric_is_mostly_nss() {
        let mut nss = 0;
        for seed in 0..50 {
            let papers = synthetic(600, seed, |_, rng| rng.gen_range(0..6));
            let r = binned_correlation(&papers, FigureLabel::Diagram, Target::Density, &BinScheme::Percentile { fraction: 0.05 }, &[]).unwrap();
            nss += (!r.correlation.significant) as usize;
        }
        assert!(nss >= 45, "{nss}/50");
    }

    #[test]
    fn exclusion_filter_applies_before_binning() {
        let papers = synthetic(300, 1, |s, _| (s as u32) / 2);
        let all = binned_correlation(&papers, FigureLabel::Diagram, Target::Density, &BinScheme::Percentile { fraction: 0.1 }, &[]).unwrap();
        let ex = binned_correlation(&papers, FigureLabel::Diagram, Target::Density, &BinScheme::Percentile { fraction: 0.1 }, &["plos one".into()]).unwrap();
        assert_eq!(all.papers, 300);
        assert_eq!(ex.papers, 240);
        assert!(ex.correlation.pearson.unwrap() > 0.9);
    }

    #[test]
    fn too_few_bins() {
        let papers = synthetic(10, 2, |_, _| 1);
        let r = binned_correlation(&papers, FigureLabel::Diagram, Target::Density, &BinScheme::FixedCount { size: 5 }, &[]);
        assert!(matches!(r, Err(AnalysisError::InsufficientBins { bins: 2 })));
    }

    #[test]
    fn sign_survives_affine_rescaling() {
        let papers = synthetic(500, 3, |s, rng| (s + rng.gen_range(0.0..4.0)) as u32);
        let base = binned_correlation(&papers, FigureLabel::Diagram, Target::Density, &BinScheme::Percentile { fraction: 0.02 }, &[]).unwrap();
        let scaled: Vec<_> = papers.iter().cloned().map(|mut p| { p.score = 3.0 * p.score + 7.0; p }).collect();
        let r = binned_correlation(&scaled, FigureLabel::Diagram, Target::Density, &BinScheme::Percentile { fraction: 0.02 }, &[]).unwrap();
        assert_eq!(base.correlation.pearson.unwrap().signum(), r.correlation.pearson.unwrap().signum());
        assert!((base.correlation.pearson.unwrap() - r.correlation.pearson.unwrap()).abs() < 1e-9);
    }
}
