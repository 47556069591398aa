use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bins::{impact_bins, BinScheme};
use super::calibration::{calibration_experiment, CalibrationInput, CalibrationResult, DEFAULT_TRIALS};
use super::{binned_correlation, observations, stats, AnalysisError, BinnedCorrelation, PaperObservation, Result, Target};
use crate::corpus::Manifest;
use crate::labels::FigureLabel;
use crate::svm::ConfusionMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub exclude_journals: Vec<String>,
    pub scheme: BinScheme,
    pub trials: usize,
    pub seed: u64,
    /// Enables the calibration experiment.
    pub confusion: Option<ConfusionMatrix>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            exclude_journals: Vec::new(),
            scheme: BinScheme::half_percentile(),
            trials: DEFAULT_TRIALS,
            seed: 0,
            confusion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsRow {
    pub label: FigureLabel,
    pub before: usize,
    pub after: usize,
}

/// Figure counts per label before dismantling (original images) and after
/// (multi-chart parents replaced by their sub-figures).
pub fn counts_table(manifest: &Manifest) -> Vec<CountsRow> {
    let mut before: BTreeMap<FigureLabel, usize> = BTreeMap::new();
    let mut after: BTreeMap<FigureLabel, usize> = BTreeMap::new();
    let has_children: std::collections::HashSet<&str> =
        manifest.figures.iter().filter_map(|f| f.parent_figure_id.as_deref()).collect();
    for f in &manifest.figures {
        if f.parent_figure_id.is_none() {
            *before.entry(f.label).or_default() += 1;
        }
        if !has_children.contains(f.figure_id.as_str()) {
            *after.entry(f.label).or_default() += 1;
        }
    }
    before
        .keys()
        .chain(after.keys())
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|label| CountsRow { label, before: before.get(&label).copied().unwrap_or(0), after: after.get(&label).copied().unwrap_or(0) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityAggregate {
    /// `journal`, `topic` or `year`.
    pub group_by: String,
    pub group: String,
    pub papers: usize,
    pub mean_density: BTreeMap<FigureLabel, f64>,
    pub mean_score: f64,
}

fn aggregate(papers: &[PaperObservation], group_by: &str, key: impl Fn(&PaperObservation) -> Option<String>) -> Vec<DensityAggregate> {
    let mut groups: BTreeMap<String, Vec<&PaperObservation>> = BTreeMap::new();
    for p in papers {
        if let Some(k) = key(p) {
            groups.entry(k).or_default().push(p);
        }
    }
    groups
        .into_iter()
        .map(|(group, ps)| DensityAggregate {
            group_by: group_by.to_string(),
            papers: ps.len(),
            mean_density: FigureLabel::DENSITY_TYPES
                .iter()
                .map(|&l| (l, stats::mean(&ps.iter().filter_map(|p| p.metric(l, Target::Density)).collect::<Vec<_>>())))
                .collect(),
            mean_score: stats::mean(&ps.iter().map(|p| p.score).collect::<Vec<_>>()),
            group,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactBinRow {
    pub bin: usize,
    pub size: usize,
    /// Fraction of papers ranked above this bin.
    pub top_fraction: f64,
    pub mean_score: f64,
    pub mean_density: BTreeMap<FigureLabel, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub papers: usize,
    pub counts: Vec<CountsRow>,
    pub densities: Vec<DensityAggregate>,
    /// Top 5% / 25% / 50% boundaries.
    pub impact_bins: Vec<ImpactBinRow>,
    /// Every density type and target, with and without exclusions.
    pub correlations: Vec<BinnedCorrelation>,
    pub calibration: Vec<CalibrationResult>,
}

impl AnalysisReport {
    pub fn build(manifest: &Manifest, scores: &HashMap<String, f64>, opts: &AnalysisOptions) -> Result<Self> {
        let papers = observations(manifest, scores);
        if papers.is_empty() {
            return Err(AnalysisError::EmptyInput);
        }
        let mut densities = aggregate(&papers, "journal", |p| Some(p.journal.clone()));
        densities.extend(aggregate(&papers, "topic", |p| p.topic.clone()));
        densities.extend(aggregate(&papers, "year", |p| Some(p.year.to_string())));

        let raw: Vec<f64> = papers.iter().map(|p| p.score).collect();
        let bins = impact_bins(&raw, &BinScheme::fixed_boundaries())?;
        let mut above = 0;
        let impact_bins = bins
            .bins
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let row = ImpactBinRow {
                    bin: k,
                    size: b.len(),
                    top_fraction: above as f64 / papers.len() as f64,
                    mean_score: stats::mean(&b.iter().map(|&i| papers[i].score).collect::<Vec<_>>()),
                    mean_density: FigureLabel::DENSITY_TYPES
                        .iter()
                        .map(|&l| (l, stats::mean(&b.iter().filter_map(|&i| papers[i].metric(l, Target::Density)).collect::<Vec<_>>())))
                        .collect(),
                };
                above += b.len();
                row
            })
            .collect();

        let mut exclusions = vec![Vec::new()];
        if !opts.exclude_journals.is_empty() {
            exclusions.push(opts.exclude_journals.clone());
        }
        let mut correlations = Vec::new();
        for &label in &FigureLabel::DENSITY_TYPES {
            for target in Target::ALL {
                for ex in &exclusions {
                    match binned_correlation(&papers, label, target, &opts.scheme, ex) {
                        Ok(c) => correlations.push(c),
                        Err(e) => log::warn!("{label} {}: {e}", target.as_str()),
                    }
                }
            }
        }

        let mut calibration = Vec::new();
        if let Some(cm) = &opts.confusion {
            let kept: Vec<PaperObservation> = papers
                .iter()
                .filter(|p| !super::excluded(&p.journal, &opts.exclude_journals))
                .cloned()
                .collect();
            let input = CalibrationInput::from_observations(&kept);
            for &label in &FigureLabel::DENSITY_TYPES {
                calibration.push(calibration_experiment(&input, cm, label, Target::Proportion, opts.trials, opts.seed)?);
            }
        }

        Ok(AnalysisReport { papers: papers.len(), counts: counts_table(manifest), densities, impact_bins, correlations, calibration })
    }

    /// Writes `report.json` plus one CSV per table.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;

        let mut csv = String::from("label,before,after\n");
        for r in &self.counts {
            writeln!(csv, "{},{},{}", r.label, r.before, r.after).unwrap();
        }
        fs::write(dir.join("counts.csv"), csv)?;

        let types = FigureLabel::DENSITY_TYPES.map(|l| l.as_str()).join(",");
        let mut csv = format!("group_by,group,papers,mean_score,{types}\n");
        for d in &self.densities {
            writeln!(csv, "{},{},{},{},{}", d.group_by, quote(&d.group), d.papers, d.mean_score, join(d.mean_density.values())).unwrap();
        }
        fs::write(dir.join("densities.csv"), csv)?;

        let mut csv = format!("bin,size,top_fraction,mean_score,{types}\n");
        for b in &self.impact_bins {
            writeln!(csv, "{},{},{},{},{}", b.bin, b.size, b.top_fraction, b.mean_score, join(b.mean_density.values())).unwrap();
        }
        fs::write(dir.join("impact_bins.csv"), csv)?;

        let mut csv = String::from("label,target,excluded,papers,bins,coefficient,p_value,significant,spearman\n");
        for c in &self.correlations {
            let r = &c.correlation;
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                c.label,
                c.target.as_str(),
                quote(&c.excluded_journals.join(";")),
                c.papers,
                c.bins.len(),
                r.display(),
                r.p_value,
                r.significant,
                r.spearman.map_or(String::new(), |s| s.to_string()),
            )
            .unwrap();
        }
        fs::write(dir.join("correlations.csv"), csv)?;

        if !self.calibration.is_empty() {
            let mut csv = String::from("label,target,trials,raw,mean,stderr,fail_rate\n");
            for c in &self.calibration {
                let raw = c.raw.map_or(String::new(), |r| r.to_string());
                let mean = c.mean.map_or(String::new(), |m| m.to_string());
                writeln!(csv, "{},{},{},{raw},{mean},{},{}", c.label, c.target.as_str(), c.trials, c.stderr, c.fail_rate).unwrap();
            }
            fs::write(dir.join("calibration.csv"), csv)?;
        }
        Ok(())
    }
}

fn join<'a>(xs: impl Iterator<Item = &'a f64>) -> String {
    xs.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Confusion matrix as CSV, true classes down and predictions across. When
/// `singleton` is given each cell reads `all(singleton)`.
pub fn confusion_table(all: &ConfusionMatrix, singleton: Option<&ConfusionMatrix>) -> String {
    let mut out = format!("truth\\predicted,{},total\n", all.classes.join(","));
    let cell = |m: &ConfusionMatrix, i: usize, j: usize| m.counts[i][j];
    for i in 0..all.n_classes() {
        out.push_str(&all.classes[i]);
        for j in 0..all.n_classes() {
            match singleton {
                Some(s) => write!(out, ",{}({})", cell(all, i, j), cell(s, i, j)).unwrap(),
                None => write!(out, ",{}", cell(all, i, j)).unwrap(),
            }
        }
        match singleton {
            Some(s) => writeln!(out, ",{}({})", all.row_sum(i), s.row_sum(i)).unwrap(),
            None => writeln!(out, ",{}", all.row_sum(i)).unwrap(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FigureRecord, PaperRecord};
    use crate::geometry::Rect;

    fn fig(id: &str, paper: &str, label: FigureLabel, parent: Option<&str>) -> FigureRecord {
        FigureRecord {
            figure_id: id.into(),
            paper_id: paper.into(),
            image_key: format!("{id}.png"),
            caption: None,
            width: 100,
            height: 100,
            label,
            class_probs: vec![],
            gate_prob: None,
            parent_figure_id: parent.map(String::from),
            bbox_in_parent: parent.map(|_| Rect::new(0, 0, 10, 10)),
        }
    }

    fn manifest() -> Manifest {
        let mut m = Manifest::default();
        for i in 0..40usize {
            let pid = format!("p{i:02}");
            let mut p = PaperRecord::new(&pid, if i % 4 == 0 { "PLoS One" } else { "Nature" }, 2000 + (i % 3) as i32, 10);
            p.topic = (i % 2 == 0).then(|| "biology".to_string());
            p.alef_score = Some(i as f64);
            m.papers.push(p);
            for k in 0..(i / 4) {
                m.figures.push(fig(&format!("p{i:02}d{k}"), &pid, FigureLabel::Diagram, None));
            }
            m.figures.push(fig(&format!("p{i:02}m"), &pid, FigureLabel::Multichart, None));
            m.figures.push(fig(&format!("p{i:02}m0"), &pid, FigureLabel::Plot, Some(&format!("p{i:02}m"))));
            m.figures.push(fig(&format!("p{i:02}m1"), &pid, FigureLabel::Photo, Some(&format!("p{i:02}m"))));
        }
        m.sort();
        m
    }

    #[test]
    fn counts_before_and_after() {
        let rows = counts_table(&manifest());
        let get = |l| rows.iter().find(|r| r.label == l).unwrap();
        assert_eq!((get(FigureLabel::Multichart).before, get(FigureLabel::Multichart).after), (40, 0));
        assert_eq!((get(FigureLabel::Plot).before, get(FigureLabel::Plot).after), (0, 40));
        let d = get(FigureLabel::Diagram);
        assert_eq!(d.before, d.after);
    }

    #[test]
    fn builds_and_writes_report() {
        let m = manifest();
        let opts = AnalysisOptions {
            exclude_journals: vec!["PLoS One".into()],
            scheme: BinScheme::Percentile { fraction: 0.1 },
            trials: 20,
            seed: 1,
            confusion: Some(ConfusionMatrix::identity(FigureLabel::SINGLETON.iter().map(|l| l.to_string()).collect(), 5)),
        };
        let r = AnalysisReport::build(&m, &HashMap::new(), &opts).unwrap();
        assert_eq!(r.papers, 40);
        assert_eq!(r.impact_bins.iter().map(|b| b.size).sum::<usize>(), 40);
        let diag = r.correlations.iter().find(|c| c.label == FigureLabel::Diagram && c.target == Target::Density && c.excluded_journals.is_empty()).unwrap();
        assert!(diag.correlation.pearson.unwrap() > 0.9);
        assert!(r.densities.iter().any(|d| d.group_by == "topic" && d.group == "biology" && d.papers == 20));
        assert_eq!(r.calibration.len(), 4);
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        for f in ["report.json", "counts.csv", "densities.csv", "impact_bins.csv", "correlations.csv", "calibration.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back: AnalysisReport = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back.correlations.len(), r.correlations.len());
    }

    #[test]
    fn confusion_table_with_singletons() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let all = ConfusionMatrix::from_counts(classes.clone(), vec![vec![5, 1], vec![2, 7]]);
        let single = ConfusionMatrix::from_counts(classes, vec![vec![4, 0], vec![1, 6]]);
        assert_eq!(confusion_table(&all, Some(&single)), "truth\\predicted,a,b,total\na,5(4),1(0),6(4)\nb,2(1),7(6),9(7)\n");
    }
}
