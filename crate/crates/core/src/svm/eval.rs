use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gram::DotMatrix;
use super::model::{train_with_dots, Dataset};
use super::{Result, SvmError, SvmParams};
use crate::par;

/// Square count matrix; entry `(i, j)` counts items of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix { classes, counts: vec![vec![0; k]; k] }
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        assert_eq!(counts.len(), classes.len());
        assert!(counts.iter().all(|r| r.len() == classes.len()), "confusion matrix must be square");
        ConfusionMatrix { classes, counts }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// `M(i,i) / Σ_j M(j,i)`; `None` when class `i` was never predicted.
    pub fn precision(&self, i: usize) -> Option<f64> {
        let col = self.column_sum(i);
        (col > 0).then(|| self.counts[i][i] as f64 / col as f64)
    }

    /// `M(i,i) / Σ_j M(i,j)`; `None` when class `i` never occurs.
    pub fn recall(&self, i: usize) -> Option<f64> {
        let row = self.row_sum(i);
        (row > 0).then(|| self.counts[i][i] as f64 / row as f64)
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.n_classes()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total().max(1) as f64
    }

    /// Distribution of true classes among items predicted as `j`.
    pub fn column_distribution(&self, j: usize) -> Option<Vec<f64>> {
        let col = self.column_sum(j);
        (col > 0).then(|| self.counts.iter().map(|r| r[j] as f64 / col as f64).collect())
    }

    pub fn identity(classes: Vec<String>, per_class: u64) -> Self {
        let k = classes.len();
        let counts = (0..k).map(|i| (0..k).map(|j| if i == j { per_class } else { 0 }).collect()).collect();
        ConfusionMatrix { classes, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub support: u64,
}

/// How an evaluation was produced. The two protocols are reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Protocol {
    CrossValidation { folds: usize, seed: u64 },
    Holdout { test_fraction: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub protocol: Protocol,
    pub params: SvmParams,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    fn from_confusion(protocol: Protocol, params: SvmParams, confusion: ConfusionMatrix) -> Self {
        let per_class = (0..confusion.n_classes())
            .map(|i| ClassMetrics {
                class: confusion.classes[i].clone(),
                precision: confusion.precision(i),
                recall: confusion.recall(i),
                support: confusion.row_sum(i),
            })
            .collect();
        EvalReport { protocol, params, accuracy: confusion.accuracy(), per_class, confusion }
    }
}

/// Stratified fold assignment: each class is shuffled under `seed` and dealt
/// round-robin. A class with fewer than `folds` samples puts each sample in
/// its own fold (leave-one-out for that class).
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut offset = 0;
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if !idx.is_empty() && idx.len() < folds {
            log::warn!(
                "class {class} has {} samples for {folds} folds; using leave-one-out for it",
                idx.len()
            );
        }
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            assignment[i] = (offset + r) % folds;
        }
        // rotate the starting fold so small classes do not all pile into fold 0
        offset += labels.iter().filter(|&&l| l == class).count();
    }
    assignment
}

fn check_folds(data: &Dataset, folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(SvmError::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    if folds > data.len() {
        return Err(SvmError::InvalidParameter(format!("{folds} folds for {} samples", data.len())));
    }
    data.validate()
}

struct FoldSplit {
    train: Vec<usize>,
    test: Vec<usize>,
}

fn splits(assignment: &[usize], folds: usize) -> Vec<FoldSplit> {
    (0..folds)
        .map(|f| FoldSplit {
            train: (0..assignment.len()).filter(|&i| assignment[i] != f).collect(),
            test: (0..assignment.len()).filter(|&i| assignment[i] == f).collect(),
        })
        .filter(|s| !s.test.is_empty())
        .collect()
}

/// Trains on `split.train` for every parameter cell and predicts `split.test`.
fn fold_predictions(data: &Dataset, dots: &DotMatrix, split: &FoldSplit, grid: &[SvmParams]) -> Result<Vec<Vec<usize>>> {
    let train_set = data.subset(&split.train);
    let train_dots = dots.subset(&split.train);
    par::map(grid, |params| {
        let model = train_with_dots(&train_set, &train_dots, params)?;
        split
            .test
            .iter()
            .map(|&i| model.predict(&data.features[i]).map(|p| p.class))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect()
}

pub fn cross_validate(data: &Dataset, params: &SvmParams, folds: usize, seed: u64) -> Result<EvalReport> {
    params.validate()?;
    check_folds(data, folds)?;
    let dots = DotMatrix::new(&data.features);
    let assignment = stratified_folds(&data.labels, data.classes.len(), folds, seed);
    let mut confusion = ConfusionMatrix::new(data.classes.clone());
    for split in splits(&assignment, folds) {
        let preds = fold_predictions(data, &dots, &split, std::slice::from_ref(params))?;
        for (&i, &p) in split.test.iter().zip(&preds[0]) {
            confusion.record(data.labels[i], p);
        }
    }
    Ok(EvalReport::from_confusion(Protocol::CrossValidation { folds, seed }, *params, confusion))
}

/// Stratified single split: train on `1 − test_fraction` of each class, evaluate on the rest.
pub fn holdout_evaluate(data: &Dataset, params: &SvmParams, test_fraction: f64, seed: u64) -> Result<EvalReport> {
    params.validate()?;
    data.validate()?;
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(SvmError::InvalidParameter(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for class in 0..data.classes.len() {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        let n_test = n_test.min(idx.len().saturating_sub(1));
        test_idx.extend_from_slice(&idx[..n_test]);
        train_idx.extend_from_slice(&idx[n_test..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let dots = DotMatrix::new(&data.features);
    let split = FoldSplit { train: train_idx, test: test_idx };
    let preds = fold_predictions(data, &dots, &split, std::slice::from_ref(params))?;
    let mut confusion = ConfusionMatrix::new(data.classes.clone());
    for (&i, &p) in split.test.iter().zip(&preds[0]) {
        confusion.record(data.labels[i], p);
    }
    Ok(EvalReport::from_confusion(Protocol::Holdout { test_fraction, seed }, *params, confusion))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub params: SvmParams,
    /// Mean of per-fold accuracies.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: SvmParams,
    pub best_index: usize,
    pub cells: Vec<GridCell>,
}

/// Exhaustive search; the winner is the first cell (grid order) with the highest mean CV accuracy.
pub fn grid_search(data: &Dataset, grid: &[SvmParams], folds: usize, seed: u64) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(SvmError::InvalidParameter("empty parameter grid".into()));
    }
    grid.iter().try_for_each(SvmParams::validate)?;
    check_folds(data, folds)?;
    let dots = DotMatrix::new(&data.features);
    let assignment = stratified_folds(&data.labels, data.classes.len(), folds, seed);
    let fold_splits = splits(&assignment, folds);
    let mut acc_sum = vec![0.0; grid.len()];
    for split in &fold_splits {
        let preds = fold_predictions(data, &dots, split, grid)?;
        for (cell, p) in preds.iter().enumerate() {
            let hits = split.test.iter().zip(p).filter(|(&i, &c)| data.labels[i] == c).count();
            acc_sum[cell] += hits as f64 / split.test.len() as f64;
        }
    }
    let cells: Vec<GridCell> = grid
        .iter()
        .zip(&acc_sum)
        .map(|(p, s)| GridCell { params: *p, accuracy: s / fold_splits.len() as f64 })
        .collect();
    let mut best_index = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.accuracy > cells[best_index].accuracy {
            best_index = i;
        }
    }
    Ok(GridResult { best: grid[best_index], best_index, cells })
}
