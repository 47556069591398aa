use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};

/// Scores closer than this are the same impact.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum BinScheme {
    /// Cuts at the given top fractions, e.g. `[0.05, 0.25, 0.5]`.
    FixedBoundaries { top_fractions: Vec<f64> },
    /// One bin per `fraction` of the ranked papers.
    Percentile { fraction: f64 },
    /// Bins of `size` papers each.
    FixedCount { size: usize },
}

impl BinScheme {
    /// Cuts at the 95th, 75th and 50th percentiles.
    pub fn fixed_boundaries() -> Self {
        BinScheme::FixedBoundaries { top_fractions: vec![0.05, 0.25, 0.5] }
    }

    pub fn half_percentile() -> Self {
        BinScheme::Percentile { fraction: 0.005 }
    }

    fn target_cuts(&self, n: usize) -> Result<Vec<usize>> {
        let cuts = match self {
            BinScheme::FixedBoundaries { top_fractions } => {
                if top_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return Err(AnalysisError::InvalidParameter("boundaries must lie in [0, 1]".into()));
                }
                top_fractions.iter().map(|f| (f * n as f64).round() as usize).collect()
            }
            BinScheme::Percentile { fraction } => {
                if !(*fraction > 0.0 && *fraction <= 1.0) {
                    return Err(AnalysisError::InvalidParameter(format!("bin fraction {fraction}")));
                }
                let bins = (1.0 / fraction).round() as usize;
                (1..bins).map(|k| (k as f64 * fraction * n as f64).round() as usize).collect()
            }
            BinScheme::FixedCount { size } => {
                if *size == 0 {
                    return Err(AnalysisError::InvalidParameter("bin size 0".into()));
                }
                (1..).map(|k| k * size).take_while(|&c| c < n).collect()
            }
        };
        Ok(cuts)
    }
}

/// Papers grouped by impact, highest scores first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactBins {
    /// Indices into the scored input.
    pub bins: Vec<Vec<usize>>,
    /// Fraction of papers above each cut actually used, after tie shifting.
    pub boundaries: Vec<f64>,
}

impl ImpactBins {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bins.iter().map(Vec::len).collect()
    }
}

/// Ranks `scores` descending (ties by index) and cuts them into bins.
///
/// A target cut that falls inside a run of tied scores moves up to the start
/// of that run, so tied papers always land together in the lower bin. Empty
/// bins are dropped.
pub fn impact_bins(scores: &[f64], scheme: &BinScheme) -> Result<ImpactBins> {
    if scores.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    // run_start[i]: first rank of the tie run containing rank i
    let mut run_start = vec![0; n];
    for i in 1..n {
        let tied = (scores[order[i - 1]] - scores[order[i]]).abs() < TIE_EPS;
        run_start[i] = if tied { run_start[i - 1] } else { i };
    }
    let mut cuts: Vec<usize> = scheme
        .target_cuts(n)?
        .into_iter()
        .filter(|&c| c > 0 && c < n)
        .map(|c| run_start[c])
        .filter(|&c| c > 0)
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bins = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for &c in cuts.iter().chain(std::iter::once(&n)) {
        if c > start {
            bins.push(order[start..c].to_vec());
            start = c;
        }
    }
    Ok(ImpactBins { bins, boundaries: cuts.iter().map(|&c| c as f64 / n as f64).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input() {
        assert!(matches!(impact_bins(&[], &BinScheme::half_percentile()), Err(AnalysisError::EmptyInput)));
    }

    #[test]
    fn all_ties_collapse_to_one_bin() {
        for scheme in [BinScheme::fixed_boundaries(), BinScheme::half_percentile(), BinScheme::FixedCount { size: 10 }] {
            let b = impact_bins(&[0.0; 100], &scheme).unwrap();
            assert_eq!(b.sizes(), vec![100]);
        }
    }

    #[test]
    fn fixed_count_descending() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = impact_bins(&scores, &BinScheme::FixedCount { size: 25 }).unwrap();
        assert_eq!(b.sizes(), vec![25; 4]);
        assert_eq!(b.bins[0][0], 99);
        assert_eq!(b.bins[3][24], 0);
        assert_eq!(b.boundaries, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn boundaries_shift_past_ties() {
        // 10 top scores, 12 mid, 23 low, 55 zeros
        let mut s = vec![];
        s.extend((0..10).map(|i| 10.0 + i as f64));
        s.extend(std::iter::repeat(5.0).take(12));
        s.extend((0..23).map(|i| 1.0 + i as f64 * 0.01));
        s.extend(std::iter::repeat(0.0).take(55));
        let b = impact_bins(&s, &BinScheme::fixed_boundaries()).unwrap();
        // 5% cut lands inside the 10 distinct top scores; 25% inside the
        // low run (distinct); 50% inside the zeros and moves to 45%
        assert_eq!(b.boundaries, vec![0.05, 0.25, 0.45]);
        assert_eq!(b.bins[3].len(), 55);
        assert!(b.bins[3].iter().all(|&i| s[i] == 0.0));
    }

    #[test]
    fn tie_within_eps_stays_together() {
        let s = [3.0, 2.0, 1.0 + 5e-13, 1.0, 0.0, -1.0];
        let b = impact_bins(&s, &BinScheme::FixedCount { size: 3 }).unwrap();
        assert_eq!(b.sizes(), vec![2, 4]);
    }

    #[test]
    fn power_law_bottom_bin_is_the_zero_mass() {
        use rand::{Rng, SeedableRng};
        use rand_distr::{Distribution, Pareto};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pareto = Pareto::new(1e-4, 1.2).unwrap();
        let s: Vec<f64> = (0..4000).map(|_| if rng.gen_bool(0.55) { 0.0 } else { pareto.sample(&mut rng) }).collect();
        let zeros: Vec<usize> = (0..s.len()).filter(|&i| s[i] == 0.0).collect();
        let b = impact_bins(&s, &BinScheme::half_percentile()).unwrap();
        let mut bottom = b.bins.last().unwrap().clone();
        bottom.sort_unstable();
        assert_eq!(bottom, zeros);
        assert!(b.len() > 80);
    }

    fn zero_heavy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(prop_oneof![3 => Just(0.0), 2 => 0.0f64..1.0, 1 => (0u8..4).prop_map(f64::from)], 1..400)
    }

    proptest! {
        #[test]
        fn bins_partition_and_never_split_ties(s in zero_heavy(), size in 1usize..50, frac in 0.005f64..0.5) {
            for scheme in [BinScheme::FixedCount { size }, BinScheme::Percentile { fraction: frac }, BinScheme::fixed_boundaries()] {
                let b = impact_bins(&s, &scheme).unwrap();
                let mut all: Vec<usize> = b.bins.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..s.len()).collect::<Vec<_>>());
                prop_assert!(b.bins.iter().all(|bin| !bin.is_empty()));
                let mut bin_of = vec![0; s.len()];
                for (k, bin) in b.bins.iter().enumerate() {
                    for &i in bin {
                        bin_of[i] = k;
                    }
                }
                for i in 0..s.len() {
                    for j in 0..s.len() {
                        if (s[i] - s[j]).abs() < TIE_EPS {
                            prop_assert_eq!(bin_of[i], bin_of[j]);
                        } else if s[i] > s[j] {
                            prop_assert!(bin_of[i] <= bin_of[j]);
                        }
                    }
                }
            }
        }
    }
}
