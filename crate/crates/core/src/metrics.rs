//! Evaluation quantities: accuracy and RLF rate, zero-one scores, per-scope
//! aggregates and the empirical coherence-time CDF.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::handoff::{Mode, PredictionPair, ScopeKey};

/// Fraction of positions where both label vectors agree.
pub fn average_accuracy<T: PartialEq>(y_true: &[T], y_pred: &[T]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!("{} labels against {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty label vector".into()));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroOneVector {
    pub entries: Vec<u8>,
    pub epsilon: f64,
}

impl ZeroOneVector {
    pub fn wins(&self) -> usize {
        self.entries.iter().filter(|&&e| e == 1).count()
    }
}

/// `1` where the score beats the baseline by strictly more than `epsilon`.
pub fn zero_one(s_hat: &[f64], s_base: &[f64], epsilon: f64) -> Result<ZeroOneVector> {
    if s_hat.len() != s_base.len() {
        return Err(Error::InvalidInput(format!("{} scores against {} baseline scores", s_hat.len(), s_base.len())));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidInput("epsilon must be non-negative".into()));
    }
    let entries = s_hat.iter().zip(s_base).map(|(s, b)| u8::from(s - b > epsilon)).collect();
    Ok(ZeroOneVector { entries, epsilon })
}

/// Empirical CDF over sorted samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    sorted: Vec<f64>,
}

impl Cdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("CDF of no samples".into()));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("CDF samples contain NaN".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `P(X ≤ x)`.
    pub fn at(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// `P(X > x)`.
    pub fn fraction_above(&self, x: f64) -> f64 {
        1.0 - self.at(x)
    }

    /// One `(value, P(X ≤ value))` step per distinct sample value.
    pub fn table(&self) -> Vec<(f64, f64)> {
        let n = self.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => out.push((v, p)),
            }
        }
        out
    }
}

pub fn coherence_cdf(samples: &[f64]) -> Result<Cdf> {
    Cdf::new(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub mode: Mode,
    /// `None` for the pooled report of a whole episode.
    pub scope: Option<ScopeKey>,
    pub lookback: usize,
    pub accuracy: f64,
    pub samples: usize,
    pub rlf_rate: f64,
}

impl AccuracyReport {
    fn new(mode: Mode, scope: Option<ScopeKey>, lookback: usize, pairs: &[&PredictionPair]) -> Result<Self> {
        let truth: Vec<_> = pairs.iter().map(|p| p.truth).collect();
        let pred: Vec<_> = pairs.iter().map(|p| p.predicted).collect();
        let accuracy = average_accuracy(&truth, &pred)?;
        Ok(Self { mode, scope, lookback, accuracy, samples: pairs.len(), rlf_rate: 1.0 - accuracy })
    }
}

/// One report per scope that produced predictions, in scope order.
pub fn scope_reports(mode: Mode, lookback: usize, pairs: &[PredictionPair]) -> Result<Vec<AccuracyReport>> {
    let mut by_scope: BTreeMap<ScopeKey, Vec<&PredictionPair>> = BTreeMap::new();
    for p in pairs {
        by_scope.entry(p.scope).or_default().push(p);
    }
    by_scope.into_iter().map(|(k, ps)| AccuracyReport::new(mode, Some(k), lookback, &ps)).collect()
}

/// Accuracy over every pair of an episode.
pub fn pooled_report(mode: Mode, lookback: usize, pairs: &[PredictionPair]) -> Result<AccuracyReport> {
    AccuracyReport::new(mode, None, lookback, &pairs.iter().collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Minimum, mean and maximum scope accuracy per lookback.
pub fn aggregate_by_lookback(reports: &[AccuracyReport]) -> Result<BTreeMap<usize, Spread>> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.lookback).or_default().push(r.accuracy);
    }
    if groups.is_empty() {
        return Err(Error::InvalidInput("no reports to aggregate".into()));
    }
    Ok(groups
        .into_iter()
        .map(|(k, v)| {
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (k, Spread { min, mean, max })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::GlobalBeamId;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(average_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert!((average_accuracy(&[1, 2, 3], &[1, 2, 4]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(average_accuracy::<u8>(&[], &[]).is_err());
        assert!(average_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn zero_one_examples() {
        let z = zero_one(&[0.90, 0.50, 0.84], &[0.80, 0.49, 0.80], 0.03).unwrap();
        assert_eq!(z.entries, vec![1, 0, 1]);
        assert_eq!(z.wins(), 2);
        assert_eq!(zero_one(&[0.5, 0.25], &[0.5, 0.25], 0.0).unwrap().entries, vec![0, 0]);
        // Exactly epsilon apart is not a win.
        assert_eq!(zero_one(&[0.5], &[0.25], 0.25).unwrap().entries, vec![0]);
        assert!(zero_one(&[0.5], &[0.5, 0.1], 0.03).is_err());
    }

    #[test]
    fn cdf_examples() {
        let c = coherence_cdf(&[1.0, 2.0, 3.0]).unwrap();
        assert!((c.at(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.fraction_above(2.0) - 1.0 / 3.0).abs() < 1e-15);
        let flat = coherence_cdf(&[0.5; 4]).unwrap();
        assert_eq!(flat.table(), vec![(0.5, 1.0)]);
        assert_eq!(flat.at(0.49), 0.0);
        assert!(coherence_cdf(&[]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let r = |acc: f64, lookback: usize| AccuracyReport {
            mode: Mode::Centralized,
            scope: None,
            lookback,
            accuracy: acc,
            samples: 1,
            rlf_rate: 1.0 - acc,
        };
        let one = aggregate_by_lookback(&[r(0.4, 1)]).unwrap()[&1];
        assert_eq!((one.min, one.mean, one.max), (0.4, 0.4, 0.4));
        let two = aggregate_by_lookback(&[r(0.2, 3), r(0.8, 3), r(0.9, 5)]).unwrap();
        assert_eq!((two[&3].min, two[&3].mean, two[&3].max), (0.2, 0.5, 0.8));
        assert!(aggregate_by_lookback(&[]).is_err());
    }

    #[test]
    fn reports_split_by_scope() {
        let pair = |bs: usize, hit: bool| PredictionPair {
            frame: 1,
            input_frame: 0,
            crnti: 1,
            scope: ScopeKey { bs, crnti: None },
            truth: GlobalBeamId(3),
            predicted: GlobalBeamId(if hit { 3 } else { 4 }),
            acted: true,
        };
        let pairs = [pair(0, true), pair(1, false), pair(0, false), pair(0, true)];
        let reports = scope_reports(Mode::Centralized, 2, &pairs).unwrap();
        assert_eq!(reports.len(), 2);
        assert!((reports[0].accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(reports[1].accuracy, 0.0);
        assert_eq!(pooled_report(Mode::Centralized, 2, &pairs).unwrap().accuracy, 0.5);
    }

    proptest! {
        #[test]
        fn accuracy_is_permutation_equivariant(
            pairs in prop::collection::vec((0u8..4, 0u8..4), 1..60),
            seed in any::<u64>(),
        ) {
            let (t, p): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
            let mut idx: Vec<usize> = (0..t.len()).collect();
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            let tp: Vec<u8> = idx.iter().map(|&i| t[i]).collect();
            let pp: Vec<u8> = idx.iter().map(|&i| p[i]).collect();
            prop_assert_eq!(average_accuracy(&t, &p).unwrap(), average_accuracy(&tp, &pp).unwrap());
        }

        #[test]
        fn zero_one_against_itself_is_zero(s in prop::collection::vec(-1.0..1.0f64, 0..30), eps in 0.0..1.0f64) {
            prop_assert!(zero_one(&s, &s, eps).unwrap().entries.iter().all(|&e| e == 0));
        }

        #[test]
        fn rlf_rate_complements_accuracy(hits in 0usize..500, extra in 1usize..500) {
            let n = hits + extra;
            let truth = vec![1u8; n];
            let pred: Vec<u8> = (0..n).map(|i| u8::from(i < hits)).collect();
            let acc = average_accuracy(&truth, &pred).unwrap();
            prop_assert_eq!((1.0 - acc) + acc, 1.0);
        }

        #[test]
        fn cdf_is_monotone_and_ends_at_one(s in prop::collection::vec(0.0..10.0f64, 1..80)) {
            let c = coherence_cdf(&s).unwrap();
            let t = c.table();
            prop_assert!(t.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(t.last().unwrap().1, 1.0);
        }
    }
}
