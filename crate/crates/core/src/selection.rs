//! Subarray selectors: CNN inference, greedy CRB elimination and uniform
//! random choice, plus the selection-accuracy metric.

use std::fmt;

use rand::seq::index;

use crate::crb::{binomial, crb_from_covariance, BestSubarraySet, CrbConfig, SubarrayClass};
use crate::dataset::build_input_tensor;
use crate::error::{invalid, Error, Result};
use crate::geometry::SensorArray;
use crate::linalg::principal_submatrix;
use crate::nn::{argmax, forward, Mode, NetworkModel};
use crate::rng;
use crate::signal::{CovarianceMatrix, SourceDirection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionMethod {
    Cnn,
    CnnTransfer,
    Greedy,
    Random,
    BestExhaustive,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Cnn => "CNN",
            SelectionMethod::CnnTransfer => "CNN_TL",
            SelectionMethod::Greedy => "GAS",
            SelectionMethod::Random => "RAS",
            SelectionMethod::BestExhaustive => "Best",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub subset: SubarrayClass,
    pub method: SelectionMethod,
    /// Softmax probability (CNN), κ_abs (greedy, exhaustive) or nothing.
    pub score: Option<f64>,
}

/// Lexicographic rank of a sorted K-subset of `0..m`.
pub fn subset_rank(m: usize, indices: &[usize]) -> usize {
    let k = indices.len();
    let mut rank = 0u64;
    let mut next = 0;
    for (i, &c) in indices.iter().enumerate() {
        for j in next..c {
            rank += binomial(m - 1 - j, k - 1 - i);
        }
        next = c + 1;
    }
    rank as usize
}

fn class_for(m: usize, mut indices: Vec<usize>) -> Result<SubarrayClass> {
    indices.sort_unstable();
    let rank = subset_rank(m, &indices);
    SubarrayClass::new(indices, m, rank)
}

/// Runs the network on the covariance tensor and returns the most probable
/// class (lowest class id on ties).
pub fn select_cnn(model: &NetworkModel, r: &CovarianceMatrix, class_map: &BestSubarraySet) -> Result<SelectionResult> {
    if model.classes() != class_map.reduced_count() {
        return invalid(format!(
            "network has {} outputs, class map has {} classes",
            model.classes(),
            class_map.reduced_count()
        ));
    }
    let probs = forward(model, &build_input_tensor(r), Mode::Infer)?;
    let best = argmax(&probs);
    Ok(SelectionResult {
        subset: class_map.class(best).clone(),
        method: SelectionMethod::Cnn,
        score: Some(probs[best]),
    })
}

/// Greedy selection plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub result: SelectionResult,
    /// Number of CRB evaluations performed.
    pub evaluations: usize,
    /// Steps where every removal was degenerate and aperture decided.
    pub fallbacks: usize,
}

/// Backward elimination: starting from the full array, drop the sensor whose
/// removal leaves the smallest κ_abs until `k` remain.
pub fn select_greedy(
    array: &SensorArray,
    k: usize,
    dir_estimate: &SourceDirection,
    r_full: &CovarianceMatrix,
    sigma_n2: f64,
    t: usize,
    cfg: &CrbConfig,
) -> Result<SelectionResult> {
    select_greedy_traced(array, k, dir_estimate, r_full, sigma_n2, t, cfg).map(|g| g.result)
}

pub fn select_greedy_traced(
    array: &SensorArray,
    k: usize,
    dir_estimate: &SourceDirection,
    r_full: &CovarianceMatrix,
    sigma_n2: f64,
    t: usize,
    cfg: &CrbConfig,
) -> Result<GreedyTrace> {
    let m = array.len();
    if k < 2 {
        return Err(Error::InsufficientSubarray(k));
    }
    if k > m {
        return invalid(format!("cannot choose {k} of {m} sensors"));
    }
    if r_full.dim() != m {
        return invalid("covariance dimension does not match the array");
    }
    let positions = array.positions();
    let score = |set: &[usize]| -> Option<f64> {
        let pos: Vec<_> = set.iter().map(|&i| positions[i]).collect();
        let r = principal_submatrix(r_full.data(), set);
        crb_from_covariance(&pos, dir_estimate, &r, sigma_n2, t, cfg).ok().map(|c| c.kappa_abs)
    };
    let mut current: Vec<usize> = (0..m).collect();
    let mut evaluations = 0;
    let mut fallbacks = 0;
    let mut last_score = None;
    while current.len() > k {
        let mut best: Option<(f64, usize)> = None;
        for drop in 0..current.len() {
            let rest: Vec<usize> = current.iter().enumerate().filter(|&(j, _)| j != drop).map(|(_, &s)| s).collect();
            evaluations += 1;
            if let Some(v) = score(&rest) {
                if best.is_none_or(|(b, _)| v < b) {
                    best = Some((v, drop));
                }
            }
        }
        let drop = match best {
            Some((v, d)) => {
                last_score = Some(v);
                d
            }
            None => {
                fallbacks += 1;
                log::warn!("all removals from {} sensors are degenerate; keeping the widest aperture", current.len());
                last_score = None;
                let mut widest = (f64::NEG_INFINITY, 0);
                for drop in 0..current.len() {
                    let rest: Vec<usize> =
                        current.iter().enumerate().filter(|&(j, _)| j != drop).map(|(_, &s)| s).collect();
                    let a = array.aperture(&rest);
                    if a > widest.0 {
                        widest = (a, drop);
                    }
                }
                widest.1
            }
        };
        current.remove(drop);
    }
    if k == m {
        last_score = score(&current);
    }
    Ok(GreedyTrace {
        result: SelectionResult { subset: class_for(m, current)?, method: SelectionMethod::Greedy, score: last_score },
        evaluations,
        fallbacks,
    })
}

/// Uniformly random K-subset of `0..m`.
pub fn select_random(m: usize, k: usize, seed: u64) -> Result<SelectionResult> {
    if k > m {
        return invalid(format!("cannot choose {k} of {m} sensors"));
    }
    if k == 0 {
        return invalid("cannot choose an empty subarray");
    }
    let picked = index::sample(&mut rng::rng_from_seed(seed), m, k).into_vec();
    Ok(SelectionResult { subset: class_for(m, picked)?, method: SelectionMethod::Random, score: None })
}

/// Percentage of positions where `predicted` equals `truth`.
pub fn selection_accuracy<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return invalid("accuracy needs two nonempty lists of equal length");
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crb::enumerate_subarrays;
    use crate::geometry::build_uca;

    #[test]
    fn rank_matches_enumeration() {
        for s in enumerate_subarrays(7, 3).unwrap() {
            assert_eq!(subset_rank(7, s.indices()), s.class_id());
        }
    }

    #[test]
    fn accuracy_arithmetic() {
        assert_eq!(selection_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 100.0);
        let p = [0, 1, 1, 1, 1, 1, 1, 1, 0, 0];
        let t = [0, 1, 1, 1, 1, 1, 1, 0, 1, 1];
        assert!((selection_accuracy(&p, &t).unwrap() - 70.0).abs() < 1e-12);
        assert!(selection_accuracy::<usize>(&[], &[]).is_err());
    }

    #[test]
    fn random_edge_cases() {
        let r = select_random(5, 5, 1).unwrap();
        assert_eq!(r.subset.indices(), &[0, 1, 2, 3, 4]);
        assert_eq!(select_random(9, 4, 77).unwrap(), select_random(9, 4, 77).unwrap());
        assert!(select_random(3, 4, 0).is_err());
    }

    #[test]
    fn greedy_full_array_needs_no_work() {
        let arr = build_uca(6, 0.5).unwrap();
        let dir = SourceDirection::azimuth(40.0);
        let r = CovarianceMatrix::asymptotic(&arr, &dir, 1.0, 0.1, None).unwrap();
        let g = select_greedy_traced(&arr, 6, &dir, &r, 0.1, 100, &CrbConfig::default()).unwrap();
        assert_eq!(g.evaluations, 0);
        assert_eq!(g.result.subset.len(), 6);
        let g = select_greedy_traced(&arr, 3, &dir, &r, 0.1, 100, &CrbConfig::default()).unwrap();
        assert_eq!(g.evaluations, 6 + 5 + 4);
    }
}
