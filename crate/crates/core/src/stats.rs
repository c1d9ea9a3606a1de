//! Wilcoxon signed-rank test and ROC AUC.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest sample size for which [`wilcoxon_signed_rank`] enumerates the
/// exact null distribution.
pub const EXACT_MAX_N: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Sum of ranks of the positive differences.
    pub v: f64,
    /// Non-zero differences used.
    pub n: usize,
    /// One-sided p-value for the alternative "differences tend to be positive".
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based, ties share the average rank).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j hold ranks i+1..=j.
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

struct Ranked {
    ranks: Vec<f64>,
    v: f64,
}

fn rank_nonzero(differences: &[f64]) -> Result<Ranked> {
    let nz: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::AllZeroDifferences);
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let positive: Vec<bool> = nz.iter().map(|&d| d > 0.0).collect();
    let v = ranks
        .iter()
        .zip(&positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    Ok(Ranked { ranks, v })
}

/// Exact `P(V ≥ v_obs)` under random signs, conditional on the observed
/// (mid)ranks. Counts sign patterns by dynamic programming over doubled ranks.
pub fn wilcoxon_exact(differences: &[f64]) -> Result<Wilcoxon> {
    let r = rank_nonzero(differences)?;
    let doubled: Vec<usize> = r.ranks.iter().map(|&x| libm::round(2.0 * x) as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &d in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + d] += counts[s];
            }
        }
        reach += d;
    }
    let v2 = libm::round(2.0 * r.v) as usize;
    let tail: f64 = counts[v2..].iter().sum();
    let all = libm::pow(2.0, doubled.len() as f64);
    Ok(Wilcoxon {
        v: r.v,
        n: r.ranks.len(),
        p_value: tail / all,
        exact: true,
    })
}

/// Normal approximation with continuity correction and tie-corrected variance.
pub fn wilcoxon_normal(differences: &[f64]) -> Result<Wilcoxon> {
    let r = rank_nonzero(differences)?;
    let n = r.ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    let mut sorted = r.ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&x| x == sorted[i]).count();
        let t = j as f64;
        var -= (t * t * t - t) / 48.0;
        i += j;
    }
    let z = (r.v - mean - 0.5) / libm::sqrt(var);
    Ok(Wilcoxon {
        v: r.v,
        n: r.ranks.len(),
        p_value: 0.5 * libm::erfc(z / core::f64::consts::SQRT_2),
        exact: false,
    })
}

/// One-sided signed-rank test on paired differences; zero differences are
/// discarded. Exact for up to [`EXACT_MAX_N`] non-zero differences.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<Wilcoxon> {
    let n = differences.iter().filter(|&&d| d != 0.0).count();
    if n <= EXACT_MAX_N {
        wilcoxon_exact(differences)
    } else {
        wilcoxon_normal(differences)
    }
}

/// Area under the ROC curve via the Mann–Whitney rank sum (ties count half).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "auc",
            expected: vec![scores.len()],
            got: vec![labels.len()],
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// V and P(V' ≥ V) by visiting every sign assignment.
    fn enumerate(differences: &[f64]) -> (f64, f64) {
        let nz: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
        let n = nz.len();
        // Midranks by counting, independent of the sort-based routine.
        let ranks: Vec<f64> = nz
            .iter()
            .map(|a| {
                let less = nz.iter().filter(|b| b.abs() < a.abs()).count() as f64;
                let eq = nz.iter().filter(|b| b.abs() == a.abs()).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect();
        let v_obs: f64 = (0..n).filter(|&i| nz[i] > 0.0).map(|i| ranks[i]).sum();
        let mut at_least = 0u64;
        for mask in 0u64..(1 << n) {
            let v: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if v >= v_obs - 1e-9 {
                at_least += 1;
            }
        }
        (v_obs, at_least as f64 / (1u64 << n) as f64)
    }

    fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let (mut np, mut nn) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            if li {
                np += 1.0;
            } else {
                nn += 1.0;
            }
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / (np * nn)
    }

    #[test]
    fn small_examples() {
        let w = wilcoxon_signed_rank(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(w.v, 6.0);
        assert_eq!(w.p_value, 0.125);
        assert!(w.exact);
        let w = wilcoxon_signed_rank(&[-1.0, -2.0, -3.0]).unwrap();
        assert_eq!(w.v, 0.0);
        assert_eq!(w.p_value, 1.0);
        assert!(matches!(wilcoxon_signed_rank(&[0.0, 0.0]), Err(Error::AllZeroDifferences)));
        // Zeros are dropped before ranking.
        assert_eq!(wilcoxon_signed_rank(&[0.0, 1.0, 2.0, 3.0]).unwrap().v, 6.0);
    }

    #[test]
    fn exact_matches_enumeration_for_every_sign_pattern() {
        let mut r = rng::stream(0, &[1]);
        for n in 1..=10usize {
            // Magnitudes with a forced tie when n > 2.
            let mut mags: Vec<f64> = (0..n).map(|_| r.random_range(0.1..5.0)).collect();
            if n > 2 {
                mags[1] = mags[0];
            }
            for pattern in 0u32..(1 << n) {
                let d: Vec<f64> = (0..n)
                    .map(|i| if pattern >> i & 1 == 1 { mags[i] } else { -mags[i] })
                    .collect();
                let (v, p) = enumerate(&d);
                let w = wilcoxon_exact(&d).unwrap();
                assert_eq!(w.v, v);
                assert!((w.p_value - p).abs() < 1e-12, "n={n} pattern={pattern}");
            }
        }
    }

    #[test]
    fn normal_approximation_close_to_exact_at_n10() {
        let mut r = rng::stream(2, &[1]);
        for _ in 0..200 {
            let d: Vec<f64> = (0..10).map(|_| r.random_range(-1.0..1.5)).collect();
            let e = wilcoxon_exact(&d).unwrap().p_value;
            let a = wilcoxon_normal(&d).unwrap().p_value;
            assert!((e - a).abs() < 0.02, "{e} vs {a}");
        }
    }

    #[test]
    fn large_samples_use_the_normal_approximation() {
        let d: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let w = wilcoxon_signed_rank(&d).unwrap();
        assert!(!w.exact);
        assert_eq!(w.v, 820.0);
        assert!(w.p_value < 1e-7);
    }

    #[test]
    fn auc_examples() {
        let labels = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert!(matches!(auc(&[1.0, 2.0], &[true, true]), Err(Error::SingleClass)));
        assert!(matches!(auc(&[1.0], &[true, false]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn auc_matches_pairwise_oracle_with_ties() {
        let mut r = rng::stream(3, &[1]);
        let mut done = 0;
        while done < 100 {
            let n = r.random_range(2..60);
            // Coarse grid forces ties.
            let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..8u8)) / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            assert_eq!(auc(&scores, &labels).unwrap(), auc_pairs(&scores, &labels));
            done += 1;
        }
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    proptest! {
        #[test]
        fn auc_complements_under_label_flip(seed in 0u64..1000, n in 2usize..40) {
            let mut r = rng::stream(seed, &[9]);
            let scores: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let s = auc(&scores, &labels).unwrap() + auc(&scores, &flipped).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(seed in 0u64..1000, n in 2usize..40) {
            let mut r = rng::stream(seed, &[10]);
            let scores: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let t: Vec<f64> = scores.iter().map(|s| libm::exp(*s) * 2.0 + 1.0).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&t, &labels).unwrap());
        }

        #[test]
        fn v_and_negated_v_sum_to_triangle(seed in 0u64..1000, n in 1usize..40) {
            let mut r = rng::stream(seed, &[11]);
            // Distinct magnitudes.
            let d: Vec<f64> = (0..n)
                .map(|i| (i as f64 + 1.0 + r.random::<f64>() * 0.5) * if r.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            let total = wilcoxon_signed_rank(&d).unwrap().v + wilcoxon_signed_rank(&neg).unwrap().v;
            prop_assert_eq!(total, (n * (n + 1)) as f64 / 2.0);
        }
    }
}
