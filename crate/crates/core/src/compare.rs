//! Likelihood-ratio comparison of two patterns' local spectra.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anova::{check_positive, periodogram_matrix, DesignSpec};
use crate::error::{Error, Result};
use crate::geometry::{Location, PointPattern};
use crate::rng::Seed;
use crate::spectral::{FilterSpec, SmootherSpec};

pub const DEFAULT_REPLICATES: usize = 100_000;
pub const MIN_REPLICATES: usize = 1000;
pub const LOWER_LEVEL: f64 = 0.025;
pub const UPPER_LEVEL: f64 = 0.975;

const CHUNK: usize = 4096;

/// `Λ = ∏_j 4 a_j b_j / (a_j + b_j)²`.
///
/// Each factor is evaluated as `4t/(1+t)²` with `t = min/max`, which makes
/// the statistic exactly symmetric and exactly invariant under common
/// power-of-two scalings.
pub fn lambda_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param(format!(
            "periodogram sequences differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::param("periodogram sequences are empty"));
    }
    let mut lambda = 1.0;
    for (&x, &y) in a.iter().zip(b) {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::param(format!(
                "periodogram values must be positive and finite, got {x} and {y}"
            )));
        }
        lambda *= pair_factor(x, y);
    }
    Ok(lambda)
}

fn pair_factor(x: f64, y: f64) -> f64 {
    let t = x.min(y) / x.max(y);
    4.0 * t / ((1.0 + t) * (1.0 + t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullQuantiles {
    pub lower: f64,
    pub upper: f64,
}

/// Type-7 (linear interpolation) empirical quantile of sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo draws of Λ for independent unit-exponential periodogram
/// pairs, in a thread-count-independent order.
pub fn simulate_null_lambdas(n_freq: usize, reps: usize, seed: Seed) -> Vec<f64> {
    let chunks = reps.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = seed.derive(c as u64).rng();
            let len = CHUNK.min(reps - c * CHUNK);
            (0..len)
                .map(|_| {
                    (0..n_freq)
                        .map(|_| pair_factor(rng.sample(Exp1), rng.sample(Exp1)))
                        .product::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// 0.025 and 0.975 quantiles of Λ under the exponential null.
///
/// The exponential law is the asymptotic law of a raw periodogram ordinate;
/// smoothed estimates concentrate Λ near 1 and land above the upper quantile.
pub fn mc_null_quantiles(n_freq: usize, reps: usize, seed: Seed) -> Result<NullQuantiles> {
    if reps < MIN_REPLICATES {
        return Err(Error::param(format!(
            "at least {MIN_REPLICATES} Monte Carlo replicates are required, got {reps}"
        )));
    }
    if n_freq == 0 {
        return Err(Error::param("need at least one frequency"));
    }
    let mut draws = simulate_null_lambdas(n_freq, reps, seed);
    draws.sort_by(f64::total_cmp);
    Ok(NullQuantiles {
        lower: quantile_type7(&draws, LOWER_LEVEL),
        upper: quantile_type7(&draws, UPPER_LEVEL),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectionSide {
    /// Λ below the lower quantile: the spectra differ.
    Below,
    /// Λ above the upper quantile: the spectra agree more closely than the null allows.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationComparison {
    pub index: usize,
    pub z: Location,
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub reject: bool,
    pub side: Option<RejectionSide>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub locations: Vec<LocationComparison>,
    pub mc_replicates: usize,
    pub seed: Seed,
    /// Every Λ equals 1: the two inputs have identical spectra, typically the
    /// same pattern compared with itself.
    pub self_comparison: bool,
}

impl ComparisonReport {
    pub fn rejections(&self) -> usize {
        self.locations.iter().filter(|l| l.reject).count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<9}{:>10}{:>10}{:>12}{:>12}{:>12}  decision",
            "Location", "x", "y", "Lambda", "q0.025", "q0.975"
        );
        for l in &self.locations {
            let decision = match l.side {
                None => "not rejected",
                Some(RejectionSide::Below) => "rejected (below: spectra differ)",
                Some(RejectionSide::Above) => "rejected (above: closer than null)",
            };
            let _ = writeln!(
                s,
                "{:<9}{:>10.3}{:>10.3}{:>12.4}{:>12.4e}{:>12.4}  {decision}",
                format!("z{}", l.index),
                l.z.0[0],
                l.z.0[1],
                l.lambda,
                l.lower,
                l.upper
            );
        }
        let _ = writeln!(
            s,
            "null: unit-exponential periodograms; {} Monte Carlo replicates, seed {}",
            self.mc_replicates, self.seed.0
        );
        if self.self_comparison {
            let _ = writeln!(
                s,
                "note: all Lambda = 1, the inputs have identical spectra (self-comparison)"
            );
        }
        s
    }
}

/// Compares periodogram rows at every design location.
pub fn compare_patterns(
    a: &PointPattern,
    b: &PointPattern,
    design: &DesignSpec,
    fspec: &FilterSpec,
    sspec: &SmootherSpec,
    reps: usize,
    seed: Seed,
) -> Result<ComparisonReport> {
    let ia = periodogram_matrix(a, design, fspec, sspec)?;
    check_positive(&ia, design)?;
    let ib = periodogram_matrix(b, design, fspec, sspec)?;
    check_positive(&ib, design)?;
    let q = mc_null_quantiles(design.frequencies().len(), reps, seed)?;
    compare_rows(&ia, &ib, design.locations(), q, reps, seed)
}

/// Comparison from precomputed periodogram rows.
pub fn compare_rows(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    locations: &[Location],
    q: NullQuantiles,
    reps: usize,
    seed: Seed,
) -> Result<ComparisonReport> {
    if a.len() != b.len() || a.len() != locations.len() {
        return Err(Error::param("periodogram tables and locations disagree in size"));
    }
    let mut records = Vec::with_capacity(a.len());
    for (i, ((ra, rb), &z)) in a.iter().zip(b).zip(locations).enumerate() {
        let lambda = lambda_statistic(ra, rb)?;
        let side = if lambda < q.lower {
            Some(RejectionSide::Below)
        } else if lambda > q.upper {
            Some(RejectionSide::Above)
        } else {
            None
        };
        records.push(LocationComparison {
            index: i + 1,
            z,
            lambda,
            lower: q.lower,
            upper: q.upper,
            reject: side.is_some(),
            side,
        });
    }
    Ok(ComparisonReport {
        self_comparison: records.iter().all(|r| r.lambda == 1.0),
        locations: records,
        mc_replicates: reps,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, prop_oneof, proptest};

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_statistic(&[1.0, 5.0, 0.3], &[1.0, 5.0, 0.3]).unwrap(), 1.0);
        let b = 0.7;
        assert!((lambda_statistic(&[3.0 * b], &[b]).unwrap() - 0.75).abs() < 1e-15);
        assert!(lambda_statistic(&[1.0], &[1.0, 2.0]).is_err());
        assert!(lambda_statistic(&[0.0], &[1.0]).is_err());
        assert!(lambda_statistic(&[-1.0], &[1.0]).is_err());
    }

    #[test]
    fn quantile_type7_small() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&xs, 0.0), 1.0);
        assert_eq!(quantile_type7(&xs, 1.0), 4.0);
        assert!((quantile_type7(&xs, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn null_quantiles_need_replicates() {
        assert!(mc_null_quantiles(9, 999, Seed(1)).is_err());
    }

    #[test]
    fn null_quantiles_are_deterministic() {
        let a = mc_null_quantiles(9, 20_000, Seed(3)).unwrap();
        let b = mc_null_quantiles(9, 20_000, Seed(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_factor_quantiles_match_reference() {
        // Reference: 10⁶ direct draws of 4UV/(U+V)² computed without the helper.
        let mut rng = Seed(2024).rng();
        let mut reference: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let u: f64 = rng.sample(Exp1);
                let v: f64 = rng.sample(Exp1);
                4.0 * u * v / ((u + v) * (u + v))
            })
            .collect();
        reference.sort_by(f64::total_cmp);
        let lo = quantile_type7(&reference, 0.025);
        let hi = quantile_type7(&reference, 0.975);
        let q = mc_null_quantiles(1, 100_000, Seed(5)).unwrap();
        assert!((q.lower - lo).abs() < 0.01, "{} vs {lo}", q.lower);
        assert!((q.upper - hi).abs() < 0.01, "{} vs {hi}", q.upper);
        // with U/(U+V) ~ Uniform(0,1) the factor is 4w(1-w); its 0.025 point solves
        // 4w(1-w) = x at w = 0.0125
        let exact_lo = 4.0 * 0.0125 * (1.0 - 0.0125);
        assert!((lo - exact_lo).abs() < 0.005);
    }

    #[test]
    fn nine_frequency_brackets() {
        let q = mc_null_quantiles(9, 100_000, Seed(7)).unwrap();
        assert!(q.lower >= 1e-6 && q.lower <= 1e-4, "{q:?}");
        assert!(q.upper >= 0.1 && q.upper <= 0.3, "{q:?}");
    }

    proptest! {
        #[test]
        fn lambda_properties(
            pairs in prop::collection::vec((1e-6f64..1e6, 1e-6f64..1e6), 1..12),
            k in -20i32..20,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let l = lambda_statistic(&a, &b).unwrap();
            prop_assert!(l > 0.0 && l <= 1.0);
            prop_assert_eq!(l.to_bits(), lambda_statistic(&b, &a).unwrap().to_bits());
            let c = 2f64.powi(k);
            let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
            prop_assert_eq!(l.to_bits(), lambda_statistic(&sa, &sb).unwrap().to_bits());
        }

        #[test]
        fn common_scaling_in_general(
            pairs in prop::collection::vec((1e-3f64..1e3, 1e-3f64..1e3), 1..12),
            c in 1e-3f64..1e3,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let l = lambda_statistic(&a, &b).unwrap();
            let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
            let ls = lambda_statistic(&sa, &sb).unwrap();
            prop_assert!((l - ls).abs() <= 1e-13 * l);
        }

        #[test]
        fn unequal_scaling_lowers_lambda(
            a in prop::collection::vec(1e-3f64..1e3, 1..12),
            c in prop_oneof![0.01f64..0.99, 1.01f64..100.0],
        ) {
            prop_assert_eq!(lambda_statistic(&a, &a).unwrap(), 1.0);
            let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
            prop_assert!(lambda_statistic(&a, &scaled).unwrap() < 1.0);
        }
    }
}
