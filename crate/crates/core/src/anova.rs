//! Two-factor analysis of the log local periodogram with known residual
//! variance.
//!
//! Rows of the table are locations, columns are frequencies. With σ² known,
//! every sum of squares divided by σ² is referred to a χ² distribution.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{chi2_quantile, chi2_sf};
use crate::error::{Error, Result};
use crate::geometry::{distance, Frequency, Location, PointPattern, Window};
use crate::spectral::{residual_variance, FilterSpec, LocalEstimator, SmootherSpec};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Locations and frequencies at which the local periodogram is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    locations: Vec<Location>,
    frequencies: Vec<Frequency>,
    min_location_spacing: f64,
    min_frequency_spacing: f64,
}

impl DesignSpec {
    pub fn new(
        locations: Vec<Location>,
        frequencies: Vec<Frequency>,
        min_location_spacing: f64,
        min_frequency_spacing: f64,
    ) -> Result<Self> {
        if locations.len() < 2 || frequencies.len() < 2 {
            return Err(Error::param(format!(
                "a design needs at least 2 locations and 2 frequencies, got {} and {}",
                locations.len(),
                frequencies.len()
            )));
        }
        let finite = locations.iter().map(|l| l.0).chain(frequencies.iter().map(|f| f.0));
        if finite.flat_map(|v| v.into_iter()).any(|c| !c.is_finite()) {
            return Err(Error::param("design coordinates must be finite"));
        }
        Ok(DesignSpec {
            locations,
            frequencies,
            min_location_spacing,
            min_frequency_spacing,
        })
    }

    /// Spacing minima `ρ` and `π/h`.
    pub fn with_filters(
        locations: Vec<Location>,
        frequencies: Vec<Frequency>,
        fspec: &FilterSpec,
        sspec: &SmootherSpec,
    ) -> Result<Self> {
        Self::new(locations, frequencies, sspec.rho, fspec.bandwidth())
    }

    /// Nine locations `(70 i₁/6, 70 i₂/6)`, `i ∈ {1, 3, 5}`, and nine
    /// frequencies on the grid `{1, 8, 15}·π/20` per axis, with the spacing
    /// rules of `h = 3`, `ρ = 20`.
    pub fn auto() -> Self {
        Self::auto_on(&Window::square(70.0).expect("valid"), 20.0, PI / 3.0)
    }

    /// The nine-location layout scaled onto `window`.
    pub fn auto_on(window: &Window, min_location_spacing: f64, min_frequency_spacing: f64) -> Self {
        let lo = window.lower();
        let side = window.side_lengths();
        let mut locations = Vec::with_capacity(9);
        for i2 in [1.0, 3.0, 5.0] {
            for i1 in [1.0, 3.0, 5.0] {
                locations.push(Location([lo[0] + side[0] * i1 / 6.0, lo[1] + side[1] * i2 / 6.0]));
            }
        }
        DesignSpec {
            locations,
            frequencies: auto_frequencies(),
            min_location_spacing,
            min_frequency_spacing,
        }
    }

    /// Centroids of the four quadrants of `window`, nine auto frequencies.
    pub fn quadrants_on(window: &Window, min_location_spacing: f64, min_frequency_spacing: f64) -> Self {
        let lo = window.lower();
        let side = window.side_lengths();
        let mut locations = Vec::with_capacity(4);
        for i2 in [1.0, 3.0] {
            for i1 in [1.0, 3.0] {
                locations.push(Location([lo[0] + side[0] * i1 / 4.0, lo[1] + side[1] * i2 / 4.0]));
            }
        }
        DesignSpec {
            locations,
            frequencies: auto_frequencies(),
            min_location_spacing,
            min_frequency_spacing,
        }
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn frequencies(&self) -> &[Frequency] {
        &self.frequencies
    }

    pub fn min_location_spacing(&self) -> f64 {
        self.min_location_spacing
    }

    pub fn min_frequency_spacing(&self) -> f64 {
        self.min_frequency_spacing
    }

    /// Copy without frequency number `index` (1-based).
    pub fn drop_frequency(&self, index: usize) -> Result<Self> {
        if index == 0 || index > self.frequencies.len() {
            return Err(Error::param(format!(
                "frequency index {index} outside 1..={}",
                self.frequencies.len()
            )));
        }
        let mut frequencies = self.frequencies.clone();
        frequencies.remove(index - 1);
        Self::new(
            self.locations.clone(),
            frequencies,
            self.min_location_spacing,
            self.min_frequency_spacing,
        )
    }

    pub fn with_frequencies(&self, frequencies: Vec<Frequency>) -> Result<Self> {
        Self::new(
            self.locations.clone(),
            frequencies,
            self.min_location_spacing,
            self.min_frequency_spacing,
        )
    }

    /// Violations of the spacing rules. Estimates closer than these minima
    /// are correlated, which inflates the χ² statistics.
    pub fn spacing_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let locs = &self.locations;
        for i in 0..locs.len() {
            for j in i + 1..locs.len() {
                let d = distance(locs[i].0, locs[j].0);
                if d < self.min_location_spacing {
                    out.push(format!(
                        "locations z{} and z{} are {d:.4} apart, below the minimum {:.4}; \
                         their estimates are correlated",
                        i + 1,
                        j + 1,
                        self.min_location_spacing
                    ));
                }
            }
        }
        let fr = &self.frequencies;
        for i in 0..fr.len() {
            for j in i + 1..fr.len() {
                let diff = distance(fr[i].0, fr[j].0);
                let sum = distance(fr[i].0, fr[j].neg().0);
                let d = diff.min(sum);
                if d < self.min_frequency_spacing {
                    out.push(format!(
                        "frequencies w{} and w{} are {d:.4} apart (up to sign), below the minimum \
                         {:.4}; their estimates are correlated",
                        i + 1,
                        j + 1,
                        self.min_frequency_spacing
                    ));
                }
            }
        }
        out
    }
}

fn auto_frequencies() -> Vec<Frequency> {
    let mut out = Vec::with_capacity(9);
    for k2 in [1.0, 8.0, 15.0] {
        for k1 in [1.0, 8.0, 15.0] {
            out.push(Frequency([k1 * PI / 20.0, k2 * PI / 20.0]));
        }
    }
    out
}

/// `Y_ij = ln I_{z_i}(ω_j)` with its known residual variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPeriodogramTable {
    values: Vec<Vec<f64>>,
    sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design: Option<DesignSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

impl LogPeriodogramTable {
    /// Table from precomputed log values (synthetic data, replayed analyses).
    pub fn from_values(values: Vec<Vec<f64>>, sigma2: f64) -> Result<Self> {
        let table = LogPeriodogramTable {
            values,
            sigma2,
            design: None,
            warnings: Vec::new(),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::param(format!("residual variance {} must be positive", self.sigma2)));
        }
        let n = self.values.first().map_or(0, Vec::len);
        if self.values.iter().any(|r| r.len() != n) {
            return Err(Error::param("table rows have unequal lengths"));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("table entries must be finite"));
        }
        if let Some(d) = &self.design {
            if d.locations().len() != self.values.len() || d.frequencies().len() != n {
                return Err(Error::param("table shape does not match its design"));
            }
        }
        Ok(())
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn design(&self) -> Option<&DesignSpec> {
        self.design.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn location_count(&self) -> usize {
        self.values.len()
    }

    pub fn frequency_count(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Same table restricted to the given columns (0-based).
    pub fn select_frequencies(&self, columns: &[usize]) -> Result<Self> {
        let n = self.frequency_count();
        if let Some(&bad) = columns.iter().find(|&&c| c >= n) {
            return Err(Error::param(format!("column {bad} out of range")));
        }
        let values = self
            .values
            .iter()
            .map(|row| columns.iter().map(|&c| row[c]).collect())
            .collect();
        let design = match &self.design {
            Some(d) => Some(d.with_frequencies(columns.iter().map(|&c| d.frequencies()[c]).collect())?),
            None => None,
        };
        Ok(LogPeriodogramTable {
            values,
            sigma2: self.sigma2,
            design,
            warnings: self.warnings.clone(),
        })
    }

    /// Drops frequency number `index` (1-based).
    pub fn drop_frequency(&self, index: usize) -> Result<Self> {
        let n = self.frequency_count();
        if index == 0 || index > n {
            return Err(Error::param(format!("frequency index {index} outside 1..={n}")));
        }
        let keep: Vec<usize> = (0..n).filter(|&c| c != index - 1).collect();
        self.select_frequencies(&keep)
    }

    fn row_means(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect()
    }

    fn column_means(&self) -> Vec<f64> {
        let m = self.location_count() as f64;
        (0..self.frequency_count())
            .map(|j| self.values.iter().map(|r| r[j]).sum::<f64>() / m)
            .collect()
    }
}

/// Matrix `I_{z_i}(ω_j)` of smoothed local periodograms.
pub fn periodogram_matrix(
    p: &PointPattern,
    design: &DesignSpec,
    fspec: &FilterSpec,
    sspec: &SmootherSpec,
) -> Result<Vec<Vec<f64>>> {
    let est = LocalEstimator::new(p, *fspec, *sspec);
    design
        .locations()
        .par_iter()
        .map(|&z| est.row(z, design.frequencies()))
        .collect()
}

/// Index of the first zero entry, reported as the error naming `(z_i, ω_j)`.
pub(crate) fn check_positive(matrix: &[Vec<f64>], design: &DesignSpec) -> Result<()> {
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(v > 0.0) {
                let z = design.locations()[i].0;
                let w = design.frequencies()[j].0;
                return Err(Error::ZeroPeriodogram {
                    location: i + 1,
                    frequency: j + 1,
                    zx: z[0],
                    zy: z[1],
                    wx: w[0],
                    wy: w[1],
                });
            }
        }
    }
    Ok(())
}

pub fn build_log_table(
    p: &PointPattern,
    design: &DesignSpec,
    fspec: &FilterSpec,
    sspec: &SmootherSpec,
) -> Result<LogPeriodogramTable> {
    let matrix = periodogram_matrix(p, design, fspec, sspec)?;
    check_positive(&matrix, design)?;
    let values = matrix
        .into_iter()
        .map(|row| row.into_iter().map(f64::ln).collect())
        .collect();
    Ok(LogPeriodogramTable {
        values,
        sigma2: residual_variance(fspec, sspec),
        design: Some(design.clone()),
        warnings: design.spacing_warnings(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StationaryCompatible,
    UniformlyModulatedNonstationary,
    NonuniformlyModulatedNonstationary,
}

impl Verdict {
    pub fn rejects_stationarity(self) -> bool {
        self != Verdict::StationaryCompatible
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::StationaryCompatible => "stationary-compatible",
            Verdict::UniformlyModulatedNonstationary => "uniformly-modulated-nonstationary",
            Verdict::NonuniformlyModulatedNonstationary => "nonuniformly-modulated-nonstationary",
        })
    }
}

/// One χ²-tested source of variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectTest {
    pub df: usize,
    pub ss: f64,
    pub chi2: f64,
    pub p_value: f64,
    pub critical_value: f64,
    pub significant: bool,
}

impl EffectTest {
    fn new(ss: f64, df: usize, sigma2: f64, alpha: f64) -> Result<Self> {
        let chi2 = ss / sigma2;
        let critical_value = chi2_quantile(1.0 - alpha, df as f64)?;
        Ok(EffectTest {
            df,
            ss,
            chi2,
            p_value: chi2_sf(chi2, df as f64),
            critical_value,
            significant: chi2 > critical_value,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalRow {
    pub df: usize,
    pub ss: f64,
    pub chi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaReport {
    pub location_count: usize,
    pub frequency_count: usize,
    pub sigma2: f64,
    pub alpha: f64,
    pub between_locations: EffectTest,
    pub between_frequencies: EffectTest,
    pub interaction_residual: EffectTest,
    pub total: TotalRow,
    pub verdict: Verdict,
}

impl AnovaReport {
    pub fn ssl(&self) -> f64 {
        self.between_locations.ss
    }

    pub fn ssf(&self) -> f64 {
        self.between_frequencies.ss
    }

    pub fn ssier(&self) -> f64 {
        self.interaction_residual.ss
    }

    pub fn sst(&self) -> f64 {
        self.total.ss
    }

    /// Aligned table with the rows Between spatial locations, Between
    /// frequencies, Interaction + residual and Total.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<28}{:>5}{:>12}{:>14}", "Item", "Df", "SS", "chi2(=SS/s2)");
        let rows = [
            ("Between spatial locations", &self.between_locations),
            ("Between frequencies", &self.between_frequencies),
            ("Interaction + residual", &self.interaction_residual),
        ];
        for (name, e) in rows {
            let _ = writeln!(s, "{name:<28}{:>5}{:>12.2}{:>14.2}", e.df, e.ss, e.chi2);
        }
        let _ = writeln!(
            s,
            "{:<28}{:>5}{:>12.2}{:>14.2}",
            "Total", self.total.df, self.total.ss, self.total.chi2
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "sigma2 = {:.6}, alpha = {}", self.sigma2, self.alpha);
        for (name, e) in [
            ("interaction", &self.interaction_residual),
            ("locations", &self.between_locations),
            ("frequencies", &self.between_frequencies),
        ] {
            let _ = writeln!(
                s,
                "{name:<12} chi2 = {:.2} vs chi2_{}({}) = {:.2}, p = {:.4} -> {}",
                e.chi2,
                e.df,
                self.alpha,
                e.critical_value,
                e.p_value,
                if e.significant { "significant" } else { "not significant" }
            );
        }
        let _ = writeln!(s, "verdict: {}", self.verdict);
        s
    }
}

/// Two-way decomposition with χ² decisions at level `alpha`: interaction
/// first, then locations, frequencies tested regardless.
pub fn anova_decompose(t: &LogPeriodogramTable, alpha: f64) -> Result<AnovaReport> {
    t.validate()?;
    let m = t.location_count();
    let n = t.frequency_count();
    if m < 2 || n < 2 {
        return Err(Error::Degenerate(format!(
            "table is {m} x {n}; at least 2 x 2 is required"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("significance level {alpha} outside (0, 1)")));
    }
    let rows = t.row_means();
    let cols = t.column_means();
    let grand = rows.iter().sum::<f64>() / m as f64;

    let ssl = n as f64 * rows.iter().map(|r| (r - grand).powi(2)).sum::<f64>();
    let ssf = m as f64 * cols.iter().map(|c| (c - grand).powi(2)).sum::<f64>();
    let mut ssier = 0.0;
    let mut sst = 0.0;
    for (i, row) in t.values().iter().enumerate() {
        for (j, &y) in row.iter().enumerate() {
            ssier += (y - rows[i] - cols[j] + grand).powi(2);
            sst += (y - grand).powi(2);
        }
    }

    let s2 = t.sigma2();
    let between_locations = EffectTest::new(ssl, m - 1, s2, alpha)?;
    let between_frequencies = EffectTest::new(ssf, n - 1, s2, alpha)?;
    let interaction_residual = EffectTest::new(ssier, (m - 1) * (n - 1), s2, alpha)?;
    let verdict = if interaction_residual.significant {
        Verdict::NonuniformlyModulatedNonstationary
    } else if between_locations.significant {
        Verdict::UniformlyModulatedNonstationary
    } else {
        Verdict::StationaryCompatible
    };
    Ok(AnovaReport {
        location_count: m,
        frequency_count: n,
        sigma2: s2,
        alpha,
        between_locations,
        between_frequencies,
        interaction_residual,
        total: TotalRow {
            df: m * n - 1,
            ss: sst,
            chi2: sst / s2,
        },
        verdict,
    })
}

/// Bonferroni-adjusted contrast between locations `first` and `second` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseContrast {
    pub first: usize,
    pub second: usize,
    pub df: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
}

/// All `C(m, 2)` contrasts `n (Ȳ_i· − Ȳ_k·)² / (2σ²) ~ χ²₁`, each tested at
/// `alpha / C(m, 2)`.
pub fn posthoc_bonferroni(t: &LogPeriodogramTable, alpha: f64) -> Result<Vec<PairwiseContrast>> {
    t.validate()?;
    let m = t.location_count();
    if m < 2 {
        return Err(Error::Degenerate("post-hoc comparison needs 2 or more locations".into()));
    }
    let n = t.frequency_count() as f64;
    let means = t.row_means();
    let pairs = m * (m - 1) / 2;
    let level = alpha / pairs as f64;
    let mut out = Vec::with_capacity(pairs);
    for i in 0..m {
        for k in i + 1..m {
            let statistic = n * (means[i] - means[k]).powi(2) / (2.0 * t.sigma2());
            let p_value = chi2_sf(statistic, 1.0);
            out.push(PairwiseContrast {
                first: i + 1,
                second: k + 1,
                df: 1,
                statistic,
                p_value,
                level,
                reject: p_value < level,
            });
        }
    }
    Ok(out)
}

pub fn posthoc_text(pairs: &[PairwiseContrast]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14}{:>4}{:>24}{:>12}", "Item", "Df", "chi2(=SS/s2) statistic", "p-value");
    for c in pairs {
        let label = format!("z{} vs z{}", c.first, c.second);
        let mark = if c.reject { "*" } else { "" };
        let _ = writeln!(s, "{label:<14}{:>4}{:>24.2}{:>12.4}{mark}", c.df, c.statistic, c.p_value);
    }
    if let Some(c) = pairs.first() {
        let _ = writeln!(s, "* rejected at the Bonferroni level {:.5}", c.level);
    }
    s
}

/// Frequency-effect test over one set of equal-norm frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyResult {
    pub norm: f64,
    pub frequencies: Vec<Frequency>,
    pub report: AnovaReport,
    pub anisotropic: bool,
    pub warnings: Vec<String>,
}

/// Tests each group of equal-norm frequencies for an orientation effect.
pub fn test_isotropy(
    p: &PointPattern,
    locations: &[Location],
    norm_groups: &[Vec<Frequency>],
    fspec: &FilterSpec,
    sspec: &SmootherSpec,
    alpha: f64,
) -> Result<Vec<IsotropyResult>> {
    norm_groups
        .iter()
        .map(|group| {
            if group.len() < 2 {
                return Err(Error::param("an isotropy group needs at least 2 frequencies"));
            }
            let norm = group[0].norm();
            if let Some(bad) = group
                .iter()
                .find(|w| (w.norm() - norm).abs() > 1e-9 * norm.max(1.0))
            {
                return Err(Error::param(format!(
                    "frequency ({}, {}) has norm {} but its group has norm {norm}",
                    bad.0[0],
                    bad.0[1],
                    bad.norm()
                )));
            }
            let design = DesignSpec::with_filters(locations.to_vec(), group.clone(), fspec, sspec)?;
            let table = build_log_table(p, &design, fspec, sspec)?;
            let report = anova_decompose(&table, alpha)?;
            Ok(IsotropyResult {
                norm,
                frequencies: group.clone(),
                anisotropic: report.between_frequencies.significant,
                warnings: table.warnings().to_vec(),
                report,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn auto_design_layout() {
        let d = DesignSpec::auto();
        assert_eq!(d.locations().len(), 9);
        assert_eq!(d.frequencies().len(), 9);
        assert!((d.locations()[0].0[0] - 70.0 / 6.0).abs() < 1e-12);
        assert!((d.locations()[8].0[1] - 350.0 / 6.0).abs() < 1e-12);
        assert!((d.frequencies()[8].0[0] - 15.0 * PI / 20.0).abs() < 1e-15);
        assert!(d.spacing_warnings().is_empty());
        let dropped = d.drop_frequency(9).unwrap();
        assert_eq!(dropped.frequencies().len(), 8);
        assert!(d.drop_frequency(0).is_err());
        assert!(d.drop_frequency(10).is_err());
    }

    #[test]
    fn spacing_violation_warns() {
        let d = DesignSpec::new(
            vec![Location([10.0, 10.0]), Location([15.0, 10.0])],
            vec![Frequency([0.5, 0.5]), Frequency([0.6, 0.5])],
            20.0,
            PI / 3.0,
        )
        .unwrap();
        assert_eq!(d.spacing_warnings().len(), 2);
    }

    #[test]
    fn constant_table() {
        let t = LogPeriodogramTable::from_values(vec![vec![1.7; 5]; 4], 0.04).unwrap();
        let r = anova_decompose(&t, 0.05).unwrap();
        assert_eq!(r.ssl(), 0.0);
        assert_eq!(r.ssf(), 0.0);
        assert_eq!(r.ssier(), 0.0);
        assert_eq!(r.verdict, Verdict::StationaryCompatible);
    }

    #[test]
    fn additive_table_has_no_interaction() {
        let a = [0.3, -1.2, 2.5, 0.0];
        let b = [1.0, 4.0, -2.0];
        let values = a.iter().map(|ai| b.iter().map(|bj| ai + bj).collect()).collect();
        let t = LogPeriodogramTable::from_values(values, 1.0).unwrap();
        assert!(anova_decompose(&t, 0.05).unwrap().ssier() < 1e-12);
    }

    #[test]
    fn two_by_two_hand_computation() {
        let t = LogPeriodogramTable::from_values(vec![vec![0.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        let r = anova_decompose(&t, 0.05).unwrap();
        assert!((r.ssl() - 0.25).abs() < 1e-15);
        assert!((r.ssf() - 0.25).abs() < 1e-15);
        assert!((r.ssier() - 0.25).abs() < 1e-15);
        assert!((r.sst() - 0.75).abs() < 1e-15);
        assert_eq!(
            (r.between_locations.df, r.between_frequencies.df, r.interaction_residual.df),
            (1, 1, 1)
        );
    }

    #[test]
    fn degrees_of_freedom_for_auto_design() {
        let t = LogPeriodogramTable::from_values(vec![vec![0.0; 9]; 9], 0.04).unwrap();
        let r = anova_decompose(&t, 0.05).unwrap();
        assert_eq!(r.between_locations.df, 8);
        assert_eq!(r.between_frequencies.df, 8);
        assert_eq!(r.interaction_residual.df, 64);
        let r = anova_decompose(&t.drop_frequency(9).unwrap(), 0.05).unwrap();
        assert_eq!(r.between_frequencies.df, 7);
        assert_eq!(r.interaction_residual.df, 56);
    }

    #[test]
    fn degenerate_tables() {
        let t = LogPeriodogramTable::from_values(vec![vec![0.0, 1.0]], 1.0).unwrap();
        assert!(anova_decompose(&t, 0.05).is_err());
        assert!(posthoc_bonferroni(&t, 0.05).is_err());
        assert!(LogPeriodogramTable::from_values(vec![vec![0.0, 1.0], vec![1.0]], 1.0).is_err());
        assert!(LogPeriodogramTable::from_values(vec![vec![0.0, f64::NAN]; 2], 1.0).is_err());
        assert!(LogPeriodogramTable::from_values(vec![vec![0.0, 1.0]; 2], 0.0).is_err());
    }

    #[test]
    fn identical_rows_are_never_separated() {
        let t = LogPeriodogramTable::from_values(
            vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![5.0, 2.0, 0.0]],
            0.04,
        )
        .unwrap();
        let pairs = posthoc_bonferroni(&t, 0.05).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].statistic, 0.0);
        assert!(!pairs[0].reject);
    }

    #[test]
    fn identical_columns_support_isotropy() {
        let t = LogPeriodogramTable::from_values(
            vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 0.5]],
            0.04,
        )
        .unwrap();
        let r = anova_decompose(&t, 0.05).unwrap();
        assert_eq!(r.between_frequencies.chi2, 0.0);
        assert!(!r.between_frequencies.significant);
    }

    #[test]
    fn isotropy_rejects_bad_groups() {
        let w = Window::square(70.0).unwrap();
        let p = PointPattern::empty(w);
        let f = FilterSpec::new(3.0).unwrap();
        let s = SmootherSpec::new(20.0).unwrap();
        let locs = DesignSpec::auto().locations().to_vec();
        let single = vec![vec![Frequency([1.0, 0.5])]];
        assert!(test_isotropy(&p, &locs, &single, &f, &s, 0.05).is_err());
        let unequal = vec![vec![Frequency([1.0, 0.5]), Frequency([1.0, 0.6])]];
        assert!(matches!(
            test_isotropy(&p, &locs, &unequal, &f, &s, 0.05),
            Err(Error::InvalidParameter(_))
        ));
        // swapped coordinates pass the norm check; the empty pattern then fails numerically
        let swapped = vec![vec![Frequency([1.0, 0.5]), Frequency([0.5, 1.0])]];
        assert!(matches!(
            test_isotropy(&p, &locs, &swapped, &f, &s, 0.05),
            Err(Error::ZeroPeriodogram { .. })
        ));
    }

    #[test]
    fn empty_neighbourhood_names_location() {
        let w = Window::square(70.0).unwrap();
        // points only near z1
        let p = PointPattern::new(w, vec![[11.0, 11.0], [12.0, 12.5], [10.0, 13.0]]).unwrap();
        let f = FilterSpec::new(3.0).unwrap();
        let s = SmootherSpec::new(20.0).unwrap();
        match build_log_table(&p, &DesignSpec::auto(), &f, &s) {
            Err(Error::ZeroPeriodogram { location, .. }) => assert_eq!(location, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn auto_table_reports_sigma2() {
        let w = Window::square(70.0).unwrap();
        let p = crate::simulate::sim_poisson(0.2, &w, crate::rng::Seed(2)).unwrap();
        let f = FilterSpec::new(3.0).unwrap();
        let s = SmootherSpec::new(20.0).unwrap();
        let t = build_log_table(&p, &DesignSpec::auto(), &f, &s).unwrap();
        assert!((t.sigma2() - 0.04).abs() < 1e-15);
        assert_eq!((t.location_count(), t.frequency_count()), (9, 9));
    }

    #[test]
    fn constant_periodogram_gives_constant_table() {
        let w = Window::square(70.0).unwrap();
        // one point at each location, so every smoothing box sees the same geometry
        let design = DesignSpec::auto();
        let pts: Vec<[f64; 2]> = design.locations().iter().map(|l| l.0).collect();
        let p = PointPattern::new(w, pts).unwrap();
        let f = FilterSpec::new(3.0).unwrap();
        let s = SmootherSpec::new(20.0).unwrap();
        // single-point neighbourhoods: |J|² is the squared weight, phase-free
        let t = build_log_table(&p, &design, &f, &s).unwrap();
        let first = t.values()[0][0];
        for v in t.values().iter().flatten() {
            assert!((v - first).abs() < 1e-12);
        }
    }

    fn random_table(m: usize, n: usize, seed: u64) -> LogPeriodogramTable {
        let mut rng = crate::rng::Seed(seed).rng();
        let values = (0..m)
            .map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        LogPeriodogramTable::from_values(values, 0.04).unwrap()
    }

    #[test]
    fn null_location_test_is_calibrated() {
        let mut rng = crate::rng::Seed(99).rng();
        let beta: Vec<f64> = (0..9).map(|j| (j as f64).sin()).collect();
        let sd = 0.2;
        let reps = 2000;
        let mut rejections = 0;
        for _ in 0..reps {
            let values = (0..9)
                .map(|_| {
                    beta.iter()
                        .map(|b| 1.0 + b + sd * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let t = LogPeriodogramTable::from_values(values, sd * sd).unwrap();
            if anova_decompose(&t, 0.05).unwrap().between_locations.significant {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((rate - 0.05).abs() < 0.02, "rate {rate}");
    }

    proptest! {
        #[test]
        fn decomposition_identity(m in 2usize..10, n in 2usize..10, seed in any::<u64>()) {
            let r = anova_decompose(&random_table(m, n, seed), 0.05).unwrap();
            let sum = r.ssl() + r.ssf() + r.ssier();
            prop_assert!((r.sst() - sum).abs() <= 1e-9 * r.sst().max(1.0));
            prop_assert!(r.ssl() >= 0.0 && r.ssf() >= 0.0 && r.ssier() >= 0.0);
        }

        #[test]
        fn shift_changes_nothing(seed in any::<u64>(), c in -100.0f64..100.0) {
            let t = random_table(5, 4, seed);
            let shifted = LogPeriodogramTable::from_values(
                t.values().iter().map(|r| r.iter().map(|v| v + c).collect()).collect(),
                t.sigma2(),
            ).unwrap();
            let a = anova_decompose(&t, 0.05).unwrap();
            let b = anova_decompose(&shifted, 0.05).unwrap();
            prop_assert!((a.ssl() - b.ssl()).abs() < 1e-8);
            prop_assert!((a.ssf() - b.ssf()).abs() < 1e-8);
            prop_assert!((a.ssier() - b.ssier()).abs() < 1e-8);
            prop_assert_eq!(a.verdict, b.verdict);
        }

        #[test]
        fn relabeling_locations_permutes_pairs(seed in any::<u64>(), rot in 1usize..5) {
            let t = random_table(5, 4, seed);
            let perm: Vec<usize> = (0..5).map(|i| (i + rot) % 5).collect();
            let permuted = LogPeriodogramTable::from_values(
                perm.iter().map(|&i| t.values()[i].clone()).collect(),
                t.sigma2(),
            ).unwrap();
            let a = anova_decompose(&t, 0.05).unwrap();
            let b = anova_decompose(&permuted, 0.05).unwrap();
            prop_assert!((a.ssl() - b.ssl()).abs() < 1e-9);
            prop_assert_eq!(a.verdict, b.verdict);
            let mut pa: Vec<f64> = posthoc_bonferroni(&t, 0.05).unwrap().iter().map(|c| c.p_value).collect();
            let mut pb: Vec<f64> = posthoc_bonferroni(&permuted, 0.05).unwrap().iter().map(|c| c.p_value).collect();
            pa.sort_by(f64::total_cmp);
            pb.sort_by(f64::total_cmp);
            for (x, y) in pa.iter().zip(&pb) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            // pair (i, k) of the permuted table is pair (perm[i], perm[k]) of the original
            let orig = posthoc_bonferroni(&t, 0.05).unwrap();
            for c in posthoc_bonferroni(&permuted, 0.05).unwrap() {
                let (i, k) = (perm[c.first - 1] + 1, perm[c.second - 1] + 1);
                let (i, k) = (i.min(k), i.max(k));
                let o = orig.iter().find(|o| o.first == i && o.second == k).unwrap();
                prop_assert!((o.statistic - c.statistic).abs() < 1e-9);
            }
        }
    }
}
