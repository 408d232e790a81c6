//! Replicated simulation studies: simulate, test, tally rejections.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anova::{anova_decompose, build_log_table, DesignSpec, Verdict, DEFAULT_ALPHA};
use crate::error::{Error, ErrorKind, Result};
use crate::expr::Expr;
use crate::geometry::{Frequency, Location, PointPattern, Window};
use crate::rng::Seed;
use crate::simulate::{
    default_ssi_attempts, CellModel, IntensityField, Simulator, ThomasParams, ZonalCompositeSpec,
    DEFAULT_POINT_BUDGET,
};
use crate::spectral::{residual_variance, FilterSpec, SmootherSpec, DEFAULT_QUADRATURE_NODES};

/// Grid used to bound an intensity expression when no bound is given. Fine
/// enough to resolve `sin(4πx)` on a 70-unit window; still approximate.
pub const BOUND_SCAN_NODES: usize = 1025;
pub const BOUND_SCAN_MARGIN: f64 = 0.1;

/// A point-process model, as written in JSON configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Poisson {
        intensity: f64,
    },
    InhomPoisson {
        /// Expression over `x`, `y`; see [`crate::expr`].
        intensity: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper_bound: Option<f64>,
    },
    Thomas {
        parent_intensity: f64,
        dispersion: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_offspring: Option<f64>,
        /// Offspring mean as an expression of the parent location.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_offspring_expr: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper_bound: Option<f64>,
    },
    Ssi {
        inhibition_distance: f64,
        target_count: usize,
        #[serde(default = "default_ssi_attempts")]
        max_attempts: usize,
    },
    /// The default 3 × 3 composite of [`ZonalCompositeSpec::default_on`].
    ZonalDefault,
    Zonal {
        cells: Vec<CellModel>,
    },
}

/// A model with its intensity fields compiled for a window.
#[derive(Debug, Clone)]
pub enum PreparedModel {
    Poisson(f64),
    InhomPoisson(IntensityField),
    Thomas(ThomasParams),
    Ssi {
        r: f64,
        target_count: usize,
        max_attempts: usize,
    },
    Zonal(ZonalCompositeSpec),
}

fn compile_field(source: &str, bound: Option<f64>, window: &Window) -> Result<IntensityField> {
    let e = Expr::parse(source)?;
    let f = move |s: [f64; 2]| e.eval(s[0], s[1]);
    match bound {
        Some(b) => IntensityField::new(f, b, window),
        None => IntensityField::scanned(f, window, BOUND_SCAN_NODES, BOUND_SCAN_MARGIN),
    }
}

impl ModelSpec {
    pub fn prepare(&self, window: &Window) -> Result<PreparedModel> {
        Ok(match self {
            ModelSpec::Poisson { intensity } => PreparedModel::Poisson(*intensity),
            ModelSpec::InhomPoisson {
                intensity,
                upper_bound,
            } => PreparedModel::InhomPoisson(compile_field(intensity, *upper_bound, window)?),
            ModelSpec::Thomas {
                parent_intensity,
                dispersion,
                mean_offspring,
                mean_offspring_expr,
                upper_bound,
            } => {
                let params = match (mean_offspring, mean_offspring_expr) {
                    (Some(mu), None) => ThomasParams::new(*parent_intensity, *dispersion, *mu)?,
                    (None, Some(src)) => {
                        // offspring means are read at parent locations, which
                        // range over the dilated window
                        let parents = window.dilate(4.0 * dispersion.abs())?;
                        let field = compile_field(src, *upper_bound, &parents)?;
                        ThomasParams::with_offspring_field(*parent_intensity, *dispersion, field)?
                    }
                    _ => {
                        return Err(Error::param(
                            "Thomas model needs exactly one of mean_offspring and mean_offspring_expr",
                        ))
                    }
                };
                PreparedModel::Thomas(params)
            }
            ModelSpec::Ssi {
                inhibition_distance,
                target_count,
                max_attempts,
            } => PreparedModel::Ssi {
                r: *inhibition_distance,
                target_count: *target_count,
                max_attempts: *max_attempts,
            },
            ModelSpec::ZonalDefault => PreparedModel::Zonal(ZonalCompositeSpec::default_on(*window)),
            ModelSpec::Zonal { cells } => PreparedModel::Zonal(ZonalCompositeSpec::new(*window, cells.clone())?),
        })
    }
}

impl PreparedModel {
    pub fn simulate(&self, sim: &Simulator, window: &Window, seed: Seed) -> Result<PointPattern> {
        match self {
            PreparedModel::Poisson(l) => sim.poisson(*l, window, seed),
            PreparedModel::InhomPoisson(f) => sim.poisson_inhomogeneous(f, window, seed),
            PreparedModel::Thomas(p) => sim.thomas(p, window, seed),
            PreparedModel::Ssi {
                r,
                target_count,
                max_attempts,
            } => Ok(sim.ssi(*r, *target_count, window, seed, *max_attempts)?.pattern),
            PreparedModel::Zonal(spec) => sim.zonal_composite(spec, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DesignPreset {
    /// Nine locations at `(i₁, i₂)/6` of the window sides, `i ∈ {1, 3, 5}`,
    /// and the nine frequencies `{1, 8, 15}·π/20` per axis.
    #[default]
    Auto,
    /// Quadrant centroids with the auto frequencies.
    Quadrants,
}

/// `"auto"`, `"quadrants"`, or explicit coordinate lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DesignConfig {
    Preset(DesignPreset),
    Explicit {
        locations: Vec<[f64; 2]>,
        /// Angular frequencies; `frequencies_over_pi` gives them in units of π.
        #[serde(default)]
        frequencies: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        frequencies_over_pi: Option<Vec<[f64; 2]>>,
    },
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig::Preset(DesignPreset::Auto)
    }
}

impl DesignConfig {
    /// Spacing minima are `ρ` for locations and `π/h` for frequencies.
    pub fn resolve(&self, window: &Window, fspec: &FilterSpec, sspec: &SmootherSpec) -> Result<DesignSpec> {
        let (dl, df) = (sspec.rho, fspec.bandwidth());
        match self {
            DesignConfig::Preset(DesignPreset::Auto) => Ok(DesignSpec::auto_on(window, dl, df)),
            DesignConfig::Preset(DesignPreset::Quadrants) => Ok(DesignSpec::quadrants_on(window, dl, df)),
            DesignConfig::Explicit {
                locations,
                frequencies,
                frequencies_over_pi,
            } => {
                let freqs = match (frequencies, frequencies_over_pi) {
                    (Some(f), None) => f.clone(),
                    (None, Some(f)) => f.iter().map(|w| [w[0] * PI, w[1] * PI]).collect(),
                    (None, None) => DesignSpec::auto().frequencies().iter().map(|f| f.0).collect(),
                    (Some(_), Some(_)) => {
                        return Err(Error::param(
                            "give frequencies or frequencies_over_pi, not both",
                        ))
                    }
                };
                for l in locations {
                    if !window.contains(*l) {
                        return Err(Error::param(format!(
                            "design location ({}, {}) lies outside the window",
                            l[0], l[1]
                        )));
                    }
                }
                DesignSpec::new(
                    locations.iter().map(|&l| Location(l)).collect(),
                    freqs.into_iter().map(Frequency).collect(),
                    dl,
                    df,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyOutputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<PathBuf>,
}

fn default_window() -> Window {
    Window::square(70.0).expect("valid")
}
fn default_h() -> f64 {
    3.0
}
fn default_rho() -> f64 {
    20.0
}
fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_replicates() -> usize {
    100
}
fn default_seed() -> Seed {
    Seed(1)
}
fn default_budget() -> usize {
    DEFAULT_POINT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub model: ModelSpec,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: Seed,
    /// 1-based index of a frequency to drop in a second analysis of the same replicates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_frequency: Option<usize>,
    #[serde(default = "default_budget")]
    pub point_budget: usize,
    /// Free text, e.g. how parameters were adapted from a published setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default)]
    pub outputs: StudyOutputs,
}

impl StudyConfig {
    pub fn new(model: ModelSpec) -> Self {
        StudyConfig {
            model,
            window: default_window(),
            design: DesignConfig::default(),
            h: default_h(),
            rho: default_rho(),
            nodes: default_nodes(),
            alpha: default_alpha(),
            replicates: default_replicates(),
            seed: default_seed(),
            drop_frequency: None,
            point_budget: default_budget(),
            note: None,
            outputs: StudyOutputs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: Seed,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi2_locations: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi2_interaction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_dropped: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Rejection tally for one frequency set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub frequency_count: usize,
    pub df_locations: usize,
    pub df_frequencies: usize,
    pub df_interaction: usize,
    pub rejections: usize,
    pub completed: usize,
    pub errors: usize,
    /// Rejections over all replicates; errored replicates count as non-rejections.
    pub rejection_rate: f64,
    /// Rejections over completed replicates.
    pub rejection_rate_completed: f64,
    pub stationary_compatible: usize,
    pub uniformly_modulated: usize,
    pub nonuniformly_modulated: usize,
}

impl StudySummary {
    fn tally(m: usize, n: usize, verdicts: &[Option<Verdict>]) -> Self {
        let count = |v: Verdict| verdicts.iter().filter(|x| **x == Some(v)).count();
        let stationary_compatible = count(Verdict::StationaryCompatible);
        let uniformly_modulated = count(Verdict::UniformlyModulatedNonstationary);
        let nonuniformly_modulated = count(Verdict::NonuniformlyModulatedNonstationary);
        let completed = stationary_compatible + uniformly_modulated + nonuniformly_modulated;
        let rejections = uniformly_modulated + nonuniformly_modulated;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        StudySummary {
            frequency_count: n,
            df_locations: m - 1,
            df_frequencies: n - 1,
            df_interaction: (m - 1) * (n - 1),
            rejections,
            completed,
            errors: verdicts.len() - completed,
            rejection_rate: ratio(rejections, verdicts.len()),
            rejection_rate_completed: ratio(rejections, completed),
            stationary_compatible,
            uniformly_modulated,
            nonuniformly_modulated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub sigma2: f64,
    pub location_count: usize,
    pub warnings: Vec<String>,
    pub mean_points: f64,
    pub full: StudySummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<StudySummary>,
    pub replicates: Vec<ReplicateOutcome>,
}

impl StudyReport {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", serde_json::to_string(&c.model).unwrap_or_default());
        if let Some(note) = &c.note {
            let _ = writeln!(s, "note: {note}");
        }
        let _ = writeln!(
            s,
            "h = {}, rho = {}, nodes = {}, sigma2 = {:.6}, alpha = {}, replicates = {}, seed = {}",
            c.h, c.rho, c.nodes, self.sigma2, c.alpha, c.replicates, c.seed.0
        );
        let _ = writeln!(s, "mean points per pattern: {:.1}", self.mean_points);
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        let mut line = |label: &str, t: &StudySummary| {
            let _ = writeln!(
                s,
                "{label}: rejection ratio {:.2} ({} of {}; {} errored, {:.2} of completed) \
                 [df_L = {}, df_F = {}, df_IEr = {}; verdicts: {} stationary, {} uniform, {} nonuniform]",
                t.rejection_rate,
                t.rejections,
                c.replicates,
                t.errors,
                t.rejection_rate_completed,
                t.df_locations,
                t.df_frequencies,
                t.df_interaction,
                t.stationary_compatible,
                t.uniformly_modulated,
                t.nonuniformly_modulated
            );
        };
        line(&format!("all {} frequencies", self.full.frequency_count), &self.full);
        if let (Some(d), Some(k)) = (&self.dropped, c.drop_frequency) {
            line(&format!("without w{k}"), d);
        }
        let errors: Vec<_> = self.replicates.iter().filter_map(|r| r.error.as_ref().map(|e| (r.index, e))).collect();
        for (i, e) in errors.iter().take(5) {
            let _ = writeln!(s, "replicate {i}: {e}");
        }
        if errors.len() > 5 {
            let _ = writeln!(s, "... {} more errored replicates", errors.len() - 5);
        }
        s
    }
}

/// Runs the study. Replicate `r` is simulated from `seed.derive(r)`; numeric
/// failures of single replicates are recorded, budget and configuration
/// errors abort.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    if config.replicates == 0 {
        return Err(Error::param("a study needs at least one replicate"));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    let fspec = FilterSpec::new(config.h)?;
    let sspec = SmootherSpec::with_nodes(config.rho, config.nodes)?;
    let design = config.design.resolve(&config.window, &fspec, &sspec)?;
    let n = design.frequencies().len();
    if let Some(k) = config.drop_frequency {
        design.drop_frequency(k)?;
    }
    let model = config.model.prepare(&config.window)?;
    let sim = Simulator::with_budget(config.point_budget);

    let outcomes: Vec<ReplicateOutcome> = (0..config.replicates)
        .into_par_iter()
        .map(|r| -> Result<ReplicateOutcome> {
            let seed = config.seed.derive(r as u64);
            let pattern = model.simulate(&sim, &config.window, seed)?;
            let mut out = ReplicateOutcome {
                index: r + 1,
                seed,
                points: pattern.len(),
                verdict: None,
                chi2_locations: None,
                chi2_interaction: None,
                verdict_dropped: None,
                error: None,
            };
            let analysed = build_log_table(&pattern, &design, &fspec, &sspec).and_then(|table| {
                let report = anova_decompose(&table, config.alpha)?;
                let dropped = match config.drop_frequency {
                    Some(k) => Some(anova_decompose(&table.drop_frequency(k)?, config.alpha)?.verdict),
                    None => None,
                };
                Ok((report, dropped))
            });
            match analysed {
                Ok((report, dropped)) => {
                    out.verdict = Some(report.verdict);
                    out.chi2_locations = Some(report.between_locations.chi2);
                    out.chi2_interaction = Some(report.interaction_residual.chi2);
                    out.verdict_dropped = dropped;
                }
                Err(e) if e.kind() == ErrorKind::Numeric => out.error = Some(e.to_string()),
                Err(e) => return Err(e),
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let m = design.locations().len();
    let verdicts: Vec<_> = outcomes.iter().map(|o| o.verdict).collect();
    let dropped = config.drop_frequency.map(|_| {
        let v: Vec<_> = outcomes.iter().map(|o| o.verdict_dropped).collect();
        StudySummary::tally(m, n - 1, &v)
    });
    Ok(StudyReport {
        sigma2: residual_variance(&fspec, &sspec),
        location_count: m,
        warnings: design.spacing_warnings(),
        mean_points: outcomes.iter().map(|o| o.points as f64).sum::<f64>() / outcomes.len() as f64,
        full: StudySummary::tally(m, n, &verdicts),
        dropped,
        replicates: outcomes,
        config: config.clone(),
    })
}
