//! Local-spectrum tests of zonal stationarity for planar point patterns.
//!
//! The pipeline: simulate or load a [`PointPattern`], evaluate smoothed local
//! periodograms on a [`DesignSpec`] of locations and frequencies, take logs,
//! and run the known-variance two-way analysis in [`anova`]. [`compare`]
//! contrasts two patterns location by location; [`summaries`] holds Ripley's
//! K with simulation envelopes.

pub mod anova;
pub mod compare;
pub mod distributions;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod spectral;
pub mod study;
pub mod summaries;

pub use anova::{
    anova_decompose, build_log_table, posthoc_bonferroni, test_isotropy, AnovaReport, DesignSpec,
    LogPeriodogramTable, Verdict,
};
pub use compare::{compare_patterns, lambda_statistic, mc_null_quantiles, ComparisonReport};
pub use distributions::{chi2_cdf, chi2_quantile, chi2_sf};
pub use error::{Error, ErrorKind, Result};
pub use expr::Expr;
pub use geometry::{
    load_pattern, rasterize_counts, rescale_pattern, save_pattern, Frequency, LatticeGrid, Location,
    PointPattern, Window,
};
pub use rng::Seed;
pub use spectral::{
    filter_transfer, filter_weight, local_dft, local_periodogram, residual_variance, FilterSpec,
    SmootherSpec,
};
pub use study::{run_study, DesignConfig, ModelSpec, StudyConfig, StudyReport};
pub use summaries::{k_envelopes, k_estimate, KFunctionEstimate};
