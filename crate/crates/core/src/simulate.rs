//! Seeded point-process generators.
//!
//! All intensities are per unit area. Each generator is a pure function of
//! its parameters and the [`Seed`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LatticeGrid, PointPattern, Window};
use crate::rng::Seed;

pub const DEFAULT_POINT_BUDGET: usize = 10_000_000;

/// Grid resolution used to spot-check intensity bounds.
const BOUND_CHECK_NODES: usize = 65;

type Evaluator = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Nonnegative intensity function with a known upper bound on a window.
#[derive(Clone)]
pub struct IntensityField {
    eval: Evaluator,
    upper_bound: f64,
}

impl fmt::Debug for IntensityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntensityField")
            .field("upper_bound", &self.upper_bound)
            .finish_non_exhaustive()
    }
}

impl IntensityField {
    /// Wraps `eval` with a caller-supplied bound, spot-checked on a dense grid over `window`.
    pub fn new<F>(eval: F, upper_bound: f64, window: &Window) -> Result<Self>
    where
        F: Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    {
        if !upper_bound.is_finite() || upper_bound < 0.0 {
            return Err(Error::param(format!(
                "intensity upper bound must be finite and nonnegative, got {upper_bound}"
            )));
        }
        let field = IntensityField {
            eval: Arc::new(eval),
            upper_bound,
        };
        let (max, at) = field.scan_max(window, BOUND_CHECK_NODES)?;
        if max > upper_bound * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "intensity {max} at ({}, {}) exceeds the declared upper bound {upper_bound}",
                at[0], at[1]
            )));
        }
        Ok(field)
    }

    /// Bound found by a `nodes × nodes` scan, inflated by `margin` (e.g. 0.1 for 10%).
    /// Approximate: a peak between grid nodes may be missed.
    pub fn scanned<F>(eval: F, window: &Window, nodes: usize, margin: f64) -> Result<Self>
    where
        F: Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    {
        let mut field = IntensityField {
            eval: Arc::new(eval),
            upper_bound: 0.0,
        };
        let (max, _) = field.scan_max(window, nodes.max(2))?;
        field.upper_bound = max * (1.0 + margin);
        Ok(field)
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::param(format!("constant intensity {value} is invalid")));
        }
        Ok(IntensityField {
            eval: Arc::new(move |_| value),
            upper_bound: value,
        })
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn eval(&self, s: [f64; 2]) -> f64 {
        (self.eval)(s)
    }

    fn checked(&self, s: [f64; 2]) -> Result<f64> {
        let v = self.eval(s);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::param(format!(
                "intensity evaluates to {v} at ({}, {})",
                s[0], s[1]
            )));
        }
        Ok(v)
    }

    fn scan_max(&self, window: &Window, nodes: usize) -> Result<(f64, [f64; 2])> {
        let lo = window.lower();
        let side = window.side_lengths();
        let mut best = (f64::NEG_INFINITY, lo);
        for i in 0..nodes {
            for j in 0..nodes {
                let s = [
                    lo[0] + side[0] * i as f64 / (nodes - 1) as f64,
                    lo[1] + side[1] * j as f64 / (nodes - 1) as f64,
                ];
                let v = self.checked(s)?;
                if v > best.0 {
                    best = (v, s);
                }
            }
        }
        Ok(best)
    }
}

/// Mean offspring count of a Thomas process.
#[derive(Debug, Clone)]
pub enum OffspringMean {
    Constant(f64),
    /// Evaluated at each parent location.
    Field(IntensityField),
}

impl OffspringMean {
    fn max(&self) -> f64 {
        match self {
            OffspringMean::Constant(m) => *m,
            OffspringMean::Field(f) => f.upper_bound(),
        }
    }
}

/// Parameters `(δ, τ, μ)` of a Thomas cluster process.
#[derive(Debug, Clone)]
pub struct ThomasParams {
    pub parent_intensity: f64,
    pub dispersion: f64,
    pub offspring: OffspringMean,
}

impl ThomasParams {
    pub fn new(parent_intensity: f64, dispersion: f64, mean_offspring: f64) -> Result<Self> {
        let p = ThomasParams {
            parent_intensity,
            dispersion,
            offspring: OffspringMean::Constant(mean_offspring),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_offspring_field(
        parent_intensity: f64,
        dispersion: f64,
        field: IntensityField,
    ) -> Result<Self> {
        let p = ThomasParams {
            parent_intensity,
            dispersion,
            offspring: OffspringMean::Field(field),
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.parent_intensity > 0.0 && self.parent_intensity.is_finite()) {
            return Err(Error::param("Thomas parent intensity must be positive"));
        }
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return Err(Error::param("Thomas dispersion must be positive"));
        }
        if let OffspringMean::Constant(m) = self.offspring {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::param("Thomas mean offspring count must be positive"));
            }
        }
        Ok(())
    }
}

/// Result of a sequential-inhibition run.
#[derive(Debug, Clone)]
pub struct SsiOutcome {
    pub pattern: PointPattern,
    /// Fewer than the requested number of points were placed.
    pub saturated: bool,
    pub attempts: usize,
}

/// Model assigned to one cell of a [`ZonalCompositeSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CellModel {
    Poisson {
        intensity: f64,
    },
    Thomas {
        parent_intensity: f64,
        dispersion: f64,
        mean_offspring: f64,
    },
    Ssi {
        inhibition_distance: f64,
        target_count: usize,
        #[serde(default = "default_ssi_attempts")]
        max_attempts: usize,
    },
}

pub fn default_ssi_attempts() -> usize {
    1_000_000
}

/// 3 × 3 mosaic of independently simulated stationary models. Cells are
/// numbered left to right, then bottom to top, starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalCompositeSpec {
    window: Window,
    cells: Vec<CellModel>,
}

impl ZonalCompositeSpec {
    pub fn new(window: Window, cells: Vec<CellModel>) -> Result<Self> {
        if cells.len() != 9 {
            return Err(Error::param(format!(
                "zonal composite needs a model for each of 9 cells, got {}",
                cells.len()
            )));
        }
        Ok(ZonalCompositeSpec { window, cells })
    }

    /// Thomas(0.046, 1, 4) in the bottom-right cell, SSI(r = 1.5) in the
    /// top-middle cell, Poisson elsewhere, all cells near 100 expected points
    /// on `[0, 70]²`.
    pub fn default_on(window: Window) -> Self {
        let (delta, tau, mu) = (0.046, 1.0, 4.0);
        let background = delta * mu;
        let cell_area = window.area() / 9.0;
        let target = (background * cell_area).round().max(1.0) as usize;
        let mut cells = vec![CellModel::Poisson { intensity: background }; 9];
        cells[2] = CellModel::Thomas {
            parent_intensity: delta,
            dispersion: tau,
            mean_offspring: mu,
        };
        cells[7] = CellModel::Ssi {
            inhibition_distance: 1.5,
            target_count: target,
            max_attempts: default_ssi_attempts(),
        };
        ZonalCompositeSpec { window, cells }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn cells(&self) -> &[CellModel] {
        &self.cells
    }

    pub fn cell_windows(&self) -> Vec<Window> {
        let grid = LatticeGrid::new(self.window, [3, 3]).expect("3x3 grid");
        let mut out = Vec::with_capacity(9);
        for i2 in 0..3 {
            for i1 in 0..3 {
                out.push(grid.cell_window(i1, i2).expect("cell in range"));
            }
        }
        out
    }
}

/// Generators sharing a point budget.
#[derive(Debug, Clone, Copy)]
pub struct Simulator {
    budget: usize,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator {
            budget: DEFAULT_POINT_BUDGET,
        }
    }
}

impl Simulator {
    pub fn with_budget(budget: usize) -> Self {
        Simulator { budget }
    }

    fn check_budget(&self, expected: f64) -> Result<()> {
        if !(expected <= self.budget as f64) {
            return Err(Error::BudgetExceeded {
                expected,
                budget: self.budget,
            });
        }
        Ok(())
    }

    pub fn poisson(&self, intensity: f64, window: &Window, seed: Seed) -> Result<PointPattern> {
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(Error::param(format!("Poisson intensity {intensity} is invalid")));
        }
        let mean = intensity * window.area();
        self.check_budget(mean)?;
        let mut rng = seed.rng();
        let n = poisson_count(mean, &mut rng);
        let points = (0..n).map(|_| uniform_point(window, &mut rng)).collect();
        Ok(PointPattern::from_trusted(*window, points))
    }

    /// Thinning of a dominating Poisson process at `field.upper_bound()`.
    pub fn poisson_inhomogeneous(
        &self,
        field: &IntensityField,
        window: &Window,
        seed: Seed,
    ) -> Result<PointPattern> {
        let bound = field.upper_bound();
        let mean = bound * window.area();
        self.check_budget(mean)?;
        let mut rng = seed.rng();
        let n = poisson_count(mean, &mut rng);
        let mut points = Vec::new();
        for _ in 0..n {
            let s = uniform_point(window, &mut rng);
            let v = field.checked(s)?;
            if v > bound * (1.0 + 1e-12) {
                return Err(Error::param(format!(
                    "intensity {v} at ({}, {}) exceeds the upper bound {bound}; supply a larger bound",
                    s[0], s[1]
                )));
            }
            if rng.random::<f64>() * bound < v {
                points.push(s);
            }
        }
        Ok(PointPattern::from_trusted(*window, points))
    }

    /// Parents live on the window dilated by 4τ so that clusters centred just
    /// outside still contribute offspring.
    pub fn thomas(&self, params: &ThomasParams, window: &Window, seed: Seed) -> Result<PointPattern> {
        params.validate()?;
        let tau = params.dispersion;
        let parent_window = window.dilate(4.0 * tau)?;
        let parent_mean = params.parent_intensity * parent_window.area();
        self.check_budget(parent_mean)?;
        self.check_budget(parent_mean * params.offspring.max())?;

        let mut rng = seed.rng();
        let displacement = Normal::new(0.0, tau).map_err(|e| Error::param(e.to_string()))?;
        let n_parents = poisson_count(parent_mean, &mut rng);
        let mut points = Vec::new();
        for _ in 0..n_parents {
            let parent = uniform_point(&parent_window, &mut rng);
            let mu = match &params.offspring {
                OffspringMean::Constant(m) => *m,
                OffspringMean::Field(f) => f.checked(parent)?,
            };
            let k = poisson_count(mu, &mut rng);
            for _ in 0..k {
                let s = [
                    parent[0] + displacement.sample(&mut rng),
                    parent[1] + displacement.sample(&mut rng),
                ];
                if window.contains(s) {
                    points.push(s);
                }
            }
        }
        Ok(PointPattern::from_trusted(*window, points))
    }

    /// Simple sequential inhibition: uniform proposals closer than `r` to
    /// an accepted point are discarded.
    pub fn ssi(
        &self,
        r: f64,
        target_count: usize,
        window: &Window,
        seed: Seed,
        max_attempts: usize,
    ) -> Result<SsiOutcome> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::param("inhibition distance must be positive"));
        }
        self.check_budget(target_count as f64)?;
        let mut rng = seed.rng();
        let mut index = HardCoreIndex::new(window, r);
        let mut points = Vec::with_capacity(target_count);
        let mut attempts = 0;
        while points.len() < target_count && attempts < max_attempts {
            attempts += 1;
            let s = uniform_point(window, &mut rng);
            if index.is_free(s, &points) {
                index.insert(s, points.len());
                points.push(s);
            }
        }
        Ok(SsiOutcome {
            saturated: points.len() < target_count,
            pattern: PointPattern::from_trusted(*window, points),
            attempts,
        })
    }

    pub fn cell(&self, model: &CellModel, window: &Window, seed: Seed) -> Result<PointPattern> {
        match *model {
            CellModel::Poisson { intensity } => self.poisson(intensity, window, seed),
            CellModel::Thomas {
                parent_intensity,
                dispersion,
                mean_offspring,
            } => {
                let params = ThomasParams::new(parent_intensity, dispersion, mean_offspring)?;
                self.thomas(&params, window, seed)
            }
            CellModel::Ssi {
                inhibition_distance,
                target_count,
                max_attempts,
            } => Ok(self
                .ssi(inhibition_distance, target_count, window, seed, max_attempts)?
                .pattern),
        }
    }

    /// Cell `k` is simulated from `seed.derive(k)`.
    pub fn zonal_composite(&self, spec: &ZonalCompositeSpec, seed: Seed) -> Result<PointPattern> {
        let mut parts = Vec::with_capacity(9);
        for (k, (model, cell)) in spec.cells().iter().zip(spec.cell_windows()).enumerate() {
            parts.push(self.cell(model, &cell, seed.derive(k as u64))?);
        }
        PointPattern::superpose(*spec.window(), parts)
    }
}

pub fn sim_poisson(intensity: f64, window: &Window, seed: Seed) -> Result<PointPattern> {
    Simulator::default().poisson(intensity, window, seed)
}

pub fn sim_poisson_inhom(field: &IntensityField, window: &Window, seed: Seed) -> Result<PointPattern> {
    Simulator::default().poisson_inhomogeneous(field, window, seed)
}

pub fn sim_thomas(params: &ThomasParams, window: &Window, seed: Seed) -> Result<PointPattern> {
    Simulator::default().thomas(params, window, seed)
}

pub fn sim_ssi(
    r: f64,
    target_count: usize,
    window: &Window,
    seed: Seed,
    max_attempts: usize,
) -> Result<SsiOutcome> {
    Simulator::default().ssi(r, target_count, window, seed, max_attempts)
}

pub fn sim_zonal_composite(spec: &ZonalCompositeSpec, seed: Seed) -> Result<PointPattern> {
    Simulator::default().zonal_composite(spec, seed)
}

fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only fails for non-positive or non-finite means
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

fn uniform_point<R: Rng>(window: &Window, rng: &mut R) -> [f64; 2] {
    let lo = window.lower();
    let side = window.side_lengths();
    [
        lo[0] + side[0] * rng.random::<f64>(),
        lo[1] + side[1] * rng.random::<f64>(),
    ]
}

/// Bucket grid for hard-core distance queries.
struct HardCoreIndex {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    reach: i64,
    r2: f64,
    buckets: Vec<Vec<usize>>,
}

impl HardCoreIndex {
    const MAX_BUCKETS: f64 = 1.0e6;

    fn new(window: &Window, r: f64) -> Self {
        let side = window.side_lengths();
        let cell = r.max((window.area() / Self::MAX_BUCKETS).sqrt());
        let dims = [
            ((side[0] / cell).ceil() as usize).max(1),
            ((side[1] / cell).ceil() as usize).max(1),
        ];
        HardCoreIndex {
            origin: window.lower(),
            cell,
            dims,
            reach: (r / cell).ceil() as i64,
            r2: r * r,
            buckets: vec![Vec::new(); dims[0] * dims[1]],
        }
    }

    fn coords(&self, s: [f64; 2]) -> [i64; 2] {
        let c = |k: usize| {
            (((s[k] - self.origin[k]) / self.cell).floor() as i64).clamp(0, self.dims[k] as i64 - 1)
        };
        [c(0), c(1)]
    }

    fn is_free(&self, s: [f64; 2], points: &[[f64; 2]]) -> bool {
        let [cx, cy] = self.coords(s);
        for gx in (cx - self.reach).max(0)..=(cx + self.reach).min(self.dims[0] as i64 - 1) {
            for gy in (cy - self.reach).max(0)..=(cy + self.reach).min(self.dims[1] as i64 - 1) {
                let bucket = &self.buckets[gx as usize + self.dims[0] * gy as usize];
                for &i in bucket {
                    let p = points[i];
                    let dx = p[0] - s[0];
                    let dy = p[1] - s[1];
                    if dx * dx + dy * dy < self.r2 {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, s: [f64; 2], idx: usize) {
        let [cx, cy] = self.coords(s);
        self.buckets[cx as usize + self.dims[0] * cy as usize].push(idx);
    }
}
