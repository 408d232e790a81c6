//! Location-dependent spectral estimates of a point pattern.
//!
//! The raw local transform at centre `u` is
//! `J_u(ω) = |W|^{-1/2} Σ_j g(u − x_j) exp(−i x_jᵀω)` for a compact taper `g`,
//! and the estimate `I_z(ω)` averages `|J_u(ω)|²` over centres `u` in the
//! smoothing box `z ± ρ/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Frequency, Location, PointPattern, Window};
use crate::quadrature::{integrate_quadrant, Tolerance};

/// Spatial taper applied to point displacements.
pub trait Taper {
    fn weight(&self, u: [f64; 2]) -> f64;
    /// Fourier transform of [`Taper::weight`]; assumed even in each coordinate.
    fn transfer(&self, omega: [f64; 2]) -> f64;
    /// Per-axis radius beyond which the weight vanishes.
    fn support_half_width(&self) -> f64;
}

/// Kernel used to smooth raw local periodograms over nearby centres.
pub trait Smoother {
    fn width(&self) -> f64;
    /// `lim ρ^d ∫ |w_ρ|²`.
    fn constant(&self) -> f64;
}

/// Product Bartlett box `g(u) = ∏ (4πh)^{-1/2} 1{|u_j| ≤ h}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub h: f64,
}

impl FilterSpec {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param(format!("filter half-width must be positive, got {h}")));
        }
        Ok(FilterSpec { h })
    }

    /// `B_g = ∫ |u| |g(u)| du`, Euclidean norm. Diagnostic only.
    pub fn filter_width(&self) -> f64 {
        let mean_radius_unit_square = (2f64.sqrt() + 1f64.asinh()) / 3.0;
        self.h * self.h * mean_radius_unit_square / PI
    }

    /// Nominal frequency resolution `π/h`.
    pub fn bandwidth(&self) -> f64 {
        PI / self.h
    }

    fn axis_transfer(&self, w: f64) -> f64 {
        let h = self.h;
        if w == 0.0 {
            (h / PI).sqrt()
        } else {
            (h * w).sin() / ((h * PI).sqrt() * w)
        }
    }
}

impl Taper for FilterSpec {
    fn weight(&self, u: [f64; 2]) -> f64 {
        if u[0].abs() <= self.h && u[1].abs() <= self.h {
            1.0 / (4.0 * PI * self.h)
        } else {
            0.0
        }
    }

    fn transfer(&self, omega: [f64; 2]) -> f64 {
        self.axis_transfer(omega[0]) * self.axis_transfer(omega[1])
    }

    fn support_half_width(&self) -> f64 {
        self.h
    }
}

pub fn filter_weight(u: [f64; 2], spec: &FilterSpec) -> f64 {
    spec.weight(u)
}

pub fn filter_transfer(omega: Frequency, spec: &FilterSpec) -> f64 {
    spec.transfer(omega.0)
}

/// Odd, so `z` itself is a node; coarser rules drift by more than 10% from
/// the limiting box average on patterns of about a thousand points.
pub const DEFAULT_QUADRATURE_NODES: usize = 11;

/// Daniell box smoother of width `ρ`, integrated with a `q × q` midpoint rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherSpec {
    pub rho: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

impl SmootherSpec {
    pub fn new(rho: f64) -> Result<Self> {
        Self::with_nodes(rho, DEFAULT_QUADRATURE_NODES)
    }

    pub fn with_nodes(rho: f64, nodes: usize) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::param(format!("smoother width must be positive, got {rho}")));
        }
        if nodes == 0 {
            return Err(Error::param("quadrature needs at least one node per axis"));
        }
        Ok(SmootherSpec { rho, nodes })
    }

    /// `W_ρ(u) = ∏ ρ^{-1} 1{|u_j| ≤ ρ/2}`.
    pub fn weight(&self, u: [f64; 2]) -> f64 {
        let half = 0.5 * self.rho;
        if u[0].abs() <= half && u[1].abs() <= half {
            1.0 / (self.rho * self.rho)
        } else {
            0.0
        }
    }

    /// Midpoint nodes of the smoothing box around `z` that lie in `window`.
    pub fn centres(&self, z: [f64; 2], window: &Window) -> Vec<[f64; 2]> {
        let q = self.nodes;
        let step = self.rho / q as f64;
        let offsets: Vec<f64> = (0..q)
            .map(|a| -0.5 * self.rho + (a as f64 + 0.5) * step)
            .collect();
        let mut out = Vec::with_capacity(q * q);
        for &dx in &offsets {
            for &dy in &offsets {
                let c = [z[0] + dx, z[1] + dy];
                if window.contains(c) {
                    out.push(c);
                }
            }
        }
        out
    }
}

impl Smoother for SmootherSpec {
    fn width(&self) -> f64 {
        self.rho
    }

    fn constant(&self) -> f64 {
        (2.0 * PI).powi(2)
    }
}

/// `J_z(ω) = A_z(ω) + i B_z(ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDft(pub Complex64);

impl LocalDft {
    pub fn real(&self) -> f64 {
        self.0.re
    }

    pub fn imag(&self) -> f64 {
        self.0.im
    }

    pub fn modulus_sq(&self) -> f64 {
        self.0.norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPeriodogram {
    pub z: Location,
    pub omega: Frequency,
    pub value: f64,
}

/// Exact sum over the pattern's points.
pub fn local_dft<T: Taper>(p: &PointPattern, z: Location, omega: Frequency, taper: &T) -> LocalDft {
    let norm = p.window().area().sqrt().recip();
    let [w1, w2] = omega.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for &[x, y] in p.points() {
        let g = taper.weight([z.0[0] - x, z.0[1] - y]);
        if g == 0.0 {
            continue;
        }
        let phase = -(x * w1 + y * w2);
        acc += Complex64::new(g * phase.cos(), g * phase.sin());
    }
    LocalDft(acc * norm)
}

/// Evaluates smoothed local periodograms of one pattern.
pub struct LocalEstimator<'a, T: Taper = FilterSpec> {
    pattern: &'a PointPattern,
    taper: T,
    smoother: SmootherSpec,
}

/// Tapered points seen from one smoothing centre.
struct CentreSupport {
    terms: Vec<(f64, [f64; 2])>,
}

impl<'a, T: Taper> LocalEstimator<'a, T> {
    pub fn new(pattern: &'a PointPattern, taper: T, smoother: SmootherSpec) -> Self {
        LocalEstimator {
            pattern,
            taper,
            smoother,
        }
    }

    fn supports(&self, z: Location) -> Result<Vec<CentreSupport>> {
        let centres = self.smoother.centres(z.0, self.pattern.window());
        if centres.is_empty() {
            return Err(Error::Degenerate(format!(
                "smoothing box around ({}, {}) misses the window",
                z.0[0], z.0[1]
            )));
        }
        let reach = self.taper.support_half_width() + 0.5 * self.smoother.rho;
        let nearby: Vec<[f64; 2]> = self
            .pattern
            .points()
            .iter()
            .copied()
            .filter(|p| (p[0] - z.0[0]).abs() <= reach && (p[1] - z.0[1]).abs() <= reach)
            .collect();
        Ok(centres
            .into_iter()
            .map(|c| CentreSupport {
                terms: nearby
                    .iter()
                    .filter_map(|&p| {
                        let g = self.taper.weight([c[0] - p[0], c[1] - p[1]]);
                        (g != 0.0).then_some((g, p))
                    })
                    .collect(),
            })
            .collect())
    }

    /// `I_z(ω_j)` for every frequency in `omegas`.
    pub fn row(&self, z: Location, omegas: &[Frequency]) -> Result<Vec<f64>> {
        let supports = self.supports(z)?;
        let norm = self.pattern.window().area().recip();
        let count = supports.len() as f64;
        Ok(omegas
            .iter()
            .map(|omega| {
                let [w1, w2] = omega.0;
                let total: f64 = supports
                    .iter()
                    .map(|s| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for &(g, [x, y]) in &s.terms {
                            let phase = -(x * w1 + y * w2);
                            acc += Complex64::new(g * phase.cos(), g * phase.sin());
                        }
                        acc.norm_sqr() * norm
                    })
                    .sum();
                total / count
            })
            .collect())
    }

    pub fn at(&self, z: Location, omega: Frequency) -> Result<LocalPeriodogram> {
        let value = self.row(z, &[omega])?[0];
        Ok(LocalPeriodogram { z, omega, value })
    }
}

pub fn local_periodogram(
    p: &PointPattern,
    z: Location,
    omega: Frequency,
    fspec: &FilterSpec,
    sspec: &SmootherSpec,
) -> Result<LocalPeriodogram> {
    LocalEstimator::new(p, *fspec, *sspec).at(z, omega)
}

/// Known variance of `ln I`: `16h²/(9ρ²)` for the Bartlett/Daniell pair.
pub fn residual_variance(fspec: &FilterSpec, sspec: &SmootherSpec) -> f64 {
    16.0 * fspec.h * fspec.h / (9.0 * sspec.rho * sspec.rho)
}

/// `(C/ρ²) ∫ |Γ(θ)|⁴ dθ` by adaptive quadrature over the plane.
pub fn residual_variance_numeric<T: Taper, S: Smoother>(taper: &T, smoother: &S) -> Result<f64> {
    let quadrant = integrate_quadrant(|a, b| taper.transfer([a, b]).powi(4), Tolerance::default())?;
    let rho = smoother.width();
    Ok(smoother.constant() / (rho * rho) * 4.0 * quadrant.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::simulate::sim_poisson;

    fn w70() -> Window {
        Window::square(70.0).unwrap()
    }

    #[test]
    fn weight_values() {
        let f = FilterSpec::new(3.0).unwrap();
        assert!((filter_weight([0.0, 0.0], &f) - 1.0 / (12.0 * PI)).abs() < 1e-15);
        assert!((filter_weight([0.0, 0.0], &f) - 0.02653).abs() < 1e-5);
        assert_eq!(filter_weight([3.01, 0.0], &f), 0.0);
        assert!(filter_weight([3.0, -3.0], &f) > 0.0);
    }

    #[test]
    fn transfer_values() {
        let f = FilterSpec::new(3.0).unwrap();
        let t0 = filter_transfer(Frequency([0.0, 0.0]), &f);
        assert!((t0 - 3.0 / PI).abs() < 1e-15);
        assert!((t0 - 0.9549).abs() < 1e-4);
        assert!(filter_transfer(Frequency([PI / 3.0, 0.4]), &f).abs() < 1e-15);
        assert!(filter_transfer(Frequency([0.2, PI / 3.0]), &f).abs() < 1e-15);
    }

    #[test]
    fn transfer_matches_numeric_fourier_transform() {
        let f = FilterSpec::new(2.0).unwrap();
        let w = 0.7;
        // ∫ g1(u) e^{-iuw} du over [-h, h]; the imaginary part vanishes
        let n = 20_000;
        let du = 2.0 * f.h / n as f64;
        let g1 = (4.0 * PI * f.h).powf(-0.5);
        let num: f64 = (0..n)
            .map(|k| {
                let u = -f.h + (k as f64 + 0.5) * du;
                g1 * (u * w).cos() * du
            })
            .sum();
        assert!((num * num - f.transfer([w, w])).abs() < 1e-8);
    }

    #[test]
    fn residual_variance_values() {
        let f3 = FilterSpec::new(3.0).unwrap();
        let v = residual_variance(&f3, &SmootherSpec::new(20.0).unwrap());
        assert!((v - 0.04).abs() < 1e-15);
        let v = residual_variance(&f3, &SmootherSpec::new(34.0).unwrap());
        assert_eq!(format!("{v:.4}"), "0.0138");
        let f1 = FilterSpec::new(1.0).unwrap();
        let s10 = SmootherSpec::new(10.0).unwrap();
        let closed = residual_variance(&f1, &s10);
        assert!((closed - 16.0 / 900.0).abs() < 1e-15);
        let num = residual_variance_numeric(&f1, &s10).unwrap();
        assert!(((num - closed) / closed).abs() < 1e-4);
    }

    #[test]
    fn filter_width_matches_midpoint_sum() {
        let f = FilterSpec::new(3.0).unwrap();
        let n = 400;
        let du = 2.0 * f.h / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let u = [-f.h + (i as f64 + 0.5) * du, -f.h + (j as f64 + 0.5) * du];
                acc += u[0].hypot(u[1]) * f.weight(u) * du * du;
            }
        }
        assert!((acc - f.filter_width()).abs() < 1e-4);
    }

    #[test]
    fn dft_of_empty_and_single_point() {
        let f = FilterSpec::new(3.0).unwrap();
        let z = Location([10.0, 10.0]);
        let omega = Frequency([0.3, -0.8]);
        let empty = PointPattern::empty(w70());
        assert_eq!(local_dft(&empty, z, omega, &f).modulus_sq(), 0.0);

        let u = [11.0, 8.5];
        let p = PointPattern::new(w70(), vec![u]).unwrap();
        let j = local_dft(&p, z, omega, &f);
        let w = f.weight([z.0[0] - u[0], z.0[1] - u[1]]);
        assert!((j.0.norm() - w / 70.0).abs() < 1e-15);
        let phase = -(u[0] * omega.0[0] + u[1] * omega.0[1]);
        let diff = (j.0.arg() - phase).rem_euclid(2.0 * PI);
        assert!(diff < 1e-12 || 2.0 * PI - diff < 1e-12);
    }

    #[test]
    fn dft_matches_brute_force() {
        let f = FilterSpec::new(3.0).unwrap();
        let pts = vec![[10.0, 10.0], [11.5, 9.0], [8.2, 12.9]];
        let p = PointPattern::new(w70(), pts.clone()).unwrap();
        let z = Location([10.3, 10.7]);
        let omega = Frequency([8.0 * PI / 20.0, PI / 20.0]);
        // independent oracle: real/imaginary parts accumulated separately
        let g = 1.0 / (4.0 * PI * 3.0);
        let (mut re, mut im) = (0.0, 0.0);
        for [x, y] in pts {
            if (z.0[0] - x).abs() <= 3.0 && (z.0[1] - y).abs() <= 3.0 {
                let t = x * omega.0[0] + y * omega.0[1];
                re += g * t.cos();
                im -= g * t.sin();
            }
        }
        re /= 70.0;
        im /= 70.0;
        let j = local_dft(&p, z, omega, &f);
        assert!((j.real() - re).abs() < 1e-12);
        assert!((j.imag() - im).abs() < 1e-12);
    }

    #[test]
    fn periodogram_empty_and_single_node() {
        let f = FilterSpec::new(3.0).unwrap();
        let z = Location([35.0, 35.0]);
        let omega = Frequency([PI / 20.0, PI / 20.0]);
        let s5 = SmootherSpec::new(20.0).unwrap();
        let empty = PointPattern::empty(w70());
        assert_eq!(local_periodogram(&empty, z, omega, &f, &s5).unwrap().value, 0.0);

        let p = sim_poisson(0.2, &w70(), Seed(1)).unwrap();
        let s1 = SmootherSpec::with_nodes(20.0, 1).unwrap();
        let i1 = local_periodogram(&p, z, omega, &f, &s1).unwrap().value;
        let raw = local_dft(&p, z, omega, &f).modulus_sq();
        assert!((i1 - raw).abs() <= 1e-15 * raw.max(1e-300));
    }

    #[test]
    fn box_outside_window_is_an_error() {
        let f = FilterSpec::new(3.0).unwrap();
        let s = SmootherSpec::new(4.0).unwrap();
        let p = PointPattern::empty(w70());
        assert!(local_periodogram(&p, Location([100.0, 100.0]), Frequency([0.1, 0.1]), &f, &s).is_err());
    }

    #[test]
    fn edge_centres_are_dropped() {
        let s = SmootherSpec::with_nodes(20.0, 5).unwrap();
        let c = s.centres([0.0, 35.0], &w70());
        // only the three columns with nonnegative x offsets survive
        assert_eq!(c.len(), 15);
    }

    #[test]
    fn default_quadrature_tracks_fine_grid() {
        let f = FilterSpec::new(3.0).unwrap();
        let coarse = SmootherSpec::new(20.0).unwrap();
        let fine = SmootherSpec::with_nodes(20.0, 41).unwrap();
        let omegas = crate::anova::DesignSpec::auto().frequencies().to_vec();
        let z = Location([35.0, 35.0]);
        let mut rel = 0.0;
        let reps = 20;
        for r in 0..reps {
            let p = sim_poisson(0.2, &w70(), Seed(31).derive(r)).unwrap();
            let a = LocalEstimator::new(&p, f, coarse).row(z, &omegas).unwrap();
            let b = LocalEstimator::new(&p, f, fine).row(z, &omegas).unwrap();
            rel += a
                .iter()
                .zip(&b)
                .map(|(x, y)| ((x - y) / y).abs())
                .sum::<f64>()
                / omegas.len() as f64;
        }
        let rel = rel / reps as f64;
        assert!(rel < 0.10, "mean relative deviation {rel}");
    }
}
