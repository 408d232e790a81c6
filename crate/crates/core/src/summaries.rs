//! Ripley's K with translation edge correction and pointwise CSR envelopes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::rng::Seed;
use crate::simulate::sim_poisson;

pub const DEFAULT_ENVELOPE_SIMULATIONS: usize = 99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFunctionEstimate {
    pub radii: Vec<f64>,
    pub khat: Vec<f64>,
    /// `πr²`, the CSR value.
    pub theoretical: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_upper: Option<Vec<f64>>,
    #[serde(default)]
    pub n_sim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeExit {
    Below,
    Above,
}

impl KFunctionEstimate {
    /// Per radius: whether `khat` leaves the envelope, and on which side.
    /// All `None` without envelopes.
    pub fn exits(&self) -> Vec<Option<EnvelopeExit>> {
        match (&self.envelope_lower, &self.envelope_upper) {
            (Some(lo), Some(hi)) => self
                .khat
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&k, (&l, &h))| {
                    if k < l {
                        Some(EnvelopeExit::Below)
                    } else if k > h {
                        Some(EnvelopeExit::Above)
                    } else {
                        None
                    }
                })
                .collect(),
            _ => vec![None; self.radii.len()],
        }
    }

    /// The pattern "rejects CSR" when `khat` leaves the envelope at any radius.
    pub fn rejects_csr(&self) -> bool {
        self.exits().iter().any(Option::is_some)
    }

    /// Columns `r,khat,theo[,lo,hi]`.
    pub fn to_csv(&self) -> String {
        let envelopes = self.envelope_lower.as_ref().zip(self.envelope_upper.as_ref());
        let mut s = String::from(if envelopes.is_some() { "r,khat,theo,lo,hi\n" } else { "r,khat,theo\n" });
        for i in 0..self.radii.len() {
            let _ = write!(s, "{},{},{}", self.radii[i], self.khat[i], self.theoretical[i]);
            if let Some((lo, hi)) = envelopes {
                let _ = write!(s, ",{},{}", lo[i], hi[i]);
            }
            s.push('\n');
        }
        s
    }
}

/// `n` radii evenly spaced on `(0, r_max]`.
pub fn radius_grid(r_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(r_max > 0.0 && r_max.is_finite()) || n == 0 {
        return Err(Error::param(format!("radius grid needs r_max > 0 and n ≥ 1, got {r_max}, {n}")));
    }
    Ok((1..=n).map(|i| r_max * i as f64 / n as f64).collect())
}

/// Quarter of the shorter window side.
pub fn max_radius(window: &Window) -> f64 {
    let [a, b] = window.side_lengths();
    0.25 * a.min(b)
}

fn check_radii(radii: &[f64], window: &Window) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::param("no radii given"));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::param("radii must be finite and nonnegative"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("radii must be strictly increasing"));
    }
    let bound = max_radius(window);
    let last = radii[radii.len() - 1];
    if last > bound {
        return Err(Error::param(format!(
            "largest radius {last} exceeds a quarter of the shorter window side ({bound})"
        )));
    }
    Ok(())
}

/// Translation-corrected `K̂` at each radius, with `λ̂² = n(n−1)/|W|²`.
/// Patterns with fewer than two points give zeros.
fn khat_values(p: &PointPattern, radii: &[f64]) -> Vec<f64> {
    let n = p.len();
    if n < 2 {
        return vec![0.0; radii.len()];
    }
    let r_max = radii[radii.len() - 1];
    let window = p.window();
    let area = window.area();

    // (distance, 1/|W ∩ W_u|) for each ordered pair within r_max, found via a
    // bucket grid of cell side r_max
    let lo = window.lower();
    let [a, b] = window.side_lengths();
    let cell = r_max.max(1e-12);
    let nx = ((a / cell).floor() as usize).clamp(1, 4096);
    let ny = ((b / cell).floor() as usize).clamp(1, 4096);
    let index = |q: [f64; 2]| {
        let i = (((q[0] - lo[0]) / a * nx as f64) as usize).min(nx - 1);
        let j = (((q[1] - lo[1]) / b * ny as f64) as usize).min(ny - 1);
        (i, j)
    };
    let mut buckets = vec![Vec::new(); nx * ny];
    for (k, &q) in p.points().iter().enumerate() {
        let (i, j) = index(q);
        buckets[j * nx + i].push(k);
    }
    let pts = p.points();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|k| {
            let q = pts[k];
            let (i, j) = index(q);
            let mut local = Vec::new();
            for jj in j.saturating_sub(1)..=(j + 1).min(ny - 1) {
                for ii in i.saturating_sub(1)..=(i + 1).min(nx - 1) {
                    for &l in &buckets[jj * nx + ii] {
                        if l <= k {
                            continue;
                        }
                        let u = [pts[l][0] - q[0], pts[l][1] - q[1]];
                        let d = u[0].hypot(u[1]);
                        if d <= r_max {
                            // symmetric in u, so each unordered pair counts twice
                            local.push((d, 2.0 / window.overlap_with_shift(u)));
                        }
                    }
                }
            }
            local
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let scale = area * area / (n as f64 * (n as f64 - 1.0));
    let mut out = Vec::with_capacity(radii.len());
    let (mut acc, mut next) = (0.0, 0);
    for &r in radii {
        while next < pairs.len() && pairs[next].0 <= r {
            acc += pairs[next].1;
            next += 1;
        }
        out.push(acc * scale);
    }
    out
}

pub fn k_estimate(p: &PointPattern, radii: &[f64]) -> Result<KFunctionEstimate> {
    if p.len() < 2 {
        return Err(Error::Degenerate(format!(
            "K-function needs at least 2 points, pattern has {}",
            p.len()
        )));
    }
    check_radii(radii, p.window())?;
    Ok(KFunctionEstimate {
        radii: radii.to_vec(),
        khat: khat_values(p, radii),
        theoretical: radii.iter().map(|r| PI * r * r).collect(),
        envelope_lower: None,
        envelope_upper: None,
        n_sim: 0,
    })
}

/// `K̂` of `p` with pointwise min/max over `n_sim` CSR patterns at intensity
/// `λ̂ = n/|W|`. Simulation `k` uses `seed.derive(k)`.
pub fn k_envelopes(p: &PointPattern, radii: &[f64], n_sim: usize, seed: Seed) -> Result<KFunctionEstimate> {
    if n_sim < 2 {
        return Err(Error::param(format!("envelopes need at least 2 simulations, got {n_sim}")));
    }
    let mut est = k_estimate(p, radii)?;
    let window = *p.window();
    let intensity = p.len() as f64 / window.area();
    let sims: Vec<Vec<f64>> = (0..n_sim as u64)
        .into_par_iter()
        .map(|k| sim_poisson(intensity, &window, seed.derive(k)).map(|q| khat_values(&q, radii)))
        .collect::<Result<_>>()?;
    let mut lo = vec![f64::INFINITY; radii.len()];
    let mut hi = vec![f64::NEG_INFINITY; radii.len()];
    for s in &sims {
        for (i, &v) in s.iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    est.envelope_lower = Some(lo);
    est.envelope_upper = Some(hi);
    est.n_sim = n_sim;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::sim_ssi;
    use proptest::prelude::*;

    fn w70() -> Window {
        Window::square(70.0).unwrap()
    }

    /// Direct double sum over ordered pairs.
    fn brute(p: &PointPattern, r: f64) -> f64 {
        let w = p.window();
        let n = p.len() as f64;
        let mut s = 0.0;
        for (i, a) in p.points().iter().enumerate() {
            for (j, b) in p.points().iter().enumerate() {
                if i == j {
                    continue;
                }
                let u = [b[0] - a[0], b[1] - a[1]];
                if u[0].hypot(u[1]) <= r {
                    let [sa, sb] = w.side_lengths();
                    s += 1.0 / ((sa - u[0].abs()) * (sb - u[1].abs()));
                }
            }
        }
        s * w.area() * w.area() / (n * (n - 1.0))
    }

    #[test]
    fn two_points() {
        let p = PointPattern::new(w70(), vec![[10.0, 10.0], [13.0, 14.0]]).unwrap();
        let k = k_estimate(&p, &[1.0, 4.99, 5.0, 10.0]).unwrap();
        assert_eq!(k.khat[0], 0.0);
        assert_eq!(k.khat[1], 0.0);
        let expected = 2.0 / (67.0 * 66.0) * 4900.0 * 4900.0 / 2.0;
        assert!((k.khat[2] - expected).abs() < 1e-9 * expected);
        assert_eq!(k.khat[2], k.khat[3]);
    }

    #[test]
    fn validates_inputs() {
        let one = PointPattern::new(w70(), vec![[1.0, 1.0]]).unwrap();
        assert!(matches!(k_estimate(&one, &[1.0]), Err(Error::Degenerate(_))));
        let p = sim_poisson(0.05, &w70(), Seed(1)).unwrap();
        assert!(k_estimate(&p, &[1.0, 18.0]).is_err());
        assert!(k_estimate(&p, &[2.0, 1.0]).is_err());
        assert!(k_estimate(&p, &[]).is_err());
        assert!(k_envelopes(&p, &[1.0], 1, Seed(1)).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let p = sim_poisson(0.1, &w70(), Seed(4)).unwrap();
        let radii = [0.5, 2.0, 7.5, 17.5];
        let k = k_estimate(&p, &radii).unwrap();
        for (i, &r) in radii.iter().enumerate() {
            let b = brute(&p, r);
            assert!((k.khat[i] - b).abs() <= 1e-9 * b.max(1.0), "r={r}");
        }
    }

    #[test]
    fn envelopes_are_deterministic_and_ordered() {
        let p = sim_poisson(0.05, &w70(), Seed(9)).unwrap();
        let radii = radius_grid(10.0, 10).unwrap();
        let a = k_envelopes(&p, &radii, 19, Seed(2)).unwrap();
        let b = k_envelopes(&p, &radii, 19, Seed(2)).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = (a.envelope_lower.unwrap(), a.envelope_upper.unwrap());
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
    }

    #[test]
    fn inhibition_falls_below_theory() {
        let p = sim_ssi(1.5, 300, &w70(), Seed(3), 1_000_000).unwrap().pattern;
        let k = k_estimate(&p, &[1.0, 1.45]).unwrap();
        assert_eq!(k.khat, vec![0.0, 0.0]);
    }

    #[test]
    fn csv_layout() {
        let p = PointPattern::new(w70(), vec![[10.0, 10.0], [13.0, 14.0]]).unwrap();
        let k = k_estimate(&p, &[1.0, 2.0]).unwrap();
        let csv = k.to_csv();
        assert!(csv.starts_with("r,khat,theo\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn monotone_nonnegative_and_label_free(
            pts in prop::collection::vec((0.0f64..70.0, 0.0f64..70.0), 2..60),
            shift in 0usize..60,
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let p = PointPattern::new(w70(), pts.clone()).unwrap();
            let radii = radius_grid(17.5, 20).unwrap();
            let mut with_zero = vec![0.0];
            with_zero.extend(&radii);
            let k = k_estimate(&p, &with_zero).unwrap();
            prop_assert!(k.khat.iter().all(|v| *v >= 0.0));
            prop_assert!(k.khat.windows(2).all(|w| w[1] >= w[0]));
            // distinct continuous points: no pair at distance 0
            prop_assert_eq!(k.khat[0], 0.0);
            let mut rotated = pts.clone();
            rotated.rotate_left(shift % pts.len());
            let q = PointPattern::new(w70(), rotated).unwrap();
            let kq = k_estimate(&q, &with_zero).unwrap();
            for (a, b) in k.khat.iter().zip(&kq.khat) {
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
