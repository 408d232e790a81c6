//! Windows, patterns, lattices and the pattern CSV format.
//!
//! The CSV layout is
//!
//! ```text
//! # any comment
//! # window: 0 0 70 70
//! x,y
//! 1.5,2.0
//! 3.0,4.0
//! ```
//!
//! Comment lines start with `#`. The optional `# window:` line declares the
//! observation window as `x0 y0 x1 y1`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangular observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWindow", into = "RawWindow")]
pub struct Window {
    lower: [f64; 2],
    upper: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct RawWindow {
    lower: [f64; 2],
    upper: [f64; 2],
}

impl TryFrom<RawWindow> for Window {
    type Error = Error;
    fn try_from(raw: RawWindow) -> Result<Self> {
        Window::new(raw.lower, raw.upper)
    }
}

impl From<Window> for RawWindow {
    fn from(w: Window) -> Self {
        RawWindow {
            lower: w.lower,
            upper: w.upper,
        }
    }
}

impl Window {
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        for k in 0..2 {
            if !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::InvalidWindow(format!(
                    "non-finite bound on axis {k}: [{}, {}]",
                    lower[k], upper[k]
                )));
            }
            if upper[k] <= lower[k] {
                return Err(Error::InvalidWindow(format!(
                    "upper bound {} not above lower bound {} on axis {k}",
                    upper[k], lower[k]
                )));
            }
        }
        let w = Window { lower, upper };
        if !w.area().is_finite() {
            return Err(Error::InvalidWindow("area overflows".into()));
        }
        Ok(w)
    }

    /// `[0, side]²`.
    pub fn square(side: f64) -> Result<Self> {
        Window::new([0.0, 0.0], [side, side])
    }

    pub fn lower(&self) -> [f64; 2] {
        self.lower
    }

    pub fn upper(&self) -> [f64; 2] {
        self.upper
    }

    pub fn side_lengths(&self) -> [f64; 2] {
        [
            self.upper[0] - self.lower[0],
            self.upper[1] - self.lower[1],
        ]
    }

    pub fn area(&self) -> f64 {
        let [a, b] = self.side_lengths();
        a * b
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.lower[0] + self.upper[0]),
            0.5 * (self.lower[1] + self.upper[1]),
        ]
    }

    /// Closed containment test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.lower[k] && p[k] <= self.upper[k])
    }

    /// The window grown by `margin` on every side.
    pub fn dilate(&self, margin: f64) -> Result<Self> {
        Window::new(
            [self.lower[0] - margin, self.lower[1] - margin],
            [self.upper[0] + margin, self.upper[1] + margin],
        )
    }

    /// Area of the intersection of this window with itself shifted by `shift`.
    pub fn overlap_with_shift(&self, shift: [f64; 2]) -> f64 {
        let [a, b] = self.side_lengths();
        (a - shift[0].abs()).max(0.0) * (b - shift[1].abs()).max(0.0)
    }
}

/// A test location `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Location(pub [f64; 2]);

/// An angular frequency pair `ω` in radians per length unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Frequency(pub [f64; 2]);

impl Frequency {
    pub fn norm(&self) -> f64 {
        self.0[0].hypot(self.0[1])
    }

    pub fn neg(&self) -> Frequency {
        Frequency([-self.0[0], -self.0[1]])
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Finite planar point set observed on a [`Window`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    window: Window,
    points: Vec<[f64; 2]>,
}

impl PointPattern {
    pub fn new(window: Window, points: Vec<[f64; 2]>) -> Result<Self> {
        for (i, &p) in points.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::param(format!("point #{i} has non-finite coordinates")));
            }
            if !window.contains(p) {
                return Err(Error::OutOfWindow {
                    line: i + 1,
                    x: p[0],
                    y: p[1],
                });
            }
        }
        Ok(PointPattern { window, points })
    }

    pub fn empty(window: Window) -> Self {
        PointPattern {
            window,
            points: Vec::new(),
        }
    }

    /// Generators produce points inside the window by construction.
    pub(crate) fn from_trusted(window: Window, points: Vec<[f64; 2]>) -> Self {
        debug_assert!(points.iter().all(|&p| window.contains(p)));
        PointPattern { window, points }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points that fall inside `sub`, observed on `sub`.
    pub fn restrict(&self, sub: Window) -> PointPattern {
        let points = self
            .points
            .iter()
            .copied()
            .filter(|&p| sub.contains(p))
            .collect();
        PointPattern {
            window: sub,
            points,
        }
    }

    /// Union of patterns living on sub-windows of `window`.
    pub fn superpose(window: Window, parts: impl IntoIterator<Item = PointPattern>) -> Result<Self> {
        let mut points = Vec::new();
        for part in parts {
            points.extend_from_slice(&part.points);
        }
        PointPattern::new(window, points)
    }

    pub fn into_points(self) -> Vec<[f64; 2]> {
        self.points
    }
}

/// Regular `n₁ × n₂` partition of a window into quadrats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeGrid {
    window: Window,
    cells: [usize; 2],
}

impl LatticeGrid {
    pub fn new(window: Window, cells: [usize; 2]) -> Result<Self> {
        if cells[0] == 0 || cells[1] == 0 {
            return Err(Error::param("lattice needs at least one cell per axis"));
        }
        Ok(LatticeGrid { window, cells })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn cells_per_axis(&self) -> [usize; 2] {
        self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn spacing(&self) -> [f64; 2] {
        let [a, b] = self.window.side_lengths();
        [a / self.cells[0] as f64, b / self.cells[1] as f64]
    }

    /// Rectangle of cell `(i1, i2)`.
    pub fn cell_window(&self, i1: usize, i2: usize) -> Result<Window> {
        if i1 >= self.cells[0] || i2 >= self.cells[1] {
            return Err(Error::param(format!("cell ({i1}, {i2}) out of range")));
        }
        let lo = self.window.lower();
        let up = self.window.upper();
        let d = self.spacing();
        let edge = |k: usize, i: usize| {
            if i == self.cells[k] {
                up[k]
            } else {
                lo[k] + i as f64 * d[k]
            }
        };
        Window::new(
            [edge(0, i1), edge(1, i2)],
            [edge(0, i1 + 1), edge(1, i2 + 1)],
        )
    }

    /// Cell holding `p`. Cells are half-open `[lo, hi)` except the last one
    /// on each axis, which is closed.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        if !self.window.contains(p) {
            return None;
        }
        let lo = self.window.lower();
        let d = self.spacing();
        let idx = |k: usize| {
            let raw = ((p[k] - lo[k]) / d[k]).floor();
            let mut i = (raw.max(0.0) as usize).min(self.cells[k] - 1);
            // guard against rounding in the division
            let start = lo[k] + i as f64 * d[k];
            if p[k] < start && i > 0 {
                i -= 1;
            } else if i + 1 < self.cells[k] && p[k] >= lo[k] + (i + 1) as f64 * d[k] {
                i += 1;
            }
            i
        };
        Some((idx(0), idx(1)))
    }
}

/// Quadrat counts `N_i`, indexed `[i1][i2]` (first index along x).
pub fn rasterize_counts(p: &PointPattern, grid: &LatticeGrid) -> Vec<Vec<usize>> {
    let [n1, n2] = grid.cells_per_axis();
    let mut counts = vec![vec![0usize; n2]; n1];
    for &pt in p.points() {
        if let Some((i1, i2)) = grid.cell_of(pt) {
            counts[i1][i2] += 1;
        }
    }
    counts
}

/// Per-axis affine map of `p` onto `target`.
pub fn rescale_pattern(p: &PointPattern, target: Window) -> Result<PointPattern> {
    let src = p.window();
    let (slo, sside) = (src.lower(), src.side_lengths());
    let (tlo, tside) = (target.lower(), target.side_lengths());
    let tup = target.upper();
    let map = |v: f64, k: usize| {
        let t = tlo[k] + (v - slo[k]) / sside[k] * tside[k];
        // keep boundary points on the boundary despite rounding
        t.clamp(tlo[k], tup[k])
    };
    let points = p
        .points()
        .iter()
        .map(|&[x, y]| [map(x, 0), map(y, 1)])
        .collect();
    Ok(PointPattern::from_trusted(target, points))
}

/// Parse a pattern from CSV text.
///
/// Window precedence: `expected_window`, then the `# window:` line, then the
/// bounding box of the points (the unit square for an empty file).
pub fn read_pattern<R: Read>(reader: R, expected_window: Option<Window>) -> Result<PointPattern> {
    let reader = BufReader::new(reader);
    let mut declared: Option<Window> = None;
    let mut seen_header = false;
    let mut rows: Vec<(usize, [f64; 2])> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(comment) = text.strip_prefix('#') {
            if let Some(spec) = comment.trim().strip_prefix("window:") {
                declared = Some(parse_window_line(spec, line_no)?);
            }
            continue;
        }
        if !seen_header && rows.is_empty() {
            let lower = text.to_ascii_lowercase();
            let cols: Vec<&str> = lower.split(',').map(str::trim).collect();
            if cols == ["x", "y"] {
                seen_header = true;
                continue;
            }
        }
        rows.push((line_no, parse_row(text, line_no)?));
    }

    let window = match (expected_window, declared) {
        (Some(w), _) => w,
        (None, Some(w)) => w,
        (None, None) => bounding_window(&rows)?,
    };
    let mut points = Vec::with_capacity(rows.len());
    for (line, p) in rows {
        if !window.contains(p) {
            return Err(Error::OutOfWindow {
                line,
                x: p[0],
                y: p[1],
            });
        }
        points.push(p);
    }
    Ok(PointPattern { window, points })
}

pub fn load_pattern(path: impl AsRef<Path>, expected_window: Option<Window>) -> Result<PointPattern> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    read_pattern(file, expected_window)
}

/// CSV text with a window line. Coordinates use the shortest exact decimal
/// form, so reading the text back reproduces every `f64` bit for bit.
pub fn format_pattern(p: &PointPattern) -> String {
    let lo = p.window().lower();
    let up = p.window().upper();
    let mut out = String::with_capacity(24 * (p.len() + 2));
    let _ = writeln!(out, "# window: {} {} {} {}", lo[0], lo[1], up[0], up[1]);
    out.push_str("x,y\n");
    for [x, y] in p.points() {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

pub fn write_pattern<W: Write>(mut writer: W, p: &PointPattern) -> Result<()> {
    writer.write_all(format_pattern(p).as_bytes())?;
    Ok(())
}

pub fn save_pattern(path: impl AsRef<Path>, p: &PointPattern) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_pattern(p)).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_row(text: &str, line: usize) -> Result<[f64; 2]> {
    let mut fields = text.split(',').map(str::trim);
    let mut next = |name: &str| -> Result<f64> {
        let raw = fields.next().ok_or_else(|| Error::Parse {
            line,
            message: format!("missing {name} coordinate"),
        })?;
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("cannot parse {name} coordinate {raw:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite {name} coordinate"),
            });
        }
        Ok(v)
    };
    let x = next("x")?;
    let y = next("y")?;
    if fields.next().is_some() {
        return Err(Error::Parse {
            line,
            message: "expected exactly two columns".into(),
        });
    }
    Ok([x, y])
}

fn parse_window_line(spec: &str, line: usize) -> Result<Window> {
    let vals: Vec<f64> = spec
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line,
            message: "window line must be `# window: x0 y0 x1 y1`".into(),
        })?;
    if vals.len() != 4 {
        return Err(Error::Parse {
            line,
            message: format!("window line needs 4 numbers, found {}", vals.len()),
        });
    }
    Window::new([vals[0], vals[1]], [vals[2], vals[3]])
}

fn bounding_window(rows: &[(usize, [f64; 2])]) -> Result<Window> {
    if rows.is_empty() {
        return Window::square(1.0);
    }
    let mut lo = [f64::INFINITY; 2];
    let mut up = [f64::NEG_INFINITY; 2];
    for (_, p) in rows {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            up[k] = up[k].max(p[k]);
        }
    }
    Window::new(lo, up).map_err(|_| {
        Error::InvalidWindow(
            "points span a degenerate bounding box; declare the window explicitly".into(),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w70() -> Window {
        Window::square(70.0).unwrap()
    }

    #[test]
    fn window_rejects_degenerate() {
        assert!(Window::new([0.0, 0.0], [0.0, 1.0]).is_err());
        assert!(Window::new([0.0, 0.0], [1.0, f64::NAN]).is_err());
        assert!(Window::new([2.0, 0.0], [1.0, 1.0]).is_err());
    }

    #[test]
    fn parses_two_rows() {
        let text = "x,y\n1.5,2.0\n3.0,4.0\n";
        let p = read_pattern(text.as_bytes(), Some(w70())).unwrap();
        assert_eq!(p.points(), &[[1.5, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "x,y\nabc,2\n";
        match read_pattern(text.as_bytes(), Some(w70())) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_window_row() {
        let text = "x,y\n71,5\n";
        assert!(matches!(
            read_pattern(text.as_bytes(), Some(w70())),
            Err(Error::OutOfWindow { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_pattern() {
        let p = read_pattern("".as_bytes(), Some(w70())).unwrap();
        assert!(p.is_empty());
        let p = read_pattern("# hello\nx,y\n".as_bytes(), None).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn window_comment_is_used() {
        let text = "# trees\n# window: 0 0 200 333.33\nx,y\n150,300\n";
        let p = read_pattern(text.as_bytes(), None).unwrap();
        assert_eq!(p.window().upper(), [200.0, 333.33]);
        let text = "# window: 0 0 10 10\nx,y\n11,3\n";
        assert!(read_pattern(text.as_bytes(), None).is_err());
    }

    #[test]
    fn rescale_examples() {
        let unit = Window::square(1.0).unwrap();
        let p = PointPattern::new(unit, vec![[0.5, 0.5], [0.0, 0.0], [0.25, 0.75]]).unwrap();
        let q = rescale_pattern(&p, w70()).unwrap();
        assert_eq!(q.points()[0], [35.0, 35.0]);
        assert_eq!(q.points()[1], [0.0, 0.0]);
        assert_eq!(q.points()[2], [17.5, 52.5]);
    }

    #[test]
    fn rescale_anisotropic_region() {
        let src = Window::new([500.0, 0.0], [700.0, 333.3333]).unwrap();
        let p = PointPattern::new(src, vec![[600.0, 333.3333]]).unwrap();
        let q = rescale_pattern(&p, w70()).unwrap();
        assert!((q.points()[0][0] - 35.0).abs() < 1e-12);
        assert_eq!(q.points()[0][1], 70.0);
    }

    #[test]
    fn rasterize_examples() {
        let grid = LatticeGrid::new(w70(), [2, 2]).unwrap();
        let empty = PointPattern::empty(w70());
        assert_eq!(rasterize_counts(&empty, &grid), vec![vec![0, 0], vec![0, 0]]);

        let p = PointPattern::new(
            w70(),
            vec![[10.0, 10.0], [10.0, 11.0], [60.0, 10.0], [10.0, 60.0], [69.0, 69.0]],
        )
        .unwrap();
        assert_eq!(rasterize_counts(&p, &grid), vec![vec![2, 1], vec![1, 1]]);
    }

    #[test]
    fn rasterize_boundary_convention() {
        let grid = LatticeGrid::new(w70(), [2, 2]).unwrap();
        // interior boundary goes to the upper cell, the outer edge to the last cell
        assert_eq!(grid.cell_of([35.0, 0.0]), Some((1, 0)));
        assert_eq!(grid.cell_of([70.0, 70.0]), Some((1, 1)));
        assert_eq!(grid.cell_of([0.0, 34.999]), Some((0, 0)));
        let grid = LatticeGrid::new(w70(), [3, 7]).unwrap();
        // 70/3 is not exact in binary; cell edges must still agree with cell_window
        for i in 0..3 {
            let cw = grid.cell_window(i, 0).unwrap();
            assert_eq!(grid.cell_of([cw.lower()[0], 0.0]).unwrap().0, i);
        }
    }

    #[test]
    fn single_point_single_cell() {
        let grid = LatticeGrid::new(w70(), [7, 5]).unwrap();
        let p = PointPattern::new(w70(), vec![[33.3, 12.1]]).unwrap();
        let c = rasterize_counts(&p, &grid);
        let total: usize = c.iter().flatten().sum();
        assert_eq!(total, 1);
        assert_eq!(c.iter().flatten().filter(|&&v| v == 1).count(), 1);
    }

    fn arb_pattern() -> impl Strategy<Value = PointPattern> {
        (
            -50.0f64..50.0,
            -50.0f64..50.0,
            0.1f64..100.0,
            0.1f64..100.0,
            prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..60),
        )
            .prop_map(|(x0, y0, a, b, unit)| {
                let w = Window::new([x0, y0], [x0 + a, y0 + b]).unwrap();
                let pts = unit
                    .into_iter()
                    .map(|(u, v)| [(x0 + u * a).min(x0 + a), (y0 + v * b).min(y0 + b)])
                    .collect();
                PointPattern::new(w, pts).unwrap()
            })
    }

    proptest! {
        #[test]
        fn raster_sum_is_cardinality(p in arb_pattern(), n1 in 1usize..12, n2 in 1usize..12) {
            let grid = LatticeGrid::new(*p.window(), [n1, n2]).unwrap();
            let total: usize = rasterize_counts(&p, &grid).iter().flatten().sum();
            prop_assert_eq!(total, p.len());
        }

        #[test]
        fn rescale_round_trip(p in arb_pattern()) {
            let target = Window::new([-3.0, 10.0], [4.0, 200.0]).unwrap();
            let back = rescale_pattern(&rescale_pattern(&p, target).unwrap(), *p.window()).unwrap();
            let scale = p.window().side_lengths();
            for (a, b) in p.points().iter().zip(back.points()) {
                for k in 0..2 {
                    let tol = 1e-12 * (a[k].abs().max(scale[k]));
                    prop_assert!((a[k] - b[k]).abs() <= tol, "{} vs {}", a[k], b[k]);
                }
            }
        }

        #[test]
        fn csv_round_trip_is_exact(p in arb_pattern()) {
            let text = format_pattern(&p);
            let q = read_pattern(text.as_bytes(), None).unwrap();
            prop_assert_eq!(q.window(), p.window());
            prop_assert_eq!(q.points(), p.points());
            prop_assert_eq!(format_pattern(&q), text);
        }
    }
}
