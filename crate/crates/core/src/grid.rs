//! Uniform grids with homogeneous Dirichlet boundaries and their quadrature.
//!
//! Only interior nodes carry unknowns. Boundary nodes hold zero (ghost zeros);
//! the radial grid additionally mirrors the first node across the origin so
//! that the flux through `r = 0` vanishes.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{FibrateError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Interval,
    Rectangle,
    Radial,
}

impl GridKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GridKind::Interval => "interval",
            GridKind::Rectangle => "rectangle",
            GridKind::Radial => "radial",
        }
    }
}

fn default_radius() -> f64 {
    15.0
}

/// Grid description as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Interval {
        length: f64,
        n: usize,
    },
    Rectangle {
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
    },
    Radial {
        #[serde(default = "default_radius")]
        radius: f64,
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    kind: GridKind,
    extents: Vec<f64>,
    n: Vec<usize>,
    h: Vec<f64>,
    coords: Vec<Vec<f64>>,
    weights: Vec<f64>,
    boundary_weight: f64,
}

impl Grid {
    pub fn build(spec: &GridSpec) -> Result<Self> {
        let check = |len: f64, n: usize| -> Result<()> {
            if !(len.is_finite() && len > 0.0) {
                return Err(FibrateError::BadSpec(format!("extent must be positive, got {len}")));
            }
            if n < 3 {
                return Err(FibrateError::BadSpec(format!("need at least 3 nodes per axis, got {n}")));
            }
            Ok(())
        };
        match *spec {
            GridSpec::Interval { length, n } => {
                check(length, n)?;
                let h = length / (n + 1) as f64;
                let x: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
                Ok(Grid {
                    kind: GridKind::Interval,
                    extents: vec![length],
                    n: vec![n],
                    h: vec![h],
                    coords: vec![x],
                    weights: vec![h; n],
                    // two boundary nodes with half weight each
                    boundary_weight: h,
                })
            }
            GridSpec::Rectangle { lx, ly, nx, ny } => {
                check(lx, nx)?;
                check(ly, ny)?;
                let hx = lx / (nx + 1) as f64;
                let hy = ly / (ny + 1) as f64;
                let mut xs = Vec::with_capacity(nx * ny);
                let mut ys = Vec::with_capacity(nx * ny);
                for j in 1..=ny {
                    for i in 1..=nx {
                        xs.push(i as f64 * hx);
                        ys.push(j as f64 * hy);
                    }
                }
                // boundary ring of the composite trapezoid rule: edges at half
                // weight, corners at quarter weight
                let boundary_weight = hx * hy * (nx as f64 + ny as f64 + 1.0);
                Ok(Grid {
                    kind: GridKind::Rectangle,
                    extents: vec![lx, ly],
                    n: vec![nx, ny],
                    h: vec![hx, hy],
                    coords: vec![xs, ys],
                    weights: vec![hx * hy; nx * ny],
                    boundary_weight,
                })
            }
            GridSpec::Radial { radius, n } => {
                check(radius, n)?;
                let h = radius / (n + 1) as f64;
                let r: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
                let weights = r.iter().map(|&ri| 4.0 * PI * ri * ri * h).collect();
                Ok(Grid {
                    kind: GridKind::Radial,
                    extents: vec![radius],
                    n: vec![n],
                    h: vec![h],
                    coords: vec![r],
                    weights,
                    // origin carries zero weight, r = R carries half weight
                    boundary_weight: 2.0 * PI * radius * radius * h,
                })
            }
        }
    }

    pub fn interval(length: f64, n: usize) -> Result<Self> {
        Self::build(&GridSpec::Interval { length, n })
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::build(&GridSpec::Rectangle { lx, ly, nx, ny })
    }

    pub fn radial(radius: f64, n: usize) -> Result<Self> {
        Self::build(&GridSpec::Radial { radius, n })
    }

    pub fn spec(&self) -> GridSpec {
        match self.kind {
            GridKind::Interval => GridSpec::Interval { length: self.extents[0], n: self.n[0] },
            GridKind::Rectangle => GridSpec::Rectangle {
                lx: self.extents[0],
                ly: self.extents[1],
                nx: self.n[0],
                ny: self.n[1],
            },
            GridKind::Radial => GridSpec::Radial { radius: self.extents[0], n: self.n[0] },
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    /// Interior node counts per axis.
    pub fn counts(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node coordinates along `axis` (radial: the radius).
    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    /// Measure of the domain (radial: volume of the ball of radius R).
    pub fn measure(&self) -> f64 {
        match self.kind {
            GridKind::Interval => self.extents[0],
            GridKind::Rectangle => self.extents[0] * self.extents[1],
            GridKind::Radial => 4.0 / 3.0 * PI * self.extents[0].powi(3),
        }
    }

    /// Total weight of the full composite trapezoid rule, boundary nodes
    /// included. Interior weights alone miss the boundary share.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.boundary_weight
    }

    pub fn zeros(&self) -> Field {
        Field::new(vec![0.0; self.len()])
    }

    /// Samples `f` at the interior nodes; `f` receives the coordinate slice.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Field {
        let mut out = Vec::with_capacity(self.len());
        let mut point = vec![0.0; self.coords.len()];
        for i in 0..self.len() {
            for (axis, c) in self.coords.iter().enumerate() {
                point[axis] = c[i];
            }
            out.push(f(&point));
        }
        Field::new(out)
    }

    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.len());
        debug_assert_eq!(v.len(), self.len());
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }

    pub fn check_field(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(FibrateError::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                u.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Edge list of the 1D/radial difference stencil: `(left, right, coeff)`
    /// with `coeff` the edge measure divided by `h²`, so that
    /// `Σ coeff·(u_right − u_left)²` is the discrete Dirichlet energy.
    /// `None` marks a ghost zero.
    pub(crate) fn line_edges(&self) -> Vec<(Option<usize>, Option<usize>, f64)> {
        let n = self.n[0];
        let h = self.h[0];
        match self.kind {
            GridKind::Interval => (0..=n)
                .map(|e| {
                    let left = if e == 0 { None } else { Some(e - 1) };
                    let right = if e == n { None } else { Some(e) };
                    (left, right, 1.0 / h)
                })
                .collect(),
            GridKind::Radial => (1..=n)
                .map(|e| {
                    // edge between r_e and r_{e+1}, midpoint (e + 1/2)h; the
                    // edge [0, r_1] has zero difference by symmetry
                    let rm = (e as f64 + 0.5) * h;
                    let right = if e == n { None } else { Some(e) };
                    (Some(e - 1), right, 4.0 * PI * rm * rm / h)
                })
                .collect(),
            GridKind::Rectangle => unreachable!("line_edges called on a rectangle"),
        }
    }

    /// `K u` where `uᵀ K u` is the discrete Dirichlet energy `∫|∇u|²`.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        match self.kind {
            GridKind::Interval | GridKind::Radial => {
                for (a, b, c) in self.line_edges() {
                    let ua = a.map_or(0.0, |i| u[i]);
                    let ub = b.map_or(0.0, |i| u[i]);
                    let d = c * (ub - ua);
                    if let Some(i) = a {
                        out[i] -= d;
                    }
                    if let Some(i) = b {
                        out[i] += d;
                    }
                }
            }
            GridKind::Rectangle => {
                let (nx, ny) = (self.n[0], self.n[1]);
                let (hx, hy) = (self.h[0], self.h[1]);
                let cx = hy / hx;
                let cy = hx / hy;
                for j in 0..ny {
                    for i in 0..nx {
                        let k = i + nx * j;
                        let c = u[k];
                        let left = if i > 0 { u[k - 1] } else { 0.0 };
                        let right = if i + 1 < nx { u[k + 1] } else { 0.0 };
                        let down = if j > 0 { u[k - nx] } else { 0.0 };
                        let up = if j + 1 < ny { u[k + nx] } else { 0.0 };
                        out[k] = cx * (2.0 * c - left - right) + cy * (2.0 * c - down - up);
                    }
                }
            }
        }
        out
    }

    /// Solves `(K + shift·W) x = rhs` with `W = diag(weights)`.
    pub fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        match self.kind {
            GridKind::Interval | GridKind::Radial => {
                let n = self.len();
                let mut diag: Vec<f64> = self.weights.iter().map(|w| shift * w).collect();
                let mut off = vec![0.0; n.saturating_sub(1)];
                for (a, b, c) in self.line_edges() {
                    if let Some(i) = a {
                        diag[i] += c;
                    }
                    if let Some(j) = b {
                        diag[j] += c;
                    }
                    if let (Some(i), Some(j)) = (a, b) {
                        off[i.min(j)] -= c;
                    }
                }
                solve_tridiagonal(&diag, &off, rhs)
            }
            GridKind::Rectangle => self.conjugate_gradient(shift, rhs),
        }
    }

    fn conjugate_gradient(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        let apply = |x: &[f64]| -> Vec<f64> {
            let mut y = self.stiffness_apply(x);
            for ((yi, xi), w) in y.iter_mut().zip(x).zip(&self.weights) {
                *yi += shift * w * xi;
            }
            y
        };
        let n = rhs.len();
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let target = 1e-28 * rr.max(f64::MIN_POSITIVE);
        for _ in 0..(10 * n).max(100) {
            if rr <= target {
                break;
            }
            let ap = apply(&p);
            let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
        }
        x
    }
}

/// Thomas algorithm for a symmetric tridiagonal system.
pub(crate) fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Node values of a discrete function; one entry per interior node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field::new(self.values.iter().map(|v| s * v).collect())
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &[f64]) -> Field {
        Field::new(self.values.iter().zip(other).map(|(a, b)| a + s * b).collect())
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Field::new(values)
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_nodes() {
        let g = Grid::interval(1.0, 3).unwrap();
        assert_eq!(g.spacing()[0], 0.25);
        assert_eq!(g.coords(0), &[0.25, 0.5, 0.75]);
        assert!((g.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rectangle_nodes() {
        let g = Grid::rectangle(1.0, 1.0, 3, 3).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.weights().iter().all(|&w| w == 0.0625));
        assert!((g.total_weight() - 1.0).abs() < 1e-12);
        let g = Grid::rectangle(2.0, 3.0, 4, 7).unwrap();
        assert!((g.total_weight() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn radial_volume() {
        let g = Grid::radial(10.0, 1000).unwrap();
        let vol = 4.0 / 3.0 * PI * 1000.0;
        assert!(((g.total_weight() - vol) / vol).abs() < 1e-6);
        assert!(g.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(Grid::interval(1.0, 2), Err(FibrateError::BadSpec(_))));
        assert!(matches!(Grid::interval(-1.0, 5), Err(FibrateError::BadSpec(_))));
        assert!(matches!(Grid::radial(0.0, 5), Err(FibrateError::BadSpec(_))));
    }

    #[test]
    fn shifted_solve_inverts_operator() {
        for g in [
            Grid::interval(1.0, 17).unwrap(),
            Grid::radial(5.0, 23).unwrap(),
            Grid::rectangle(1.0, 2.0, 5, 6).unwrap(),
        ] {
            let b = g.sample(|p| 1.0 + p[0].sin() + p.get(1).copied().unwrap_or(0.0));
            let x = g.solve_shifted(0.7, &b);
            let mut kx = g.stiffness_apply(&x);
            for ((k, xi), w) in kx.iter_mut().zip(&x).zip(g.weights()) {
                *k += 0.7 * w * xi;
            }
            let err = kx.iter().zip(b.iter()).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{:?}: residual {err}", g.kind());
        }
    }
}
