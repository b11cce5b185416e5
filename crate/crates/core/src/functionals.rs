//! Homogeneous functionals on grid fields.
//!
//! Gradients are returned as representers under the quadrature pairing:
//! `F'(u)v = Σ_i w_i g_i v_i`, i.e. the nodal derivative divided by the
//! quadrature weight.

use std::fmt;
use std::sync::Arc;

use crate::error::{FibrateError, Result};
use crate::grid::{Grid, GridKind};

pub trait Functional: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn grid(&self) -> &Grid;

    /// Homogeneity degree.
    fn degree(&self) -> f64;

    fn is_even(&self) -> bool {
        true
    }

    fn evaluate(&self, u: &[f64]) -> f64;

    fn gradient(&self, u: &[f64]) -> Vec<f64>;

    fn directional(&self, u: &[f64], v: &[f64]) -> f64 {
        self.grid().dot(&self.gradient(u), v)
    }
}

pub type Handle = Arc<dyn Functional>;

/// Signed power `|x|^(s-1)·sign(x)`, which is the derivative of `|x|^s / s`
/// and vanishes at zero for `s > 1`.
#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(e) * x.signum()
    }
}

/// Which norm-type functional to assemble.
#[derive(Debug, Clone, PartialEq)]
pub enum NormKind {
    /// `∫|∇u|^p`
    GradP { p: f64 },
    /// `∫ weight·|u|^s`; `weight = None` means `1`.
    WeightedPower { s: f64, weight: Option<Vec<f64>> },
    /// `(∫|∇u|²)²`
    GradPSquared,
}

pub fn norm_functional(grid: &Arc<Grid>, kind: NormKind) -> Result<Handle> {
    match kind {
        NormKind::GradP { p } => Ok(Arc::new(GradP::new(grid.clone(), p)?)),
        NormKind::WeightedPower { s, weight } => {
            Ok(Arc::new(WeightedPower::new(grid.clone(), s, weight)?))
        }
        NormKind::GradPSquared => Ok(Arc::new(GradPSquared::new(grid.clone()))),
    }
}

/// `∫|∇u|^p` on staggered midpoints with ghost-zero boundaries.
///
/// On rectangles each cell averages `|∇u|^p` over the four pairings of its
/// two x-edge and two y-edge differences; for `p = 2` this reproduces the
/// five-point Laplacian form exactly.
#[derive(Debug, Clone)]
pub struct GradP {
    grid: Arc<Grid>,
    p: f64,
}

impl GradP {
    pub fn new(grid: Arc<Grid>, p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(FibrateError::BadParams(format!("grad_p requires p >= 1, got {p}")));
        }
        Ok(GradP { grid, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Value and nodal derivative (not yet divided by weights).
    fn value_and_derivative(&self, u: &[f64], want_derivative: bool) -> (f64, Vec<f64>) {
        let g = &*self.grid;
        let p = self.p;
        let mut deriv = if want_derivative { vec![0.0; g.len()] } else { Vec::new() };
        let mut total = 0.0;
        match g.kind() {
            GridKind::Interval | GridKind::Radial => {
                let h = g.spacing()[0];
                for (a, b, c) in g.line_edges() {
                    // c = measure / h², see Grid::line_edges
                    let ua = a.map_or(0.0, |i| u[i]);
                    let ub = b.map_or(0.0, |i| u[i]);
                    let slope = (ub - ua) / h;
                    let measure = c * h * h;
                    total += measure * slope.abs().powf(p);
                    if want_derivative {
                        let d = measure * p * signed_pow(slope, p - 1.0) / h;
                        if let Some(i) = a {
                            deriv[i] -= d;
                        }
                        if let Some(i) = b {
                            deriv[i] += d;
                        }
                    }
                }
            }
            GridKind::Rectangle => {
                let (nx, ny) = (g.counts()[0], g.counts()[1]);
                let (hx, hy) = (g.spacing()[0], g.spacing()[1]);
                let area = hx * hy;
                // node (I, J) with I in 0..=nx+1, J in 0..=ny+1; ring is zero
                let idx = |i: usize, j: usize| -> Option<usize> {
                    if i == 0 || j == 0 || i > nx || j > ny {
                        None
                    } else {
                        Some((i - 1) + nx * (j - 1))
                    }
                };
                let val = |k: Option<usize>| k.map_or(0.0, |k| u[k]);
                for j in 0..=ny {
                    for i in 0..=nx {
                        let n00 = idx(i, j);
                        let n10 = idx(i + 1, j);
                        let n01 = idx(i, j + 1);
                        let n11 = idx(i + 1, j + 1);
                        let dx = [(val(n10) - val(n00)) / hx, (val(n11) - val(n01)) / hx];
                        let dy = [(val(n01) - val(n00)) / hy, (val(n11) - val(n10)) / hy];
                        let xedges = [(n00, n10), (n01, n11)];
                        let yedges = [(n00, n01), (n10, n11)];
                        for (a, &gx) in dx.iter().enumerate() {
                            for (b, &gy) in dy.iter().enumerate() {
                                let mag2 = gx * gx + gy * gy;
                                total += 0.25 * area * mag2.powf(0.5 * p);
                                if want_derivative && mag2 > 0.0 {
                                    let coef = 0.25 * area * p * mag2.powf(0.5 * p - 1.0);
                                    let (l, r) = xedges[a];
                                    let fx = coef * gx / hx;
                                    if let Some(k) = l {
                                        deriv[k] -= fx;
                                    }
                                    if let Some(k) = r {
                                        deriv[k] += fx;
                                    }
                                    let (l, r) = yedges[b];
                                    let fy = coef * gy / hy;
                                    if let Some(k) = l {
                                        deriv[k] -= fy;
                                    }
                                    if let Some(k) = r {
                                        deriv[k] += fy;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (total, deriv)
    }
}

impl Functional for GradP {
    fn name(&self) -> String {
        format!("grad_p(p={})", self.p)
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn degree(&self) -> f64 {
        self.p
    }

    fn evaluate(&self, u: &[f64]) -> f64 {
        self.value_and_derivative(u, false).0
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let (_, mut d) = self.value_and_derivative(u, true);
        for (di, w) in d.iter_mut().zip(self.grid.weights()) {
            *di /= w;
        }
        d
    }
}

/// `∫ f·|u|^s` with a nodal weight `f`.
#[derive(Debug, Clone)]
pub struct WeightedPower {
    grid: Arc<Grid>,
    s: f64,
    weight: Option<Vec<f64>>,
}

impl WeightedPower {
    pub fn new(grid: Arc<Grid>, s: f64, weight: Option<Vec<f64>>) -> Result<Self> {
        if !(s.is_finite() && s > 1.0) {
            return Err(FibrateError::BadParams(format!("weighted_power requires s > 1, got {s}")));
        }
        if let Some(w) = &weight {
            grid.check_field(w)?;
            if w.iter().any(|x| !x.is_finite()) {
                return Err(FibrateError::BadParams("weight field has non-finite entries".into()));
            }
        }
        Ok(WeightedPower { grid, s, weight })
    }

    fn weight_at(&self, i: usize) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w[i])
    }
}

impl Functional for WeightedPower {
    fn name(&self) -> String {
        match self.weight {
            Some(_) => format!("weighted_power(s={}, weighted)", self.s),
            None => format!("weighted_power(s={})", self.s),
        }
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn degree(&self) -> f64 {
        self.s
    }

    fn evaluate(&self, u: &[f64]) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(u)
            .enumerate()
            .map(|(i, (w, x))| w * self.weight_at(i) * x.abs().powf(self.s))
            .sum()
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &x)| self.s * self.weight_at(i) * signed_pow(x, self.s - 1.0))
            .collect()
    }
}

/// `(∫|∇u|²)²`, the Kirchhoff nonlocal term.
#[derive(Debug, Clone)]
pub struct GradPSquared {
    inner: GradP,
}

impl GradPSquared {
    pub fn new(grid: Arc<Grid>) -> Self {
        GradPSquared { inner: GradP { grid, p: 2.0 } }
    }
}

impl Functional for GradPSquared {
    fn name(&self) -> String {
        "grad_p_squared".into()
    }

    fn grid(&self) -> &Grid {
        &self.inner.grid
    }

    fn degree(&self) -> f64 {
        4.0
    }

    fn evaluate(&self, u: &[f64]) -> f64 {
        self.inner.evaluate(u).powi(2)
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.inner.evaluate(u);
        self.inner.gradient(u).into_iter().map(|g| 2.0 * n * g).collect()
    }
}

/// `Σ c_k F_k` over functionals of one common degree.
#[derive(Debug, Clone)]
pub struct LinearCombination {
    terms: Vec<(f64, Handle)>,
    degree: f64,
    label: Option<String>,
}

impl LinearCombination {
    pub fn new(terms: Vec<(f64, Handle)>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| FibrateError::BadParams("empty linear combination".into()))?;
        let degree = first.1.degree();
        if terms.iter().any(|(_, f)| (f.degree() - degree).abs() > 1e-14) {
            return Err(FibrateError::BadParams(
                "linear combination mixes homogeneity degrees".into(),
            ));
        }
        Ok(LinearCombination { terms, degree, label: None })
    }

    pub fn scaled(coef: f64, f: Handle) -> Self {
        let degree = f.degree();
        LinearCombination { terms: vec![(coef, f)], degree, label: None }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

impl Functional for LinearCombination {
    fn name(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        self.terms
            .iter()
            .map(|(c, f)| format!("{c}*{}", f.name()))
            .collect::<Vec<_>>()
            .join(" + ")
    }

    fn grid(&self) -> &Grid {
        self.terms[0].1.grid()
    }

    fn degree(&self) -> f64 {
        self.degree
    }

    fn is_even(&self) -> bool {
        self.terms.iter().all(|(_, f)| f.is_even())
    }

    fn evaluate(&self, u: &[f64]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.evaluate(u)).sum()
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (c, f) in &self.terms {
            for (o, g) in out.iter_mut().zip(f.gradient(u)) {
                *o += c * g;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(g: &Grid) -> Vec<f64> {
        g.sample(|x| (PI * x[0]).sin()).into_values()
    }

    #[test]
    fn dirichlet_energy_of_sine() {
        let g = Arc::new(Grid::interval(1.0, 1023).unwrap());
        let n = GradP::new(g.clone(), 2.0).unwrap();
        let val = n.evaluate(&sine(&g));
        let h = g.spacing()[0];
        assert!((val - PI * PI / 2.0).abs() < PI.powi(4) * h * h);
    }

    #[test]
    fn fourth_power_of_sine() {
        let g = Arc::new(Grid::interval(1.0, 1023).unwrap());
        let b = WeightedPower::new(g.clone(), 4.0, None).unwrap();
        assert!((b.evaluate(&sine(&g)) - 0.375).abs() < 1e-6);
    }

    #[test]
    fn p2_matches_stiffness_form() {
        for g in [
            Grid::interval(2.0, 31).unwrap(),
            Grid::radial(6.0, 40).unwrap(),
            Grid::rectangle(1.0, 1.5, 7, 9).unwrap(),
        ] {
            let g = Arc::new(g);
            let u = g.sample(|x| (1.3 * x[0]).cos() + x.get(1).map_or(0.0, |y| y * y) - 0.2);
            let n = GradP::new(g.clone(), 2.0).unwrap();
            let form: f64 = g.stiffness_apply(&u).iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            let val = n.evaluate(&u);
            assert!(((val - form) / form).abs() < 1e-13, "{:?}", g.kind());
            // representer of a quadratic form is 2 K u / w
            let grad = n.gradient(&u);
            let ku = g.stiffness_apply(&u);
            for i in 0..u.len() {
                let expect = 2.0 * ku[i] / g.weights()[i];
                assert!((grad[i] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn euler_identity_for_p3() {
        let g = Arc::new(Grid::interval(1.0, 64).unwrap());
        let n = GradP::new(g.clone(), 3.0).unwrap();
        let u = g.sample(|x| (3.0 * x[0]).sin() * x[0] - 0.1);
        let lhs = n.directional(&u, &u);
        let rhs = 3.0 * n.evaluate(&u);
        assert!(((lhs - rhs) / rhs).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_exponents() {
        let g = Arc::new(Grid::interval(1.0, 8).unwrap());
        assert!(GradP::new(g.clone(), 0.5).is_err());
        assert!(WeightedPower::new(g.clone(), 1.0, None).is_err());
        assert!(WeightedPower::new(g, 2.0, Some(vec![1.0; 3])).is_err());
    }

    #[test]
    fn mixed_degree_combination_is_rejected() {
        let g = Arc::new(Grid::interval(1.0, 8).unwrap());
        let a: Handle = Arc::new(GradP::new(g.clone(), 2.0).unwrap());
        let b: Handle = Arc::new(WeightedPower::new(g, 3.0, None).unwrap());
        assert!(LinearCombination::new(vec![(1.0, a), (1.0, b)]).is_err());
    }
}
