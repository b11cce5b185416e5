//! Fibering-map engine: `μ₀`, `ψ_u` and its derivatives, `t₀(u)`, `Λ(u)`,
//! `Λ'(u)`, Nehari classification and zero-energy certification.

use serde::{Deserialize, Serialize};

use crate::error::{FibrateError, Result};
use crate::grid::Field;
use crate::model::{ClassTag, ModelSpec, NehariClass};

pub const T_SCAN_MIN: f64 = 1e-6;
pub const T_SCAN_MAX: f64 = 1e6;
pub const T_SCAN_POINTS: usize = 200;
const ROOT_TOL: f64 = 1e-12;
const DEGENERATE_TOL: f64 = 1e-12;
const ZERO_DENOMINATOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalType {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberDiagnostics {
    pub t0: f64,
    pub psi_second: f64,
    pub critical_type: CriticalType,
    pub lambda: f64,
    pub in_d: bool,
}

/// `ψ_u(t) = Σ_k γ_k t^{m_k}` for a fixed `u`.
#[derive(Debug, Clone)]
pub struct Fiber {
    terms: Vec<(f64, f64)>,
    i2: f64,
}

impl Fiber {
    pub fn new(model: &ModelSpec, u: &[f64]) -> Result<Self> {
        let i2 = model.i2(u);
        if !i2.is_finite() || i2.abs() < ZERO_DENOMINATOR {
            return Err(FibrateError::ZeroDenominator(i2));
        }
        let alpha = model.i2_term().degree();
        let terms = model
            .i1_terms()
            .iter()
            .map(|t| (t.evaluate(u) / i2, t.degree() - alpha))
            .collect();
        Ok(Fiber { terms, i2 })
    }

    /// `I₂(u)` at the base point.
    pub fn i2(&self) -> f64 {
        self.i2
    }

    /// `(ψ, ψ', ψ'')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let mut out = (0.0, 0.0, 0.0);
        for &(g, m) in &self.terms {
            let tm = t.powf(m);
            out.0 += g * tm;
            out.1 += g * m * tm / t;
            out.2 += g * m * (m - 1.0) * tm / (t * t);
        }
        out
    }

    /// `t·ψ'(t)` and the sum of its absolute term magnitudes.
    fn log_slope(&self, t: f64) -> (f64, f64) {
        self.terms.iter().fold((0.0, 0.0), |(s, a), &(g, m)| {
            let v = g * m * t.powf(m);
            (s + v, a + v.abs())
        })
    }

    /// Magnitude scale of `t²ψ''(t)`.
    fn curvature_scale(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(g, m)| (g * m * (m - 1.0) * t.powf(m)).abs()).sum()
    }

    /// Geometric grid of `points` values in `[t_min, t_max]`.
    pub fn geometric_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
        let (a, b) = (t_min.ln(), t_max.ln());
        (0..points)
            .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
            .collect()
    }

    /// Number of sign changes of `ψ'` on the default bracket scan.
    pub fn sign_changes(&self) -> usize {
        let grid = Self::geometric_grid(T_SCAN_MIN, T_SCAN_MAX, T_SCAN_POINTS);
        let signs: Vec<f64> = grid.iter().map(|&t| self.log_slope(t).0).collect();
        signs.windows(2).filter(|w| w[0] * w[1] < 0.0 || (w[0] != 0.0 && w[1] == 0.0)).count()
    }

    /// Bracketed safeguarded Newton on `s = ln t` for the zero of `t·ψ'(t)`.
    pub fn find_critical_point(&self) -> Option<f64> {
        let grid = Self::geometric_grid(T_SCAN_MIN, T_SCAN_MAX, T_SCAN_POINTS);
        let vals: Vec<f64> = grid.iter().map(|&t| self.log_slope(t).0).collect();
        let k = (0..grid.len() - 1).find(|&i| vals[i] == 0.0 || vals[i] * vals[i + 1] < 0.0)?;
        if vals[k] == 0.0 {
            return Some(grid[k]);
        }
        let (mut lo, mut hi) = (grid[k].ln(), grid[k + 1].ln());
        let f_lo_sign = vals[k].signum();
        let mut s = 0.5 * (lo + hi);
        for _ in 0..200 {
            let t = s.exp();
            let (f, scale) = self.log_slope(t);
            if f.abs() <= ROOT_TOL * scale {
                return Some(t);
            }
            if f.signum() == f_lo_sign {
                lo = s;
            } else {
                hi = s;
            }
            // d/ds [tψ'(t)] = Σ γ m² t^m
            let df: f64 = self.terms.iter().map(|&(g, m)| g * m * m * t.powf(m)).sum();
            let newton = s - f / df;
            s = if df != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * s.abs().max(1.0) {
                return Some(s.exp());
            }
        }
        Some(s.exp())
    }

    /// Completes the diagnostics at a critical point `t0`.
    pub fn diagnostics_at(&self, t0: f64) -> Result<FiberDiagnostics> {
        let (psi, _, psi_second) = self.eval(t0);
        if (psi_second * t0 * t0).abs() <= DEGENERATE_TOL * self.curvature_scale(t0) {
            return Err(FibrateError::DegenerateFiber(psi_second));
        }
        Ok(FiberDiagnostics {
            t0,
            psi_second,
            critical_type: if psi_second < 0.0 { CriticalType::Max } else { CriticalType::Min },
            lambda: psi,
            in_d: true,
        })
    }
}

/// `μ₀(u) = I₁(u)/I₂(u)`.
pub fn mu0(model: &ModelSpec, u: &[f64]) -> Result<f64> {
    let i2 = model.i2(u);
    if !i2.is_finite() || i2.abs() < ZERO_DENOMINATOR {
        return Err(FibrateError::ZeroDenominator(i2));
    }
    Ok(model.i1(u) / i2)
}

/// `(ψ_u(t), ψ'_u(t), ψ''_u(t))` from the exact power expansion.
pub fn fiber_eval(model: &ModelSpec, u: &[f64], t: f64) -> Result<(f64, f64, f64)> {
    if !(t > 0.0) {
        return Err(FibrateError::BadParams(format!("fiber parameter must be positive, got {t}")));
    }
    Ok(Fiber::new(model, u)?.eval(t))
}

/// Whether `t₀(u)` exists.
pub fn membership_d(model: &ModelSpec, u: &[f64]) -> bool {
    if u.iter().all(|&x| x == 0.0) || u.iter().any(|x| !x.is_finite()) {
        return false;
    }
    match (model.class(), model.triple(), model.closed_t0()) {
        (ClassTag::ClassOne | ClassTag::ClassTwo, Some(tr), _) => tr.b.evaluate(u) > 0.0,
        (_, _, Some(c)) => c.denominator.evaluate(u) > 0.0 && c.numerator.evaluate(u) > 0.0,
        _ => Fiber::new(model, u).map(|f| f.sign_changes() > 0).unwrap_or(false),
    }
}

/// Locates `t₀(u)`: closed form where the model installs one, bracketed
/// Newton otherwise.
pub fn solve_t0(model: &ModelSpec, u: &[f64]) -> Result<FiberDiagnostics> {
    let fiber = Fiber::new(model, u)?;
    let t0 = match model.closed_t0() {
        Some(c) => {
            let den = c.denominator.evaluate(u);
            let num = c.numerator.evaluate(u);
            if !(den > 0.0 && num > 0.0) {
                return Err(FibrateError::NotInD);
            }
            (c.kappa * num / den).powf(1.0 / c.exponent)
        }
        None => fiber.find_critical_point().ok_or(FibrateError::NotInD)?,
    };
    if !(t0.is_finite() && t0 > 0.0) {
        return Err(FibrateError::NotInD);
    }
    fiber.diagnostics_at(t0)
}

/// `Λ(u) = ψ_u(t₀(u))`.
pub fn lambda_value(model: &ModelSpec, u: &[f64]) -> Result<f64> {
    Ok(solve_t0(model, u)?.lambda)
}

/// `Λ(u)` together with the quadrature representer of `Λ'(u)`:
/// `Λ'(u)v = Φ'_{Λ(u)}(t₀u)(t₀v) / I₂(t₀u)`.
pub fn lambda_grad_vector(model: &ModelSpec, u: &[f64]) -> Result<(FiberDiagnostics, Vec<f64>)> {
    let diag = solve_t0(model, u)?;
    let v: Vec<f64> = u.iter().map(|x| diag.t0 * x).collect();
    let i2 = model.i2(&v);
    let factor = diag.t0 / i2;
    let grad = model.phi_gradient(diag.lambda, &v).into_iter().map(|g| factor * g).collect();
    Ok((diag, grad))
}

/// `Λ'(u)v`.
pub fn lambda_grad(model: &ModelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    let (_, g) = lambda_grad_vector(model, u)?;
    Ok(model.grid().dot(&g, v))
}

/// `J'_μ(v)v` with `J_μ(v) = Φ'_μ(v)v`, and its magnitude scale. For a term
/// of degree `d`, `d/ds J(sv)|_{s=1} = d²·term(v)`.
pub fn nehari_derivative(model: &ModelSpec, mu: f64, v: &[f64]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut scale = 0.0;
    for t in model.i1_terms() {
        let d = t.degree();
        let c = d * d * t.evaluate(v);
        sum += c;
        scale += c.abs();
    }
    let a = model.i2_term().degree();
    let c = -mu * a * a * model.i2(v);
    (sum + c, scale + c.abs())
}

pub fn nehari_class(model: &ModelSpec, mu: f64, v: &[f64]) -> Result<NehariClass> {
    let (jv, scale) = nehari_derivative(model, mu, v);
    if jv.abs() <= DEGENERATE_TOL * scale {
        return Err(FibrateError::DegenerateNehari(jv));
    }
    Ok(if jv < 0.0 { NehariClass::NMinus } else { NehariClass::NPlus })
}

/// Outcome of certifying `(Λ(u), t₀(u)u)` as a zero-energy critical point.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointRecord {
    pub mu: f64,
    #[serde(skip)]
    pub v: Field,
    pub t0: f64,
    pub energy_residual: f64,
    pub gradient_residual: f64,
    pub nehari_class: NehariClass,
    /// Label predicted by the existence theory, when one is stated.
    pub nehari_expected: Option<NehariClass>,
    /// Set when the computed label differs from `nehari_expected`.
    pub nehari_discrepancy: bool,
    pub critical_type: CriticalType,
    /// `sign(I₂(v))·sign(ψ''_u(t₀))` agrees with the Nehari label.
    pub ej_consistent: bool,
    /// `|μ₀(v) − μ| / (1 + |μ|)`
    pub roundtrip_mu_error: f64,
    /// `|t₀(v) − 1|`
    pub roundtrip_t0_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn certify_zero_energy(
    model: &ModelSpec,
    u: &[f64],
    tol_e: f64,
    tol_g: f64,
) -> Result<CriticalPointRecord> {
    let diag = solve_t0(model, u)?;
    let mu = diag.lambda;
    let v = Field::new(u.iter().map(|x| diag.t0 * x).collect());
    let grid = model.grid();

    let energy_residual = model.phi(mu, &v).abs() / (1.0 + model.energy_scale().evaluate(&v).abs());
    let grad = model.phi_gradient(mu, &v);
    let gradient_residual = grid.norm(&grad) / (1.0 + grid.norm(&v));

    let nehari = nehari_class(model, mu, &v)?;
    let predicted = if model.i2(&v).signum() * diag.psi_second.signum() < 0.0 {
        NehariClass::NMinus
    } else {
        NehariClass::NPlus
    };

    let (roundtrip_mu_error, roundtrip_t0_error) = match solve_t0(model, &v) {
        Ok(back) => {
            let mu_back = mu0(model, &v)?;
            ((mu_back - mu).abs() / (1.0 + mu.abs()), (back.t0 - 1.0).abs())
        }
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };

    let expected = model.expected_nehari();
    Ok(CriticalPointRecord {
        mu,
        v,
        t0: diag.t0,
        energy_residual,
        gradient_residual,
        nehari_class: nehari,
        nehari_expected: expected,
        nehari_discrepancy: expected.is_some_and(|e| e != nehari),
        critical_type: diag.critical_type,
        ej_consistent: predicted == nehari,
        roundtrip_mu_error,
        roundtrip_t0_error,
        iterations: 0,
        converged: energy_residual <= tol_e && gradient_residual <= tol_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{Functional, Handle};
    use crate::grid::Grid;
    use crate::model::ModelSpec;
    use std::sync::Arc;

    /// Functional with a prescribed constant value at every nonzero field,
    /// scaled homogeneously: `F(u) = value·(‖u‖/‖u₀‖)^degree`.
    #[derive(Debug)]
    struct Constant {
        grid: Grid,
        value: f64,
        degree: f64,
    }

    impl Functional for Constant {
        fn name(&self) -> String {
            "constant".into()
        }
        fn grid(&self) -> &Grid {
            &self.grid
        }
        fn degree(&self) -> f64 {
            self.degree
        }
        fn evaluate(&self, u: &[f64]) -> f64 {
            self.value * self.grid.norm(u).powf(self.degree)
        }
        fn gradient(&self, u: &[f64]) -> Vec<f64> {
            let n = self.grid.norm(u);
            u.iter().map(|x| self.value * self.degree * n.powf(self.degree - 2.0) * x).collect()
        }
    }

    fn unit_model() -> (ModelSpec, Vec<f64>) {
        let grid = Grid::interval(1.0, 3).unwrap();
        let mk = |d: f64| -> Handle { Arc::new(Constant { grid: grid.clone(), value: 1.0, degree: d }) };
        let m = ModelSpec::class_one("unit", mk(2.0), mk(1.5), mk(4.0)).unwrap();
        // unit quadrature norm so that N = A = B = 1
        let u = vec![1.0 / (0.75f64).sqrt(); 3];
        (m, u)
    }

    #[test]
    fn mu0_definition() {
        let (m, u) = unit_model();
        // (1/2 − 1/4) / (1/1.5)
        assert!((mu0(&m, &u).unwrap() - 0.375).abs() < 1e-14);
    }

    #[test]
    fn fiber_at_one_is_mu0() {
        let (m, u) = unit_model();
        let (psi, _, _) = fiber_eval(&m, &u, 1.0).unwrap();
        assert!((psi - 0.375).abs() < 1e-14);
        let (a, _, _) = fiber_eval(&m, &u, 0.3).unwrap();
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let (b, _, _) = fiber_eval(&m, &u2, 0.15).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn fiber_slope_vanishes_at_closed_t0() {
        let (m, u) = unit_model();
        let (_, d1, _) = fiber_eval(&m, &u, 0.4f64.sqrt()).unwrap();
        assert!(d1.abs() < 1e-10);
    }

    #[test]
    fn generic_and_closed_t0_agree() {
        let (m, u) = unit_model();
        let closed = solve_t0(&m, &u).unwrap();
        let generic = solve_t0(&m.generic(), &u).unwrap();
        assert!((closed.t0 - 0.4f64.sqrt()).abs() < 1e-14);
        assert!((generic.t0 - closed.t0).abs() < 1e-12 * closed.t0);
        assert_eq!(closed.critical_type, CriticalType::Max);
    }

    #[test]
    fn zero_denominator_is_reported() {
        let (m, _) = unit_model();
        assert!(matches!(mu0(&m, &[0.0; 3]), Err(FibrateError::ZeroDenominator(_))));
    }

    #[test]
    fn outside_d_is_reported() {
        let grid = Grid::interval(1.0, 3).unwrap();
        let mk = |d: f64, v: f64| -> Handle {
            Arc::new(Constant { grid: grid.clone(), value: v, degree: d })
        };
        let m = ModelSpec::class_one("neg", mk(2.0, 1.0), mk(1.5, 1.0), mk(4.0, -1.0)).unwrap();
        let u = vec![1.0; 3];
        assert!(!membership_d(&m, &u));
        assert!(!membership_d(&m.generic(), &u));
        assert!(matches!(solve_t0(&m, &u), Err(FibrateError::NotInD)));
        assert!(matches!(solve_t0(&m.generic(), &u), Err(FibrateError::NotInD)));
    }
}
