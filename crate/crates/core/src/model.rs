//! Functional pairs `(I₁, I₂)` with `Φ_μ = I₁ − μ I₂`.
//!
//! `I₁` is a sum of homogeneous terms and `I₂ = c·A` is a single homogeneous
//! term, so the fiber `ψ_u(t) = I₁(tu)/I₂(tu)` is a finite sum of powers of
//! `t` whose coefficients are the component values at `u`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FibrateError, Result};
use crate::functionals::Handle;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassTag {
    ClassOne,
    ClassTwo,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignA {
    Minus,
    Plus,
}

/// Which way `Λ` is bounded, hence which extremum the optimizer seeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NehariClass {
    #[serde(rename = "N-")]
    NMinus,
    #[serde(rename = "N+")]
    NPlus,
}

impl NehariClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NehariClass::NMinus => "N-",
            NehariClass::NPlus => "N+",
        }
    }
}

impl fmt::Display for NehariClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `coeff · F(u)`.
#[derive(Debug, Clone)]
pub struct Term {
    pub coeff: f64,
    pub functional: Handle,
}

impl Term {
    pub fn new(coeff: f64, functional: Handle) -> Self {
        Term { coeff, functional }
    }

    pub fn degree(&self) -> f64 {
        self.functional.degree()
    }

    pub fn evaluate(&self, u: &[f64]) -> f64 {
        self.coeff * self.functional.evaluate(u)
    }
}

/// The `N, A, B` structure of the two power classes.
#[derive(Debug, Clone)]
pub struct PowerTriple {
    pub n: Handle,
    pub a: Handle,
    pub b: Handle,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sign_a: SignA,
}

/// `t₀(u) = (κ · numerator(u) / denominator(u))^(1/exponent)`, valid where
/// the denominator is positive.
#[derive(Debug, Clone)]
pub struct ClosedT0 {
    pub kappa: f64,
    pub numerator: Handle,
    pub denominator: Handle,
    pub exponent: f64,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    name: String,
    grid: Arc<Grid>,
    class: ClassTag,
    i1: Vec<Term>,
    i2: Term,
    triple: Option<PowerTriple>,
    closed_t0: Option<ClosedT0>,
    energy_scale: Handle,
    direction: Direction,
    expected_nehari: Option<NehariClass>,
}

fn check_degrees(class: ClassTag, eta: f64, alpha: f64, beta: f64) -> Result<()> {
    let ok = match class {
        ClassTag::ClassOne => 1.0 < alpha && alpha < eta && eta < beta,
        ClassTag::ClassTwo => 1.0 < eta && eta < beta && beta < alpha,
        ClassTag::Custom => true,
    };
    if ok {
        Ok(())
    } else {
        Err(FibrateError::BadDegrees(format!(
            "{class:?} with eta={eta}, alpha={alpha}, beta={beta}"
        )))
    }
}

impl ModelSpec {
    /// `Φ_μ = N/η − (μ/α)A − B/β`, degrees read from the handles.
    pub fn class_one(name: impl Into<String>, n: Handle, a: Handle, b: Handle) -> Result<Self> {
        Self::power_class(name.into(), ClassTag::ClassOne, n, a, b)
    }

    /// `Φ_μ = N/η + (μ/α)A − B/β`, degrees read from the handles.
    pub fn class_two(name: impl Into<String>, n: Handle, a: Handle, b: Handle) -> Result<Self> {
        Self::power_class(name.into(), ClassTag::ClassTwo, n, a, b)
    }

    fn power_class(name: String, class: ClassTag, n: Handle, a: Handle, b: Handle) -> Result<Self> {
        let (eta, alpha, beta) = (n.degree(), a.degree(), b.degree());
        check_degrees(class, eta, alpha, beta)?;
        let grid = Arc::new(n.grid().clone());
        let (sign_a, i2_coeff, kappa, direction, expected) = match class {
            ClassTag::ClassOne => (
                SignA::Minus,
                1.0 / alpha,
                (beta / eta) * (eta - alpha) / (beta - alpha),
                Direction::Minimize,
                NehariClass::NMinus,
            ),
            _ => (
                SignA::Plus,
                -1.0 / alpha,
                (beta / eta) * (alpha - eta) / (alpha - beta),
                Direction::Maximize,
                NehariClass::NPlus,
            ),
        };
        Ok(ModelSpec {
            name,
            grid,
            class,
            i1: vec![Term::new(1.0 / eta, n.clone()), Term::new(-1.0 / beta, b.clone())],
            i2: Term::new(i2_coeff, a.clone()),
            closed_t0: Some(ClosedT0 {
                kappa,
                numerator: n.clone(),
                denominator: b.clone(),
                exponent: beta - eta,
            }),
            energy_scale: n.clone(),
            triple: Some(PowerTriple { n, a, b, eta, alpha, beta, sign_a }),
            direction,
            expected_nehari: Some(expected),
        })
    }

    /// A model outside the two power classes.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: impl Into<String>,
        i1: Vec<Term>,
        i2: Term,
        closed_t0: Option<ClosedT0>,
        energy_scale: Handle,
        direction: Direction,
        expected_nehari: Option<NehariClass>,
    ) -> Result<Self> {
        if i1.is_empty() {
            return Err(FibrateError::BadParams("I1 needs at least one term".into()));
        }
        if i2.coeff == 0.0 {
            return Err(FibrateError::BadParams("I2 coefficient is zero".into()));
        }
        let grid = Arc::new(i2.functional.grid().clone());
        for t in &i1 {
            if t.functional.grid().len() != grid.len() {
                return Err(FibrateError::GridMismatch("I1 and I2 live on different grids".into()));
            }
        }
        Ok(ModelSpec {
            name: name.into(),
            grid,
            class: ClassTag::Custom,
            i1,
            i2,
            triple: None,
            closed_t0,
            energy_scale,
            direction,
            expected_nehari,
        })
    }

    /// Same functional pair with every closed form removed, so the engine
    /// falls back to the bracketed fiber solve.
    pub fn generic(&self) -> ModelSpec {
        let mut m = self.clone();
        m.class = ClassTag::Custom;
        m.closed_t0 = None;
        m.name = format!("{} (generic)", self.name);
        m
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn class(&self) -> ClassTag {
        self.class
    }

    pub fn i1_terms(&self) -> &[Term] {
        &self.i1
    }

    pub fn i2_term(&self) -> &Term {
        &self.i2
    }

    pub fn triple(&self) -> Option<&PowerTriple> {
        self.triple.as_ref()
    }

    pub fn closed_t0(&self) -> Option<&ClosedT0> {
        self.closed_t0.as_ref()
    }

    pub fn energy_scale(&self) -> &Handle {
        &self.energy_scale
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// The Nehari label the existence theory predicts, if any.
    pub fn expected_nehari(&self) -> Option<NehariClass> {
        self.expected_nehari
    }

    pub fn i1(&self, u: &[f64]) -> f64 {
        self.i1.iter().map(|t| t.evaluate(u)).sum()
    }

    pub fn i2(&self, u: &[f64]) -> f64 {
        self.i2.evaluate(u)
    }

    /// `Φ_μ(v)`
    pub fn phi(&self, mu: f64, v: &[f64]) -> f64 {
        self.i1(v) - mu * self.i2(v)
    }

    /// Sum of the absolute term magnitudes of `Φ_μ(v)`.
    pub fn phi_scale(&self, mu: f64, v: &[f64]) -> f64 {
        self.i1.iter().map(|t| t.evaluate(v).abs()).sum::<f64>() + (mu * self.i2(v)).abs()
    }

    /// Quadrature representer of `Φ'_μ(v)`.
    pub fn phi_gradient(&self, mu: f64, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for t in &self.i1 {
            for (o, g) in out.iter_mut().zip(t.functional.gradient(v)) {
                *o += t.coeff * g;
            }
        }
        let c = -mu * self.i2.coeff;
        for (o, g) in out.iter_mut().zip(self.i2.functional.gradient(v)) {
            *o += c * g;
        }
        out
    }

    /// The same model with every occurrence of `target` swapped for
    /// `replacement`; degrees are re-read but not re-validated.
    pub fn with_replaced(&self, target: &Handle, replacement: Handle) -> ModelSpec {
        let swap = |h: &Handle| if Arc::ptr_eq(h, target) { replacement.clone() } else { h.clone() };
        let mut m = self.clone();
        for t in &mut m.i1 {
            t.functional = swap(&t.functional);
        }
        m.i2.functional = swap(&m.i2.functional);
        if let Some(c) = &mut m.closed_t0 {
            c.numerator = swap(&c.numerator);
            c.denominator = swap(&c.denominator);
        }
        m.energy_scale = swap(&m.energy_scale);
        if let Some(tr) = &mut m.triple {
            tr.n = swap(&tr.n);
            tr.a = swap(&tr.a);
            tr.b = swap(&tr.b);
            tr.eta = tr.n.degree();
            tr.alpha = tr.a.degree();
            tr.beta = tr.b.degree();
        }
        m.name = format!("{} (modified)", self.name);
        m
    }

    /// Every distinct component handle of the model.
    pub fn components(&self) -> Vec<Handle> {
        let mut out: Vec<Handle> = Vec::new();
        let mut push = |h: &Handle| {
            if !out.iter().any(|o| Arc::ptr_eq(o, h)) {
                out.push(h.clone());
            }
        };
        for t in &self.i1 {
            push(&t.functional);
        }
        push(&self.i2.functional);
        if let Some(c) = &self.closed_t0 {
            push(&c.numerator);
            push(&c.denominator);
        }
        push(&self.energy_scale);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{GradP, WeightedPower};

    fn handles(p: f64, q: f64, r: f64) -> (Handle, Handle, Handle) {
        let g = Arc::new(Grid::interval(1.0, 16).unwrap());
        (
            Arc::new(GradP::new(g.clone(), p).unwrap()),
            Arc::new(WeightedPower::new(g.clone(), q, None).unwrap()),
            Arc::new(WeightedPower::new(g, r, None).unwrap()),
        )
    }

    #[test]
    fn class_one_degree_check() {
        let (n, a, b) = handles(2.0, 1.5, 3.0);
        let m = ModelSpec::class_one("cc", n, a, b).unwrap();
        assert_eq!(m.class(), ClassTag::ClassOne);
        assert_eq!(m.triple().unwrap().sign_a, SignA::Minus);
        let (n, a, b) = handles(2.0, 2.5, 3.0);
        assert!(matches!(ModelSpec::class_one("bad", n, a, b), Err(FibrateError::BadDegrees(_))));
    }

    #[test]
    fn class_two_degree_check() {
        let (n, a, b) = handles(2.0, 4.0, 3.0);
        let m = ModelSpec::class_two("k", n, a, b).unwrap();
        assert_eq!(m.direction(), Direction::Maximize);
        assert!(m.i2_term().coeff < 0.0);
        let (n, a, b) = handles(2.0, 1.5, 3.0);
        assert!(ModelSpec::class_two("bad", n, a, b).is_err());
    }

    #[test]
    fn phi_vanishes_at_rayleigh_quotient() {
        let (n, a, b) = handles(2.0, 1.5, 3.0);
        let m = ModelSpec::class_one("cc", n, a, b).unwrap();
        let u = m.grid().sample(|x| (std::f64::consts::PI * x[0]).sin());
        let mu = m.i1(&u) / m.i2(&u);
        assert!(m.phi(mu, &u).abs() < 1e-13 * m.phi_scale(mu, &u));
    }
}
