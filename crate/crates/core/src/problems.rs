//! The five model problems wired into [`ModelSpec`]s.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FibrateError, Result};
use crate::functionals::{GradP, GradPSquared, Handle, LinearCombination, WeightedPower};
use crate::grid::{Grid, GridKind};
use crate::io::load_field;
use crate::model::{ClosedT0, Direction, ModelSpec, NehariClass, Term};
use crate::potential::PotentialEnergy;

/// A weight function: a constant or a persisted field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Constant(f64),
    File(PathBuf),
}

impl Default for Weight {
    fn default() -> Self {
        Weight::Constant(1.0)
    }
}

impl Weight {
    /// Node values on `grid`; relative paths resolve against `base`.
    pub fn resolve(&self, grid: &Grid, base: &Path) -> Result<Vec<f64>> {
        match self {
            Weight::Constant(c) => {
                if !c.is_finite() {
                    return Err(FibrateError::BadParams(format!("weight constant {c} is not finite")));
                }
                Ok(vec![*c; grid.len()])
            }
            Weight::File(p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let f = load_field(&path, grid)?;
                if !f.is_finite() {
                    return Err(FibrateError::BadParams(format!("{} has non-finite values", path.display())));
                }
                Ok(f.into_values())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemParams {
    ConcaveConvex {
        p: f64,
        q: f64,
        r: f64,
        #[serde(default)]
        f: Weight,
        #[serde(default)]
        g: Weight,
    },
    Kirchhoff {
        a: f64,
        r: f64,
        #[serde(default)]
        f: Weight,
    },
    SchrodingerPoisson {
        omega: f64,
        a: f64,
        p: f64,
    },
    PqLaplacian {
        p: f64,
        q: f64,
        r: f64,
        #[serde(default)]
        f: Weight,
        #[serde(default)]
        g: Weight,
    },
    Semilinear {
        q: f64,
        r: f64,
    },
}

impl ProblemParams {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ProblemParams::ConcaveConvex { .. } => "concave_convex",
            ProblemParams::Kirchhoff { .. } => "kirchhoff",
            ProblemParams::SchrodingerPoisson { .. } => "schrodinger_poisson",
            ProblemParams::PqLaplacian { .. } => "pq_laplacian",
            ProblemParams::Semilinear { .. } => "semilinear",
        }
    }
}

fn dimension(grid: &Grid) -> f64 {
    match grid.kind() {
        GridKind::Interval => 1.0,
        GridKind::Rectangle => 2.0,
        GridKind::Radial => 3.0,
    }
}

/// Critical Sobolev exponent `Np/(N−p)`, infinite when `p ≥ N`.
pub fn sobolev_critical(p: f64, dim: f64) -> f64 {
    if p >= dim {
        f64::INFINITY
    } else {
        dim * p / (dim - p)
    }
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(FibrateError::BadParams(msg()))
    }
}

fn check_f(f: &[f64]) -> Result<()> {
    let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    require(max > 0.0, || "weight f must be positive somewhere".into())
}

fn check_g(g: &[f64]) -> Result<()> {
    require(g.iter().all(|&x| x > 0.0), || "weight g must be positive everywhere".into())
}

fn optional_weight(w: Vec<f64>) -> Option<Vec<f64>> {
    if w.iter().all(|&x| x == 1.0) {
        None
    } else {
        Some(w)
    }
}

fn grad(grid: &Arc<Grid>, p: f64) -> Result<Handle> {
    Ok(Arc::new(GradP::new(grid.clone(), p)?))
}

fn power(grid: &Arc<Grid>, s: f64, w: Option<Vec<f64>>) -> Result<Handle> {
    Ok(Arc::new(WeightedPower::new(grid.clone(), s, w)?))
}

/// Validates `params` against `grid` and assembles the model. Weight files
/// are resolved relative to `base`.
pub fn build_problem(params: &ProblemParams, grid: Arc<Grid>, base: &Path) -> Result<ModelSpec> {
    let dim = dimension(&grid);
    let name = params.kind_name();
    match params {
        ProblemParams::ConcaveConvex { p, q, r, f, g } => {
            let (p, q, r) = (*p, *q, *r);
            let ps = sobolev_critical(p, dim);
            require(1.0 < q && q < p && p < r && r < ps, || {
                format!("concave_convex needs 1 < q < p < r < p* = {ps}, got p={p}, q={q}, r={r}")
            })?;
            let (fw, gw) = (f.resolve(&grid, base)?, g.resolve(&grid, base)?);
            check_f(&fw)?;
            check_g(&gw)?;
            ModelSpec::class_one(
                name,
                grad(&grid, p)?,
                power(&grid, q, optional_weight(gw))?,
                power(&grid, r, optional_weight(fw))?,
            )
        }
        ProblemParams::Kirchhoff { a, r, f } => {
            let (a, r) = (*a, *r);
            require(a > 0.0 && a.is_finite(), || format!("kirchhoff needs a > 0, got {a}"))?;
            require(2.0 < r && r < 4.0, || format!("kirchhoff needs 2 < r < 4, got {r}"))?;
            let fw = f.resolve(&grid, base)?;
            check_f(&fw)?;
            let n: Handle = Arc::new(LinearCombination::scaled(a, grad(&grid, 2.0)?).with_label("a*grad_p(2)"));
            ModelSpec::class_two(
                name,
                n,
                Arc::new(GradPSquared::new(grid.clone())),
                power(&grid, r, optional_weight(fw))?,
            )
        }
        ProblemParams::SchrodingerPoisson { omega, a, p } => {
            let (omega, a, p) = (*omega, *a, *p);
            if grid.kind() != GridKind::Radial {
                return Err(FibrateError::GridMismatch(
                    "schrodinger_poisson requires a radial grid".into(),
                ));
            }
            require(omega > 0.0 && omega.is_finite(), || format!("omega must be positive, got {omega}"))?;
            require(a >= 0.0 && a.is_finite(), || format!("a must be nonnegative, got {a}"))?;
            require(2.0 < p && p < 3.0, || format!("schrodinger_poisson needs 2 < p < 3, got {p}"))?;
            let n: Handle = Arc::new(
                LinearCombination::new(vec![(1.0, grad(&grid, 2.0)?), (omega, power(&grid, 2.0, None)?)])?
                    .with_label("grad_p(2)+omega*|u|^2"),
            );
            ModelSpec::class_two(name, n, Arc::new(PotentialEnergy::new(grid.clone(), a)?), power(&grid, p, None)?)
        }
        ProblemParams::PqLaplacian { p, q, r, f, g } => {
            let (p, q, r) = (*p, *q, *r);
            let ps = sobolev_critical(p, dim);
            require(1.0 < q && q < p && p < r && r < ps, || {
                format!("pq_laplacian needs 1 < q < p < r < p* = {ps}, got p={p}, q={q}, r={r}")
            })?;
            let (fw, gw) = (f.resolve(&grid, base)?, g.resolve(&grid, base)?);
            check_f(&fw)?;
            check_g(&gw)?;
            let np = grad(&grid, p)?;
            let b = power(&grid, r, optional_weight(fw))?;
            ModelSpec::custom(
                name,
                vec![Term::new(1.0 / p, np.clone()), Term::new(1.0 / q, grad(&grid, q)?), Term::new(-1.0 / r, b.clone())],
                Term::new(1.0 / q, power(&grid, q, optional_weight(gw))?),
                Some(ClosedT0 {
                    kappa: (r / p) * (p - q) / (r - q),
                    numerator: np.clone(),
                    denominator: b,
                    exponent: r - p,
                }),
                np,
                Direction::Minimize,
                Some(NehariClass::NMinus),
            )
        }
        ProblemParams::Semilinear { q, r } => {
            let (q, r) = (*q, *r);
            let crit = sobolev_critical(2.0, dim);
            require(2.0 < q && q < r && r < crit, || {
                format!("semilinear needs 2 < q < r < 2* = {crit}, got q={q}, r={r}")
            })?;
            let n2 = grad(&grid, 2.0)?;
            let lq = power(&grid, q, None)?;
            let lr = power(&grid, r, None)?;
            ModelSpec::custom(
                name,
                vec![Term::new(0.5, n2.clone()), Term::new(-1.0 / q, lq.clone()), Term::new(1.0 / r, lr.clone())],
                Term::new(0.5, power(&grid, 2.0, None)?),
                Some(ClosedT0 { kappa: (r / q) * (q - 2.0) / (r - 2.0), numerator: lq, denominator: lr, exponent: r - q }),
                n2,
                Direction::Minimize,
                // the existence theorem states N-; the computed label is N+
                Some(NehariClass::NMinus),
            )
        }
    }
}

/// Lower bound `Λ ≥ λ₁ − (2/q)((r−q)/(r−2))κ^{(q−2)/(r−q)}` for the
/// semilinear problem, with `κ = (r/q)(q−2)/(r−2)`.
pub fn semilinear_lower_bound(q: f64, r: f64, lambda1: f64) -> f64 {
    let kappa = (r / q) * (q - 2.0) / (r - 2.0);
    lambda1 - (2.0 / q) * ((r - q) / (r - 2.0)) * kappa.powf((q - 2.0) / (r - q))
}

/// The two pieces of the `(p,q)` quotient: the concave-convex part
/// `Λ_cc` and `K = ∫|∇u|^q / ∫g|u|^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqSplit {
    pub lambda_cc: f64,
    pub k: f64,
}

impl PqSplit {
    pub fn total(&self) -> f64 {
        self.lambda_cc + self.k
    }
}

/// Evaluates the `(p,q)` quotient through its closed split form.
pub fn pq_split(params: &ProblemParams, grid: Arc<Grid>, base: &Path, u: &[f64]) -> Result<PqSplit> {
    let ProblemParams::PqLaplacian { p, q, r, f, g } = params else {
        return Err(FibrateError::BadParams("pq_split needs pq_laplacian parameters".into()));
    };
    let (p, q, r) = (*p, *q, *r);
    let fw = optional_weight(f.resolve(&grid, base)?);
    let gw = optional_weight(g.resolve(&grid, base)?);
    let np = grad(&grid, p)?.evaluate(u);
    let nq = grad(&grid, q)?.evaluate(u);
    let ga = power(&grid, q, gw)?.evaluate(u);
    let fb = power(&grid, r, fw)?.evaluate(u);
    if !(fb > 0.0) {
        return Err(FibrateError::NotInD);
    }
    let kappa = (r / p) * (p - q) / (r - q);
    let lambda_cc = (q / p) * ((r - p) / (r - q)) * kappa.powf((p - q) / (r - p)) * np.powf((r - q) / (r - p))
        / (ga * fb.powf((p - q) / (r - p)));
    Ok(PqSplit { lambda_cc, k: nq / ga })
}
