//! Executable invariant checks, finite-difference oracles, fiber scans and
//! analytic bound checks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fiber::{
    lambda_grad_vector, lambda_value, membership_d, nehari_class, solve_t0, Fiber, CriticalType,
};
use crate::functionals::{Functional, Handle};
use crate::grid::{Field, Grid};
use crate::model::{ClassTag, Direction, ModelSpec, NehariClass};
use crate::optimizer::{laplacian_modes, random_d_member};

const MODES: usize = 16;
const MAX_DETAILS: usize = 10;
const HOMOGENEITY_TOL: f64 = 1e-12;
const EULER_TOL: f64 = 1e-10;
const FD_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-4;
const SCALING_TOL: f64 = 1e-10;
const ZERO_ENERGY_TOL: f64 = 1e-12;
const SCALES: [f64; 3] = [0.5, 2.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_error: f64,
    pub tolerance: f64,
    pub sample_count: usize,
    pub details: Vec<String>,
}

/// Accumulates per-sample errors against one tolerance.
struct Check {
    name: String,
    tol: f64,
    worst: f64,
    count: usize,
    details: Vec<String>,
}

impl Check {
    fn new(name: impl Into<String>, tol: f64) -> Self {
        Check { name: name.into(), tol, worst: 0.0, count: 0, details: Vec::new() }
    }

    fn record(&mut self, err: f64, what: impl FnOnce() -> String) {
        self.count += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if err > self.worst {
            self.worst = err;
        }
        if err > self.tol && self.details.len() < MAX_DETAILS {
            self.details.push(format!("{}: error {err:e}", what()));
        }
    }

    fn fail(&mut self, what: String) {
        self.record(f64::INFINITY, || what);
    }

    fn report(self) -> CheckReport {
        CheckReport {
            passed: self.worst <= self.tol,
            name: self.name,
            worst_error: self.worst,
            tolerance: self.tol,
            sample_count: self.count,
            details: self.details,
        }
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / scale.max(f64::MIN_POSITIVE)
    }
}

fn combo(u: &[f64], s: f64, v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a + s * b).collect()
}

/// Error of `F'(u)v` against `(F(u+hv) − F(u−hv))/2h`, relative to
/// `‖F'(u)‖‖v‖`.
pub fn fd_error(handle: &dyn Functional, u: &[f64], v: &[f64], h: f64) -> f64 {
    let grid = handle.grid();
    let g = handle.gradient(u);
    let an = grid.dot(&g, v);
    let fd = (handle.evaluate(&combo(u, h, v)) - handle.evaluate(&combo(u, -h, v))) / (2.0 * h);
    rel(an, fd, grid.norm(&g) * grid.norm(v))
}

pub fn directional_fd_check(handle: &dyn Functional, u: &[f64], v: &[f64], h: f64) -> CheckReport {
    let mut c = Check::new(format!("fd_gradient[{}]", handle.name()), FD_TOL);
    c.record(fd_error(handle, u, v, h), || format!("h = {h:e}"));
    c.report()
}

/// Fields used by the suites: smooth random members of `D`, quadrature-unit.
pub fn random_members(model: &ModelSpec, count: usize, seed: u64) -> Result<Vec<Field>> {
    let modes = laplacian_modes(model.grid(), MODES)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .filter_map(|_| random_d_member(model, &modes, &mut rng).map(Field::new))
        .collect())
}

/// Smooth random unit field, not filtered by membership.
fn random_directions(grid: &Grid, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let modes = laplacian_modes(grid, MODES)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| crate::optimizer::smooth_random_field(grid, &modes, &mut rng))
        .collect())
}

fn component_checks(components: &[Handle], fields: &[Field], dirs: &[Vec<f64>]) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let mut hom = Check::new("homogeneity", HOMOGENEITY_TOL);
    let mut euler = Check::new("euler_identity", EULER_TOL);
    let mut fd = Check::new("component_gradient_fd", FD_TOL);
    let mut even = Check::new("component_evenness", HOMOGENEITY_TOL);
    for f in components {
        let d = f.degree();
        for (k, u) in fields.iter().enumerate() {
            let base = f.evaluate(u);
            for s in SCALES {
                let su: Vec<f64> = u.iter().map(|x| s * x).collect();
                let expect = s.powf(d) * base;
                hom.record(rel(f.evaluate(&su), expect, expect.abs()), || {
                    format!("{} sample {k} s={s}", f.name())
                });
            }
            let dd = f.directional(u, u);
            euler.record(rel(dd, d * base, (d * base).abs()), || format!("{} sample {k}", f.name()));
            fd.record(fd_error(f.as_ref(), u, &dirs[k], FD_STEP), || format!("{} sample {k}", f.name()));
            if f.is_even() {
                let neg: Vec<f64> = u.iter().map(|x| -x).collect();
                even.record(rel(f.evaluate(&neg), base, base.abs()), || format!("{} sample {k}", f.name()));
            }
        }
    }
    out.push(hom.report());
    out.push(euler.report());
    out.push(fd.report());
    out.push(even.report());
    out
}

/// The full invariant suite on `sample_count` random members of `D`.
pub fn invariant_suite(model: &ModelSpec, sample_count: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let fields = random_members(model, sample_count, seed)?;
    let dirs = random_directions(model.grid(), fields.len(), seed.wrapping_add(1))?;
    let grid = model.grid();
    let mut reports = component_checks(&model.components(), &fields, &dirs);

    let mut t0_scaling = Check::new("t0_scaling", SCALING_TOL);
    let mut lam_hom = Check::new("lambda_zero_homogeneity", SCALING_TOL);
    let mut lam_even = Check::new("lambda_evenness", SCALING_TOL);
    let mut natural = Check::new("natural_constraint", SCALING_TOL);
    let mut zero_energy = Check::new("zero_energy_identity", ZERO_ENERGY_TOL);
    let mut ej = Check::new("nehari_sign_consistency", 0.0);
    let mut scan = Check::new("fiber_single_sign_change", 0.0);
    let mut lam_fd = Check::new("lambda_gradient_fd", FD_TOL);
    let mut closed = Check::new("closed_t0_matches_scan", SCALING_TOL);
    let mut fiber_type = Check::new("power_class_fiber_maximum", 0.0);
    let generic = model.generic();

    for (k, u) in fields.iter().enumerate() {
        let label = || format!("sample {k}");
        let (d, g) = match lambda_grad_vector(model, u) {
            Ok(x) => x,
            Err(e) => {
                for c in [&mut t0_scaling, &mut lam_hom, &mut natural, &mut zero_energy] {
                    c.fail(format!("sample {k}: {e}"));
                }
                continue;
            }
        };
        for s in SCALES {
            let su: Vec<f64> = u.iter().map(|x| s * x).collect();
            match solve_t0(model, &su) {
                Ok(ds) => {
                    t0_scaling.record(rel(ds.t0, d.t0 / s, d.t0 / s), || format!("sample {k} s={s}"));
                    lam_hom.record(rel(ds.lambda, d.lambda, d.lambda.abs()), || format!("sample {k} s={s}"));
                }
                Err(e) => t0_scaling.fail(format!("sample {k} s={s}: {e}")),
            }
        }
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        match solve_t0(model, &neg) {
            Ok(dn) => {
                let e = rel(dn.lambda, d.lambda, d.lambda.abs()).max(rel(dn.t0, d.t0, d.t0));
                lam_even.record(e, label);
            }
            Err(e) => lam_even.fail(format!("sample {k}: {e}")),
        }

        let gnorm = grid.norm(&g);
        let uu = grid.dot(&g, u);
        natural.record(uu.abs() / (gnorm * grid.norm(u) + d.lambda.abs()), label);

        let v: Vec<f64> = u.iter().map(|x| d.t0 * x).collect();
        let phi = model.phi(d.lambda, &v);
        zero_energy.record(phi.abs() / model.phi_scale(d.lambda, &v), label);

        match nehari_class(model, d.lambda, &v) {
            Ok(c) => {
                let predicted = if model.i2(&v).signum() * d.psi_second.signum() < 0.0 {
                    NehariClass::NMinus
                } else {
                    NehariClass::NPlus
                };
                ej.record(if c == predicted { 0.0 } else { 1.0 }, label);
            }
            Err(e) => ej.fail(format!("sample {k}: {e}")),
        }

        match Fiber::new(model, u) {
            Ok(f) => scan.record((f.sign_changes() as f64 - 1.0).abs(), label),
            Err(e) => scan.fail(format!("sample {k}: {e}")),
        }

        let dir = &dirs[k];
        let an = grid.dot(&g, dir);
        let lp = lambda_value(model, &combo(u, FD_STEP, dir));
        let lm = lambda_value(model, &combo(u, -FD_STEP, dir));
        match (lp, lm) {
            (Ok(lp), Ok(lm)) => {
                let fd = (lp - lm) / (2.0 * FD_STEP);
                lam_fd.record(rel(an, fd, gnorm * grid.norm(dir)), label);
            }
            _ => lam_fd.fail(format!("sample {k}: perturbed field left D")),
        }

        if model.closed_t0().is_some() {
            match solve_t0(&generic, u) {
                Ok(dg) => closed.record(rel(dg.t0, d.t0, d.t0), label),
                Err(e) => closed.fail(format!("sample {k}: {e}")),
            }
        }

        if matches!(model.class(), ClassTag::ClassOne | ClassTag::ClassTwo) {
            fiber_type.record(if d.critical_type == CriticalType::Max { 0.0 } else { 1.0 }, label);
        }
    }

    reports.extend([
        t0_scaling.report(),
        lam_hom.report(),
        lam_even.report(),
        natural.report(),
        zero_energy.report(),
        ej.report(),
        scan.report(),
        lam_fd.report(),
    ]);
    if model.closed_t0().is_some() {
        reports.push(closed.report());
    }
    if matches!(model.class(), ClassTag::ClassOne | ClassTag::ClassTwo) {
        reports.push(fiber_type.report());
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub t: f64,
    pub psi: f64,
    pub psi_prime: f64,
    pub psi_second: f64,
}

/// `(t, ψ, ψ', ψ'')` on a geometric grid of `m` points in `[t_min, t_max]`.
pub fn fiber_scan(model: &ModelSpec, u: &[f64], t_min: f64, t_max: f64, m: usize) -> Result<Vec<ScanRow>> {
    if !(t_min > 0.0 && t_max > t_min && m >= 2) {
        return Err(crate::error::FibrateError::BadParams(format!(
            "scan needs 0 < t_min < t_max and m ≥ 2, got [{t_min}, {t_max}], m={m}"
        )));
    }
    let fiber = Fiber::new(model, u)?;
    Ok(Fiber::geometric_grid(t_min, t_max, m)
        .into_iter()
        .map(|t| {
            let (psi, psi_prime, psi_second) = fiber.eval(t);
            ScanRow { t, psi, psi_prime, psi_second }
        })
        .collect())
}

/// Sign changes of `ψ'` along a scan table.
pub fn scan_sign_changes(rows: &[ScanRow]) -> usize {
    rows.windows(2).filter(|w| w[0].psi_prime * w[1].psi_prime < 0.0).count()
}

/// Lower-bound check over `count` random sphere fields: `min Λ ≥ lower − 1e−8`
/// when `lower` is given, `min Λ > 0` otherwise.
pub fn bound_check(model: &ModelSpec, lower: Option<f64>, count: usize, seed: u64) -> Result<CheckReport> {
    let fields = random_members(model, count, seed)?;
    let name = match lower {
        Some(_) => "lambda_lower_bound",
        None => "lambda_positive",
    };
    let mut c = Check::new(name, 0.0);
    let mut min = f64::INFINITY;
    for (k, u) in fields.iter().enumerate() {
        match lambda_value(model, u) {
            Ok(l) => {
                min = min.min(l);
                let violation = match lower {
                    Some(b) => (b - 1e-8 - l).max(0.0),
                    None => {
                        if l > 0.0 {
                            0.0
                        } else {
                            l.abs().max(f64::MIN_POSITIVE)
                        }
                    }
                };
                c.record(violation, || format!("sample {k}: Λ = {l:e}"));
            }
            Err(e) => c.fail(format!("sample {k}: {e}")),
        }
    }
    let mut r = c.report();
    r.details.insert(0, format!("min Λ = {min:e}"));
    Ok(r)
}

/// Heuristic divergence trend: `Λ` on eigenfunctions of increasing index
/// should not decrease for minimizing models (nor increase for maximizing
/// ones).
pub fn divergence_trend(model: &ModelSpec, count: usize) -> Result<CheckReport> {
    let modes = laplacian_modes(model.grid(), count)?;
    let mut c = Check::new("divergence_trend (heuristic)", 0.0);
    let mut prev: Option<f64> = None;
    for (k, m) in modes.iter().enumerate() {
        if !membership_d(model, m) {
            continue;
        }
        let l = lambda_value(model, m)?;
        if let Some(p) = prev {
            let drop = match model.direction() {
                Direction::Minimize => (p - l) / p.abs(),
                Direction::Maximize => (l - p) / p.abs(),
            };
            c.record(drop.max(0.0), || format!("mode {}: Λ = {l:e} after {p:e}", k + 1));
        }
        prev = Some(l);
    }
    Ok(c.report())
}

/// Wraps a functional and misreports its degree.
#[derive(Debug)]
pub struct MisreportedDegree {
    pub inner: Handle,
    pub claimed: f64,
}

impl Functional for MisreportedDegree {
    fn name(&self) -> String {
        format!("{}[degree claimed {}]", self.inner.name(), self.claimed)
    }
    fn grid(&self) -> &Grid {
        self.inner.grid()
    }
    fn degree(&self) -> f64 {
        self.claimed
    }
    fn evaluate(&self, u: &[f64]) -> f64 {
        self.inner.evaluate(u)
    }
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.inner.gradient(u)
    }
}

/// Wraps a functional and perturbs its gradient by a relative factor.
#[derive(Debug)]
pub struct PerturbedGradient {
    pub inner: Handle,
    pub factor: f64,
}

impl Functional for PerturbedGradient {
    fn name(&self) -> String {
        format!("{}[gradient x{}]", self.inner.name(), self.factor)
    }
    fn grid(&self) -> &Grid {
        self.inner.grid()
    }
    fn degree(&self) -> f64 {
        self.inner.degree()
    }
    fn evaluate(&self, u: &[f64]) -> f64 {
        self.inner.evaluate(u)
    }
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.inner.gradient(u).into_iter().map(|g| g * self.factor).collect()
    }
}

/// The last `I₁` component, the one negative controls corrupt.
fn control_target(model: &ModelSpec) -> Handle {
    model.i1_terms().last().expect("I1 has a term").functional.clone()
}

/// Negative control: the last `I₁` component claims degree `d + delta`.
pub fn with_misreported_degree(model: &ModelSpec, delta: f64) -> ModelSpec {
    let target = control_target(model);
    let claimed = target.degree() + delta;
    model.with_replaced(&target, Arc::new(MisreportedDegree { inner: target.clone(), claimed }))
}

/// Negative control: the last `I₁` component's gradient is scaled by `factor`.
pub fn with_perturbed_gradient(model: &ModelSpec, factor: f64) -> ModelSpec {
    let target = control_target(model);
    model.with_replaced(&target, Arc::new(PerturbedGradient { inner: target.clone(), factor }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{GradP, WeightedPower};
    use crate::problems::{build_problem, ProblemParams};
    use std::f64::consts::PI;
    use std::path::Path;

    fn semilinear(n: usize) -> ModelSpec {
        let g = Arc::new(Grid::interval(1.0, n).unwrap());
        build_problem(&ProblemParams::Semilinear { q: 3.0, r: 4.0 }, g, Path::new(".")).unwrap()
    }

    #[test]
    fn quadratic_fd_is_exact() {
        let g = Arc::new(Grid::interval(1.0, 64).unwrap());
        let f = GradP::new(g.clone(), 2.0).unwrap();
        let u = g.sample(|x| (PI * x[0]).sin());
        let v = g.sample(|x| x[0] * (1.0 - x[0]));
        assert!(fd_error(&f, &u, &v, 1e-4) < 1e-9);
    }

    #[test]
    fn quartic_fd_converges_at_second_order() {
        let g = Arc::new(Grid::interval(1.0, 64).unwrap());
        let f = WeightedPower::new(g.clone(), 4.0, None).unwrap();
        let u = g.sample(|x| (PI * x[0]).sin());
        let v = g.sample(|x| (3.0 * PI * x[0]).sin() + 0.2);
        let e3 = fd_error(&f, &u, &v, 1e-3);
        let e4 = fd_error(&f, &u, &v, 1e-4);
        assert!(directional_fd_check(&f, &u, &v, 1e-4).passed);
        assert!((e3 / e4 - 100.0).abs() < 5.0, "ratio {}", e3 / e4);
    }

    #[test]
    fn suite_passes_on_semilinear() {
        let reports = invariant_suite(&semilinear(64), 10, 7).unwrap();
        for r in &reports {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn negative_controls_fail() {
        let m = semilinear(64);
        let bad = invariant_suite(&with_misreported_degree(&m, 0.25), 5, 3).unwrap();
        assert!(bad.iter().any(|r| r.name == "homogeneity" && !r.passed));
        let bad = invariant_suite(&with_perturbed_gradient(&m, 1.001), 5, 3).unwrap();
        assert!(bad.iter().any(|r| r.name == "component_gradient_fd" && !r.passed));
    }

    #[test]
    fn scan_has_one_sign_change_and_mu0_at_one() {
        let m = semilinear(64);
        let u = m.grid().sample(|x| (PI * x[0]).sin());
        let rows = fiber_scan(&m, &u, 1e-3, 1e3, 601).unwrap();
        assert_eq!(scan_sign_changes(&rows), 1);
        let at_one = rows.iter().find(|r| (r.t - 1.0).abs() < 1e-12).unwrap();
        let mu0 = crate::fiber::mu0(&m, &u).unwrap();
        assert!((at_one.psi - mu0).abs() < 1e-12 * mu0.abs());
    }

    #[test]
    fn scan_outside_d_is_monotone() {
        let g = Arc::new(Grid::interval(1.0, 64).unwrap());
        let n: Handle = Arc::new(GradP::new(g.clone(), 2.0).unwrap());
        let a: Handle = Arc::new(WeightedPower::new(g.clone(), 1.5, None).unwrap());
        let b: Handle = Arc::new(WeightedPower::new(g.clone(), 3.0, Some(vec![-1.0; g.len()])).unwrap());
        let m = ModelSpec::class_one("negative_b", n, a, b).unwrap();
        let u = g.sample(|x| (PI * x[0]).sin());
        assert!(!membership_d(&m, &u));
        let rows = fiber_scan(&m, &u, 1e-3, 1e3, 301).unwrap();
        assert_eq!(scan_sign_changes(&rows), 0);
    }

    #[test]
    fn bound_and_trend_hold_on_semilinear() {
        let m = semilinear(64);
        let lambda1 = crate::eigen::eigenpairs(m.grid(), 1).unwrap()[0].value;
        let lower = crate::problems::semilinear_lower_bound(3.0, 4.0, lambda1);
        assert!(bound_check(&m, Some(lower), 200, 4).unwrap().passed);
        assert!(bound_check(&m, Some(lower + 1e3), 20, 4).map(|r| !r.passed).unwrap());
        assert!(divergence_trend(&m, 10).unwrap().passed);
    }
}
