//! Critical points of `Λ` restricted to the unit sphere of the quadrature
//! norm, multistart with deduplication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::eigenpairs;
use crate::error::{FibrateError, Result};
use crate::fiber::{certify_zero_energy, FiberDiagnostics, lambda_grad_vector, membership_d, CriticalPointRecord};
use crate::grid::{Field, Grid};
use crate::model::{Direction, ModelSpec};

const MAX_D_EXITS: usize = 30;
const SMOOTH_MODES: usize = 16;
const LBFGS_MEMORY: usize = 8;

/// Accepted trial point: iterate, its fiber diagnostics and `Λ'` representer.
type Accepted = (Vec<f64>, FiberDiagnostics, Vec<f64>);

fn default_max_iters() -> usize {
    5000
}
fn default_tol_grad() -> f64 {
    1e-8
}
fn default_armijo_c() -> f64 {
    1e-4
}
fn default_backtrack() -> f64 {
    0.5
}
fn default_step() -> f64 {
    1.0
}
fn default_tol_energy() -> f64 {
    1e-9
}
fn default_tol_residual() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    /// Overrides the model's natural direction.
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Stop once the tangential gradient's quadrature norm drops below this.
    #[serde(default = "default_tol_grad")]
    pub tol_grad: f64,
    #[serde(default = "default_armijo_c")]
    pub armijo_c: f64,
    #[serde(default = "default_backtrack")]
    pub backtrack_factor: f64,
    #[serde(default = "default_step")]
    pub initial_step: f64,
    #[serde(default)]
    pub seed: u64,
    /// Certification tolerance on the normalized energy residual.
    #[serde(default = "default_tol_energy")]
    pub tol_energy: f64,
    /// Certification tolerance on the normalized gradient residual.
    #[serde(default = "default_tol_residual")]
    pub tol_residual: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            direction: None,
            max_iters: default_max_iters(),
            tol_grad: default_tol_grad(),
            armijo_c: default_armijo_c(),
            backtrack_factor: default_backtrack(),
            initial_step: default_step(),
            seed: 0,
            tol_energy: default_tol_energy(),
            tol_residual: default_tol_residual(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_grad, self.armijo_c, self.initial_step, self.tol_energy, self.tol_residual];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(FibrateError::Config("tolerances and steps must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(FibrateError::Config("backtrack_factor must lie in (0, 1)".into()));
        }
        if self.armijo_c >= 1.0 {
            return Err(FibrateError::Config("armijo_c must lie in (0, 1)".into()));
        }
        if self.max_iters == 0 {
            return Err(FibrateError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unit-sphere optimizer output: the certified record plus its trace.
#[derive(Debug, Clone)]
pub struct Solution {
    pub record: CriticalPointRecord,
    /// `Λ` at every accepted iterate, the start included.
    pub trace: Vec<f64>,
    /// Final iterate on the unit sphere.
    pub u: Field,
}

fn normalized(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let n = grid.norm(u);
    u.iter().map(|x| x / n).collect()
}

fn tangential(grid: &Grid, g: &[f64], u: &[f64]) -> Vec<f64> {
    let c = grid.dot(g, u);
    g.iter().zip(u).map(|(a, b)| a - c * b).collect()
}

/// Sobolev representer `(K + W)⁻¹ W g`.
fn sobolev(grid: &Grid, g: &[f64]) -> Vec<f64> {
    let wg: Vec<f64> = g.iter().zip(grid.weights()).map(|(a, w)| a * w).collect();
    grid.solve_shifted(1.0, &wg)
}

/// Scale converting the tangential gradient norm of `Λ` at `u` into the
/// normalized gradient residual of `Φ_μ` at `v = t₀u`.
fn residual_factor(model: &ModelSpec, u: &[f64], t0: f64) -> f64 {
    let v: Vec<f64> = u.iter().map(|x| t0 * x).collect();
    model.i2(&v).abs() / (t0 * (1.0 + t0))
}

/// Two-loop recursion with the Sobolev representer as the initial inverse
/// Hessian, all inner products in the quadrature pairing.
fn quasi_newton_direction(grid: &Grid, g: &[f64], pairs: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * grid.dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let mut r = sobolev(grid, &q);
    if let Some((s, y, _)) = pairs.last() {
        let py = sobolev(grid, y);
        let gamma = grid.dot(s, y) / grid.dot(y, &py);
        if gamma.is_finite() && gamma > 0.0 {
            r.iter_mut().for_each(|x| *x *= gamma);
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * grid.dot(y, &r);
        r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - b) * si);
    }
    r
}

/// Sobolev-preconditioned limited-memory quasi-Newton iteration on the unit
/// sphere with Armijo backtracking and renormalization retraction.
pub fn optimize_lambda(model: &ModelSpec, init: &[f64], opts: &SolveOptions) -> Result<Solution> {
    let grid = model.grid().clone();
    grid.check_field(init)?;
    if !membership_d(model, init) {
        return Err(FibrateError::NotInD);
    }
    let sign = match opts.direction.unwrap_or(model.direction()) {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let mut u = normalized(&grid, init);
    let (diag, g) = lambda_grad_vector(model, &u)?;
    let mut lam = diag.lambda;
    let mut t0 = diag.t0;
    // gradient of sign·Λ, tangential
    let mut gt: Vec<f64> = tangential(&grid, &g, &u).into_iter().map(|x| sign * x).collect();
    let mut trace = vec![lam];
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut grad_step = opts.initial_step;

    let finish = |u: Vec<f64>, trace: Vec<f64>, it: usize| -> Result<Solution> {
        let mut record = certify_zero_energy(model, &u, opts.tol_energy, opts.tol_residual)?;
        record.iterations = it;
        Ok(Solution { record, trace, u: Field::new(u) })
    };

    for it in 0..opts.max_iters {
        let gnorm = grid.norm(&gt);
        let residual = gnorm * residual_factor(model, &u, t0);
        if gnorm <= opts.tol_grad && residual <= 0.1 * opts.tol_residual {
            return finish(u, trace, it);
        }
        let noise = 8.0 * f64::EPSILON * lam.abs() + f64::MIN_POSITIVE;
        let search = |d: &[f64], slope: f64, mut step: f64| -> Result<Option<Accepted>> {
            let mut exits = 0;
            loop {
                if step * slope <= 1e-3 * noise {
                    return Ok(None);
                }
                let trial: Vec<f64> = u.iter().zip(d).map(|(a, di)| a - step * di).collect();
                let trial = normalized(&grid, &trial);
                match lambda_grad_vector(model, &trial) {
                    Ok((dg, g2)) => {
                        if sign * (dg.lambda - lam) <= -opts.armijo_c * step * slope + noise {
                            return Ok(Some((trial, dg, g2)));
                        }
                        step *= opts.backtrack_factor;
                    }
                    Err(FibrateError::NotInD | FibrateError::ZeroDenominator(_) | FibrateError::DegenerateFiber(_)) => {
                        exits += 1;
                        if exits > MAX_D_EXITS {
                            return Err(FibrateError::LeftD(exits - 1));
                        }
                        step *= 0.5;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let mut accepted = None;
        if !pairs.is_empty() {
            let d = tangential(&grid, &quasi_newton_direction(&grid, &gt, &pairs), &u);
            let slope = grid.dot(&gt, &d);
            if slope > 0.0 {
                accepted = search(&d, slope, 1.0)?;
            }
        }
        if accepted.is_none() {
            pairs.clear();
            // unit-length Sobolev direction with a step carried across iterations
            let d = tangential(&grid, &sobolev(&grid, &gt), &u);
            let dn = grid.norm(&d);
            let d: Vec<f64> = d.iter().map(|x| x / dn).collect();
            let slope = grid.dot(&gt, &d);
            accepted = search(&d, slope, grad_step)?;
            if let Some((trial, _, _)) = &accepted {
                let moved: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
                grad_step = (2.0 * grid.norm(&moved)).min(opts.initial_step);
            }
        }
        let Some((trial, dg, g2)) = accepted else {
            // no representable decrease left: the iterate sits at the noise floor
            return finish(u, trace, it);
        };
        let gt2: Vec<f64> = tangential(&grid, &g2, &trial).into_iter().map(|x| sign * x).collect();
        let s: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
        let s = tangential(&grid, &s, &trial);
        let gt_moved = tangential(&grid, &gt, &trial);
        let y: Vec<f64> = gt2.iter().zip(&gt_moved).map(|(a, b)| a - b).collect();
        let sy = grid.dot(&s, &y);
        if sy > 1e-12 * grid.norm(&s) * grid.norm(&y) && sy > 0.0 {
            pairs.push((s, y, 1.0 / sy));
            if pairs.len() > LBFGS_MEMORY {
                pairs.remove(0);
            }
        }
        // carry the stored pairs into the new tangent space
        for (ps, py, rho) in pairs.iter_mut() {
            *ps = tangential(&grid, ps, &trial);
            *py = tangential(&grid, py, &trial);
            let sy = grid.dot(ps, py);
            *rho = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        }
        pairs.retain(|p| p.2 > 0.0);
        u = trial;
        lam = dg.lambda;
        t0 = dg.t0;
        gt = gt2;
        trace.push(lam);
    }
    let sol = finish(u, trace, opts.max_iters)?;
    if sol.record.converged {
        Ok(sol)
    } else {
        Err(FibrateError::MaxIters(opts.max_iters))
    }
}

/// Worker count from `FIBRATE_THREADS`, else the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var("FIBRATE_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f` over `items` on a pool sized by [`thread_count`], preserving order.
pub(crate) fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    match rayon::ThreadPoolBuilder::new().num_threads(thread_count()).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Gaussian combination of the given modes, normalized in the quadrature norm.
pub(crate) fn smooth_random_field(grid: &Grid, modes: &[Field], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for m in modes {
        let c: f64 = StandardNormal.sample(rng);
        for (o, x) in out.iter_mut().zip(m.iter()) {
            *o += c * x;
        }
    }
    normalized(grid, &out)
}

/// Random member of `D`, resampled until membership holds (at most 1000 tries).
pub fn random_d_member(model: &ModelSpec, modes: &[Field], rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    (0..1000)
        .map(|_| smooth_random_field(model.grid(), modes, rng))
        .find(|u| membership_d(model, u))
}

/// The first `k` Laplacian eigenfunctions, capped by the grid size.
pub fn laplacian_modes(grid: &Grid, k: usize) -> Result<Vec<Field>> {
    let k = k.min(grid.len() / 2).max(1);
    Ok(eigenpairs(grid, k)?.into_iter().map(|p| p.vector).collect())
}

/// Starting fields for multistart: eigenfunctions, then alternating smooth
/// random fields and random two-eigenfunction combinations.
pub fn starting_fields(model: &ModelSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let grid = model.grid();
    let modes = laplacian_modes(grid, SMOOTH_MODES.max(count.min(10)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = modes.iter().take(count.min(10)).map(|m| m.to_vec()).collect();
    let pool = modes.len().min(10);
    let mut k = 0usize;
    while starts.len() < count {
        let u = if k.is_multiple_of(2) || pool < 2 {
            smooth_random_field(grid, &modes, &mut rng)
        } else {
            let i = rand::Rng::random_range(&mut rng, 0..pool);
            let j = (i + 1 + rand::Rng::random_range(&mut rng, 0..pool - 1)) % pool;
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            let v: Vec<f64> = modes[i].iter().zip(modes[j].iter()).map(|(x, y)| a * x + b * y).collect();
            normalized(grid, &v)
        };
        k += 1;
        if k > 1000 * count {
            break;
        }
        if membership_d(model, &u) {
            starts.push(u);
        }
    }
    Ok(starts)
}

/// Distance between two fields modulo global sign, after normalization.
pub fn aligned_distance(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let a = normalized(grid, a);
    let b = normalized(grid, b);
    let minus: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let plus: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    grid.norm(&minus).min(grid.norm(&plus))
}

/// Converged solutions from several starts, deduplicated and sorted by `μ`.
pub fn multistart(model: &ModelSpec, count: usize, opts: &SolveOptions) -> Result<Vec<Solution>> {
    if count == 0 {
        return Err(FibrateError::BadParams("multistart needs at least one start".into()));
    }
    let starts = starting_fields(model, count, opts.seed)?;
    let results = parallel_map(&starts, |u| optimize_lambda(model, u, opts));
    let mut found: Vec<Solution> = results
        .into_iter()
        .filter_map(|r| r.ok())
        .filter(|s| s.record.converged)
        .collect();
    found.sort_by(|a, b| a.record.mu.total_cmp(&b.record.mu));
    let grid = model.grid();
    let mut out: Vec<Solution> = Vec::new();
    for s in found {
        let dup = out.iter().any(|o| {
            (o.record.mu - s.record.mu).abs() <= 1e-6 * (1.0 + o.record.mu.abs())
                && aligned_distance(grid, &o.u, &s.u) <= 1e-4
        });
        if !dup {
            out.push(s);
        }
    }
    Ok(out)
}
