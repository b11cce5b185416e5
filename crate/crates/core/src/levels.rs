//! One-sided surrogates for the min–max levels `μₙ` over subspace spheres.
//!
//! Class-one type models (minimizing direction) take the sup of `Λ` over
//! the unit sphere of `span{b₁,…,bₙ}`, an upper bound for `μₙ`; maximizing
//! models take the inf, a lower bound. Levels are chained: each level's
//! search contains the previous level's extremizer, so the sequence is
//! monotone by construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FibrateError, Result};
use crate::fiber::{lambda_grad_vector, lambda_value, membership_d, CriticalPointRecord};
use crate::grid::Field;
use crate::model::{Direction, ModelSpec};
use crate::optimizer::{laplacian_modes, multistart, optimize_lambda, parallel_map, SolveOptions};

pub const MAX_LEVEL: usize = 6;
const SAMPLES_PER_DIM: usize = 10_000;
const LEVEL_ONE_STARTS: usize = 8;
const REFINE_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Upper,
    Lower,
}

impl Bound {
    pub fn as_str(self) -> &'static str {
        match self {
            Bound::Upper => "upper",
            Bound::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinMaxEstimate {
    pub n: usize,
    pub bound: Bound,
    pub value: f64,
    pub basis_dim: usize,
    pub basis: String,
    /// Sphere samples evaluated (starts, for level one).
    pub samples: usize,
    /// Coefficients of the inner extremizer in the basis (empty at level one).
    pub coefficients: Vec<f64>,
}

/// A level estimate together with the field attaining it.
#[derive(Debug, Clone)]
pub struct Level {
    pub estimate: MinMaxEstimate,
    pub extremizer: Field,
    /// Certified critical point at level one.
    pub record: Option<CriticalPointRecord>,
}

fn bound_of(model: &ModelSpec, opts: &SolveOptions) -> (Direction, Bound) {
    match opts.direction.unwrap_or(model.direction()) {
        Direction::Minimize => (Direction::Minimize, Bound::Upper),
        Direction::Maximize => (Direction::Maximize, Bound::Lower),
    }
}

/// Is `a` at least as extreme as `b` for the inner problem (sup for
/// minimizing models, inf for maximizing ones)?
fn inner_better(dir: Direction, a: f64, b: f64) -> bool {
    match dir {
        Direction::Minimize => a > b,
        Direction::Maximize => a < b,
    }
}

fn combine(basis: &[Field], c: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; basis[0].len()];
    for (b, &ci) in basis.iter().zip(c) {
        for (o, x) in u.iter_mut().zip(b.iter()) {
            *o += ci * x;
        }
    }
    u
}

fn unit(c: &mut [f64]) {
    let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    c.iter_mut().for_each(|x| *x /= n);
}

fn value_at(model: &ModelSpec, basis: &[Field], c: &[f64]) -> Option<f64> {
    let u = combine(basis, c);
    if !membership_d(model, &u) {
        return None;
    }
    lambda_value(model, &u).ok().filter(|v| v.is_finite())
}

/// Projected gradient refinement of the inner extremum in coefficient space.
fn refine(model: &ModelSpec, dir: Direction, basis: &[Field], mut c: Vec<f64>, mut val: f64) -> (Vec<f64>, f64) {
    // ascend Λ for the sup, descend for the inf
    let s = match dir {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let grid = model.grid();
    let mut step = 0.1;
    for _ in 0..REFINE_ITERS {
        let Ok((_, g)) = lambda_grad_vector(model, &combine(basis, &c)) else { break };
        let mut gc: Vec<f64> = basis.iter().map(|b| s * grid.dot(&g, b)).collect();
        let radial: f64 = gc.iter().zip(&c).map(|(a, b)| a * b).sum();
        gc.iter_mut().zip(&c).for_each(|(a, b)| *a -= radial * b);
        let gn = gc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn <= 1e-13 * (1.0 + val.abs()) {
            break;
        }
        let mut improved = false;
        while step > 1e-14 {
            let mut trial: Vec<f64> = c.iter().zip(&gc).map(|(a, b)| a + step * b / gn).collect();
            unit(&mut trial);
            if let Some(v) = value_at(model, basis, &trial) {
                if inner_better(dir, v, val) {
                    c = trial;
                    val = v;
                    improved = true;
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (c, val)
}

/// Levels `1..=k`, chained.
pub fn mu_estimates(model: &ModelSpec, k: usize, opts: &SolveOptions) -> Result<Vec<Level>> {
    if k == 0 || k > MAX_LEVEL {
        return Err(FibrateError::BadLevel(k));
    }
    let (dir, bound) = bound_of(model, opts);
    let basis_name = "laplacian_eigenfunctions".to_string();

    let found = multistart(model, LEVEL_ONE_STARTS, opts)?;
    let best = match dir {
        Direction::Minimize => found.first(),
        Direction::Maximize => found.last(),
    }
    .ok_or_else(|| FibrateError::ConvergenceFailure("no level-one start converged".into()))?;
    let mut levels = vec![Level {
        estimate: MinMaxEstimate {
            n: 1,
            bound,
            value: best.record.mu,
            basis_dim: 1,
            basis: basis_name.clone(),
            samples: LEVEL_ONE_STARTS,
            coefficients: Vec::new(),
        },
        extremizer: best.u.clone(),
        record: Some(best.record.clone()),
    }];
    if k == 1 {
        return Ok(levels);
    }

    let basis = laplacian_modes(model.grid(), k)?;
    if basis.len() < k {
        return Err(FibrateError::BadLevel(k));
    }
    let mut seed_c = vec![1.0];
    for n in 2..=k {
        let sub = &basis[..n];
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x1e7e1 + n as u64));
        let count = SAMPLES_PER_DIM * n;
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(count + 1);
        let mut padded = seed_c.clone();
        padded.resize(n, 0.0);
        points.push(padded);
        for _ in 0..count {
            let mut c: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            unit(&mut c);
            points.push(c);
        }
        let values = parallel_map(&points, |c| value_at(model, sub, c));
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in values.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| inner_better(dir, v, b)) {
                    best = Some((i, v));
                }
            }
        }
        let (i, v) = best.ok_or(FibrateError::SamplerOutOfD)?;
        let (c, v) = refine(model, dir, sub, points[i].clone(), v);
        let value = v;
        levels.push(Level {
            estimate: MinMaxEstimate {
                n,
                bound,
                value,
                basis_dim: n,
                basis: basis_name.clone(),
                samples: count + 1,
                coefficients: c.clone(),
            },
            extremizer: Field::new(combine(sub, &c)),
            record: None,
        });
        seed_c = c;
    }
    Ok(levels)
}

pub fn estimate_mu_n(model: &ModelSpec, n: usize, opts: &SolveOptions) -> Result<MinMaxEstimate> {
    if n == 0 || n > MAX_LEVEL {
        return Err(FibrateError::BadLevel(n));
    }
    Ok(mu_estimates(model, n, opts)?.pop().expect("n ≥ 1 levels").estimate)
}

/// Estimates for `1..=k` with the certified critical point reached from each
/// level's extremizer, where the optimizer converges.
pub fn mu_sequence(
    model: &ModelSpec,
    k: usize,
    opts: &SolveOptions,
) -> Result<Vec<(MinMaxEstimate, Option<CriticalPointRecord>)>> {
    let levels = mu_estimates(model, k, opts)?;
    let (dir, _) = bound_of(model, opts);
    for w in levels.windows(2) {
        let (a, b) = (w[0].estimate.value, w[1].estimate.value);
        let monotone = match dir {
            Direction::Minimize => b >= a,
            Direction::Maximize => b <= a,
        };
        if !monotone {
            return Err(FibrateError::ConvergenceFailure(format!(
                "level estimates not monotone: {a} then {b}"
            )));
        }
    }
    let records = parallel_map(&levels, |l| match &l.record {
        Some(r) => Some(r.clone()),
        None => optimize_lambda(model, &l.extremizer, opts)
            .ok()
            .map(|s| s.record)
            .filter(|r| r.converged),
    });
    Ok(levels.into_iter().map(|l| l.estimate).zip(records).collect())
}
