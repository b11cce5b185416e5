//! Lowest Dirichlet Laplacian eigenpairs `K x = λ W x` of a grid, by block
//! inverse iteration with Rayleigh–Ritz and quadrature-orthogonal deflation.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FibrateError, Result};
use crate::grid::{Field, Grid};

pub const EIGEN_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 2000;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Field,
}

/// Gram–Schmidt in the quadrature inner product, applied twice for stability.
/// Vectors that collapse are replaced by nothing; the caller checks the count.
pub(crate) fn orthonormalize(grid: &Grid, vectors: &mut Vec<Vec<f64>>) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors.drain(..) {
        let before = grid.norm(&v);
        for _ in 0..2 {
            for q in &out {
                let c = grid.dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let nrm = grid.norm(&v);
        if nrm > 1e-12 * before && nrm > 0.0 {
            v.iter_mut().for_each(|x| *x /= nrm);
            out.push(v);
        }
    }
    *vectors = out;
}

fn residual_norm(grid: &Grid, x: &[f64], lambda: f64) -> f64 {
    let kx = grid.stiffness_apply(x);
    let w = grid.weights();
    let r2: f64 = kx
        .iter()
        .zip(x)
        .zip(w)
        .map(|((k, xi), wi)| {
            let r = k - lambda * wi * xi;
            r * r / wi
        })
        .sum();
    r2.sqrt() / lambda.abs().max(f64::MIN_POSITIVE)
}

/// Deterministic sign: the quadrature mean is positive, or failing that the
/// largest entry.
fn fix_sign(grid: &Grid, x: &mut [f64]) {
    let mean: f64 = grid.weights().iter().zip(x.iter()).map(|(w, v)| w * v).sum();
    let scale: f64 = grid.weights().iter().zip(x.iter()).map(|(w, v)| w * v.abs()).sum();
    let flip = if mean.abs() > 1e-8 * scale {
        mean < 0.0
    } else {
        let (_, big) = x.iter().fold((0.0f64, 0.0f64), |(m, s), &v| {
            if v.abs() > m + 1e-12 * m {
                (v.abs(), v)
            } else {
                (m, s)
            }
        });
        big < 0.0
    };
    if flip {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// First `k` eigenpairs in ascending order, quadrature-orthonormal.
pub fn eigenpairs(grid: &Grid, k: usize) -> Result<Vec<EigenPair>> {
    let n = grid.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > n / 2 {
        return Err(FibrateError::BadParams(format!("requested {k} eigenpairs from {n} nodes")));
    }
    let block = (k + 8).max(2 * k).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    orthonormalize(grid, &mut x);

    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..MAX_SWEEPS {
        // Y = K⁻¹ W X
        let mut y: Vec<Vec<f64>> = x
            .iter()
            .map(|v| {
                let wv: Vec<f64> = v.iter().zip(grid.weights()).map(|(a, w)| a * w).collect();
                grid.solve_shifted(0.0, &wv)
            })
            .collect();
        orthonormalize(grid, &mut y);
        let m = y.len();
        let ky: Vec<Vec<f64>> = y.iter().map(|v| grid.stiffness_apply(v)).collect();
        let mut proj = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let val: f64 = y[i].iter().zip(&ky[j]).map(|(a, b)| a * b).sum();
                proj[(i, j)] = val;
                proj[(j, i)] = val;
            }
        }
        let eig = SymmetricEigen::new(proj);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        x = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (i, yi) in y.iter().enumerate() {
                    let coef = eig.eigenvectors[(i, c)];
                    for (vv, yy) in v.iter_mut().zip(yi) {
                        *vv += coef * yy;
                    }
                }
                v
            })
            .collect();
        let values: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        let worst = (0..k).map(|i| residual_norm(grid, &x[i], values[i])).fold(0.0, f64::max);
        if worst <= EIGEN_TOL {
            let mut pairs = Vec::with_capacity(k);
            for i in 0..k {
                let mut v = std::mem::take(&mut x[i]);
                let nrm = grid.norm(&v);
                v.iter_mut().for_each(|a| *a /= nrm);
                fix_sign(grid, &mut v);
                pairs.push(EigenPair { value: values[i], vector: Field::new(v) });
            }
            return Ok(pairs);
        }
        if worst < 0.5 * best {
            best = worst;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 50 {
                break;
            }
        }
    }
    Err(FibrateError::ConvergenceFailure(format!(
        "eigen-solver residual stalled at {best:e} (tolerance {EIGEN_TOL:e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn three_node_interval() {
        let g = Grid::interval(1.0, 3).unwrap();
        let pairs = eigenpairs(&g, 1).unwrap();
        let expect = 32.0 * (1.0 - (PI / 4.0).cos());
        assert!((pairs[0].value - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn interval_spectrum_matches_formula() {
        let g = Grid::interval(1.0, 127).unwrap();
        let h = g.spacing()[0];
        let pairs = eigenpairs(&g, 5).unwrap();
        for (j, p) in pairs.iter().enumerate() {
            let kk = (j + 1) as f64;
            let expect = 2.0 / (h * h) * (1.0 - (kk * PI * h).cos());
            assert!(((p.value - expect) / expect).abs() < 1e-10, "mode {j}");
        }
    }

    #[test]
    fn rectangle_spectrum_is_separable() {
        let g = Grid::rectangle(1.0, 2.0, 9, 11).unwrap();
        let (hx, hy) = (g.spacing()[0], g.spacing()[1]);
        let lam = |i: f64, l: f64, h: f64| 2.0 / (h * h) * (1.0 - (i * PI * h / l).cos());
        let mut expect: Vec<f64> = Vec::new();
        for i in 1..=9 {
            for j in 1..=11 {
                expect.push(lam(i as f64, 1.0, hx) + lam(j as f64, 2.0, hy));
            }
        }
        expect.sort_by(f64::total_cmp);
        let pairs = eigenpairs(&g, 4).unwrap();
        for (p, e) in pairs.iter().zip(&expect) {
            assert!(((p.value - e) / e).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_pairs_is_rejected() {
        let g = Grid::interval(1.0, 8).unwrap();
        assert!(eigenpairs(&g, 5).is_err());
    }
}
