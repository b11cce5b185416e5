//! Radial Bopp–Podolski potential `φ_{a,u} = K_a * u²` with
//! `K_a(d) = (1 − e^{−d/a})/d` (`K_0(d) = 1/d`, the Coulomb case).
//!
//! Averaging `K_a(|x − y|)` over the sphere `|y| = s` gives
//! `(k_a(r+s) − k_a(|r−s|)) / (2rs)` with `k_a' (d) = d·K_a(d)`, i.e.
//! `k_a(d) = d + a·e^{−d/a}` and `k_0(d) = d`. The kernel splits into
//! separable pieces, so the whole potential costs O(n) via prefix sums.

use std::sync::Arc;

use crate::error::{FibrateError, Result};
use crate::functionals::Functional;
use crate::grid::{Field, Grid, GridKind};

fn check(grid: &Grid, u: &[f64], a: f64) -> Result<()> {
    if grid.kind() != GridKind::Radial {
        return Err(FibrateError::NotRadial);
    }
    grid.check_field(u)?;
    if !(a.is_finite() && a >= 0.0) {
        return Err(FibrateError::BadParams(format!("screening length must be >= 0, got {a}")));
    }
    Ok(())
}

/// `φ_{a,u}` at every node of a radial grid.
pub fn bopp_podolski_potential(grid: &Grid, u: &[f64], a: f64) -> Result<Field> {
    check(grid, u, a)?;
    Ok(Field::new(potential_unchecked(grid, u, a)))
}

pub(crate) fn potential_unchecked(grid: &Grid, u: &[f64], a: f64) -> Vec<f64> {
    let r = grid.coords(0);
    let h = grid.spacing()[0];
    let n = r.len();
    // m_j = w_j u_j² / s_j
    let m: Vec<f64> = (0..n).map(|j| grid.weights()[j] * u[j] * u[j] / r[j]).collect();

    // Σ_j m_j min(r_i, s_j) = Σ_{j≤i} m_j s_j + r_i Σ_{j>i} m_j
    let mut below = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        acc += m[i] * r[i];
        below[i] = acc;
    }
    let mut above = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        above[i] = acc;
        acc += m[i];
    }
    let mut phi: Vec<f64> = (0..n).map(|i| (below[i] + r[i] * above[i]) / r[i]).collect();

    if a > 0.0 {
        let decay = (-h / a).exp();
        // Σ_j m_j e^{−(r_i+s_j)/a}
        let far: f64 = (0..n).map(|j| m[j] * (-r[j] / a).exp()).sum();
        // Σ_j m_j e^{−|r_i−s_j|/a}, split at j = i and accumulated by recursion
        let mut lower = vec![0.0; n];
        let mut acc = 0.0;
        for i in 0..n {
            acc = acc * decay + m[i];
            lower[i] = acc;
        }
        let mut upper = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n).rev() {
            upper[i] = acc;
            acc = (acc + m[i]) * decay;
        }
        for i in 0..n {
            let near = lower[i] + upper[i];
            phi[i] += 0.5 * a * ((-r[i] / a).exp() * far - near) / r[i];
        }
    }
    phi
}

/// `φ_{a,u}(r)` at an arbitrary radius by direct summation; `r = 0` uses the
/// limit `H(0, s) = K_a(s)`.
pub fn potential_at_radius(grid: &Grid, u: &[f64], a: f64, radius: f64) -> Result<f64> {
    check(grid, u, a)?;
    let k = |d: f64| if a > 0.0 { d + a * (-d / a).exp() } else { d };
    let kernel = |s: f64| -> f64 {
        if radius == 0.0 {
            if a > 0.0 {
                -(-s / a).exp_m1() / s
            } else {
                1.0 / s
            }
        } else {
            (k(radius + s) - k((radius - s).abs())) / (2.0 * radius * s)
        }
    };
    Ok(grid
        .coords(0)
        .iter()
        .zip(grid.weights())
        .zip(u)
        .map(|((&s, &w), &x)| w * x * x * kernel(s))
        .sum())
}

/// `A(u) = ∫ φ_{a,u} u²`, 4-homogeneous.
#[derive(Debug, Clone)]
pub struct PotentialEnergy {
    grid: Arc<Grid>,
    a: f64,
}

impl PotentialEnergy {
    pub fn new(grid: Arc<Grid>, a: f64) -> Result<Self> {
        check(&grid, &vec![0.0; grid.len()], a)?;
        Ok(PotentialEnergy { grid, a })
    }
}

impl Functional for PotentialEnergy {
    fn name(&self) -> String {
        format!("potential_energy(a={})", self.a)
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn degree(&self) -> f64 {
        4.0
    }

    fn evaluate(&self, u: &[f64]) -> f64 {
        let phi = potential_unchecked(&self.grid, u, self.a);
        self.grid.weights().iter().zip(&phi).zip(u).map(|((w, p), x)| w * p * x * x).sum()
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let phi = potential_unchecked(&self.grid, u, self.a);
        phi.iter().zip(u).map(|(p, x)| 4.0 * p * x).collect()
    }
}
