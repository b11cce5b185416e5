//! Closed forms for the two power classes: `t₀`, `Λ`, the leading constant
//! and `Λ'`.

use serde::Serialize;

use crate::error::{FibrateError, Result};
use crate::model::{ClassTag, ModelSpec, PowerTriple};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassConstants {
    pub class: ClassTag,
    /// `t₀^{β−η} = κ·N/B`
    pub kappa: f64,
    /// Leading constant of `Λ`, calibrated from `ψ(t₀)` at `N = A = B = 1`.
    pub constant: f64,
    /// Exponents on `N` and `B` in the closed `Λ`.
    pub exponent_nb: [f64; 2],
    /// Product formula with exponent `(η−α)/(β−η)` on `κ` (class one) or
    /// `−(α−η)/(β−η)` (class two).
    pub derived_constant: f64,
    /// Product formula with exponent `(η−α)/(β−α)` (class one) or the
    /// reciprocal-ratio form (class two).
    pub printed_constant: f64,
}

impl ClassConstants {
    /// Which product formula reproduces the calibrated constant.
    pub fn derived_matches(&self, rel: f64) -> bool {
        (self.derived_constant - self.constant).abs() <= rel * self.constant.abs()
    }

    pub fn printed_matches(&self, rel: f64) -> bool {
        (self.printed_constant - self.constant).abs() <= rel * self.constant.abs()
    }
}

/// `ψ(t)` for `N = A = B = 1`.
fn unit_fiber(class: ClassTag, alpha: f64, beta: f64, eta: f64, t: f64) -> f64 {
    let s = alpha * (t.powf(eta - alpha) / eta - t.powf(beta - alpha) / beta);
    match class {
        ClassTag::ClassTwo => -s,
        _ => s,
    }
}

pub fn class_constants(class: ClassTag, alpha: f64, beta: f64, eta: f64) -> Result<ClassConstants> {
    let bad = || FibrateError::BadDegrees(format!("{class:?} with eta={eta}, alpha={alpha}, beta={beta}"));
    match class {
        ClassTag::ClassOne => {
            if !(1.0 < alpha && alpha < eta && eta < beta) {
                return Err(bad());
            }
            let kappa = (beta / eta) * (eta - alpha) / (beta - alpha);
            let t0 = kappa.powf(1.0 / (beta - eta));
            let head = (alpha / eta) * (beta - eta) / (beta - alpha);
            Ok(ClassConstants {
                class,
                kappa,
                constant: unit_fiber(class, alpha, beta, eta, t0),
                exponent_nb: [(beta - alpha) / (beta - eta), (eta - alpha) / (beta - eta)],
                derived_constant: head * kappa.powf((eta - alpha) / (beta - eta)),
                printed_constant: head * kappa.powf((eta - alpha) / (beta - alpha)),
            })
        }
        ClassTag::ClassTwo => {
            if !(1.0 < eta && eta < beta && beta < alpha) {
                return Err(bad());
            }
            let kappa = (beta / eta) * (alpha - eta) / (alpha - beta);
            let t0 = kappa.powf(1.0 / (beta - eta));
            Ok(ClassConstants {
                class,
                kappa,
                constant: unit_fiber(class, alpha, beta, eta, t0),
                exponent_nb: [(alpha - eta) / (beta - eta), (alpha - beta) / (beta - eta)],
                derived_constant: (alpha / eta) * (beta - eta) / (alpha - beta)
                    * kappa.powf(-(alpha - eta) / (beta - eta)),
                printed_constant: (alpha / beta) * (beta - eta) / (alpha - eta)
                    * (1.0 / kappa).powf((alpha - beta) / (beta - eta)),
            })
        }
        ClassTag::Custom => Err(FibrateError::BadParams("custom models have no class constants".into())),
    }
}

fn triple(model: &ModelSpec) -> Result<(&PowerTriple, ClassConstants)> {
    let tr = model
        .triple()
        .ok_or_else(|| FibrateError::BadParams(format!("{} is not a power-class model", model.name())))?;
    Ok((tr, class_constants(model.class(), tr.alpha, tr.beta, tr.eta)?))
}

struct Components {
    n: f64,
    a: f64,
    b: f64,
}

fn components(tr: &PowerTriple, u: &[f64]) -> Result<Components> {
    let b = tr.b.evaluate(u);
    if !(b > 0.0) {
        return Err(FibrateError::NotInD);
    }
    let a = tr.a.evaluate(u);
    if !(a > 0.0) {
        return Err(FibrateError::ZeroDenominator(a));
    }
    Ok(Components { n: tr.n.evaluate(u), a, b })
}

/// `(κ·N(u)/B(u))^{1/(β−η)}`.
pub fn t0_closed(model: &ModelSpec, u: &[f64]) -> Result<f64> {
    let (tr, k) = triple(model)?;
    let c = components(tr, u)?;
    Ok((k.kappa * c.n / c.b).powf(1.0 / (tr.beta - tr.eta)))
}

pub fn lambda_closed(model: &ModelSpec, u: &[f64]) -> Result<f64> {
    let (tr, k) = triple(model)?;
    let c = components(tr, u)?;
    let [e1, e2] = k.exponent_nb;
    Ok(match model.class() {
        ClassTag::ClassOne => k.constant * c.n.powf(e1) / (c.a * c.b.powf(e2)),
        _ => k.constant * c.b.powf(e1) / (c.a * c.n.powf(e2)),
    })
}

/// Representer of `Λ'(u)` assembled from the component gradients.
pub fn lambda_grad_closed_vector(model: &ModelSpec, u: &[f64]) -> Result<Vec<f64>> {
    let (tr, k) = triple(model)?;
    let c = components(tr, u)?;
    let [e1, e2] = k.exponent_nb;
    let q = c.n.powf((tr.eta - tr.alpha) / (tr.beta - tr.eta))
        * c.b.powf((tr.alpha - tr.beta) / (tr.beta - tr.eta))
        / (c.a * c.a);
    let (gn, ga, gb) = (tr.n.gradient(u), tr.a.gradient(u), tr.b.gradient(u));
    let (cn, ca, cb) = match model.class() {
        ClassTag::ClassOne => (e1 * c.a * c.b, -c.n * c.b, -e2 * c.n * c.a),
        _ => (-e2 * c.b * c.a, -c.n * c.b, e1 * c.a * c.n),
    };
    let s = k.constant * q;
    Ok(gn
        .iter()
        .zip(&ga)
        .zip(&gb)
        .map(|((n, a), b)| s * (cn * n + ca * a + cb * b))
        .collect())
}

pub fn lambda_grad_closed(model: &ModelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    let g = lambda_grad_closed_vector(model, u)?;
    Ok(model.grid().dot(&g, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_one_kappa_and_constant() {
        let k = class_constants(ClassTag::ClassOne, 1.5, 4.0, 2.0).unwrap();
        assert!((k.kappa - 0.4).abs() < 1e-15);
        let expect = 0.6 * 0.4f64.powf(0.25);
        assert!((k.constant - expect).abs() < 1e-14);
        assert!(k.derived_matches(1e-12));
        assert!(!k.printed_matches(1e-3));
    }

    #[test]
    fn class_two_kappa_and_constant() {
        let k = class_constants(ClassTag::ClassTwo, 4.0, 3.0, 2.0).unwrap();
        assert!((k.kappa - 3.0).abs() < 1e-15);
        assert!((k.constant - 2.0 / 9.0).abs() < 1e-15);
        assert!(k.derived_matches(1e-12));
        assert!(k.printed_matches(1e-12));
    }

    #[test]
    fn orderings_are_enforced() {
        assert!(matches!(class_constants(ClassTag::ClassOne, 2.5, 4.0, 2.0), Err(FibrateError::BadDegrees(_))));
        assert!(matches!(class_constants(ClassTag::ClassTwo, 2.5, 3.0, 2.0), Err(FibrateError::BadDegrees(_))));
        assert!(class_constants(ClassTag::Custom, 1.5, 4.0, 2.0).is_err());
    }
}
