//! Quadrature rules shared by the kernel-expansion and boundary modules.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLegendre};

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn legendre01(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Rule for `int_0^1 f(t) dt` with nodes clustered at both ends via `t = (1 - cos(pi u))/2`;
/// removes inverse-square-root endpoint singularities.
pub fn clustered01(n: usize) -> Vec<(f64, f64)> {
    legendre01(n)
        .into_iter()
        .map(|(u, w)| (0.5 * (1.0 - (PI * u).cos()), w * 0.5 * PI * (PI * u).sin()))
        .collect()
}

/// Nodes and weights for expectations under a standard normal: `E f(Z) ~ sum w f(x)`.
pub fn normal_rule(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussHermite::new(NonZeroUsize::new(n.max(1)).unwrap());
    let s = 1.0 / PI.sqrt();
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (x * 2f64.sqrt(), w * s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_known_functions() {
        let s: f64 = legendre01(8).iter().map(|(x, w)| w * x.powi(5)).sum();
        assert!((s - 1.0 / 6.0).abs() < 1e-14);
        let s: f64 = clustered01(32).iter().map(|(x, w)| w / x.sqrt()).sum();
        assert!((s - 2.0).abs() < 1e-6);
        let r = normal_rule(20);
        let m2: f64 = r.iter().map(|(x, w)| w * x * x).sum();
        let m4: f64 = r.iter().map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-12 && (m4 - 3.0).abs() < 1e-12);
    }
}
