//! Fundamental solutions of `u_t = D Delta u + b . grad u` around the Gaussian.
//!
//! Two representations are provided: the Levy parametrix series
//! `Gamma = N + sum_m int int N (L N)_m` evaluated by nested Gauss quadrature,
//! and the short-time expansion `Gamma = N * sum_k d_k t^k` whose coefficients
//! come from the transport recursion for `log(Gamma / N)`. Both collapse to the
//! heat kernel for zero drift.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::kernels::{GaussianKernelSpec, heat_kernel};
use crate::quad::{clustered01, legendre01, normal_rule};

type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Drift coefficients `b_i(t, x)`.
#[derive(Clone)]
pub struct DriftSpec {
    dim: usize,
    eval: Arc<DriftFn>,
    sup_bound: f64,
    time_dependent: bool,
    constant: Option<[f64; 3]>,
}

impl std::fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftSpec")
            .field("dim", &self.dim)
            .field("sup_bound", &self.sup_bound)
            .field("constant", &self.constant)
            .finish()
    }
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        Self::constant(&vec![0.0; dim])
    }

    pub fn constant(b: &[f64]) -> Self {
        let mut c = [0.0; 3];
        c[..b.len()].copy_from_slice(b);
        let sup = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        DriftSpec {
            dim: b.len(),
            eval: Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&c[..out.len()])),
            sup_bound: sup,
            time_dependent: false,
            constant: Some(c),
        }
    }

    /// Closed-form drift; `sup_bound` must dominate `|b_i|` on the domain of use.
    pub fn from_fn(
        dim: usize,
        sup_bound: f64,
        time_dependent: bool,
        f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        DriftSpec { dim, eval: Arc::new(f), sup_bound, time_dependent, constant: None }
    }

    /// `scale * v` interpolated multilinearly from grid samples.
    pub fn from_field(v: &VectorField, scale: f64) -> Self {
        let v = v.clone();
        let sup = v.sup() * scale.abs();
        let dim = v.dim();
        DriftSpec::from_fn(dim, sup, false, move |_, x, out| {
            for (o, c) in out.iter_mut().zip(&v.comps) {
                *o = scale * c.interpolate(x);
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }
    pub fn is_zero(&self) -> bool {
        matches!(self.constant, Some(c) if c.iter().all(|v| *v == 0.0))
    }
    pub fn as_constant(&self) -> Option<&[f64]> {
        self.constant.as_ref().map(|c| &c[..self.dim])
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        (self.eval)(t, &x[..self.dim], &mut out[..self.dim]);
        out
    }

    /// `J[i][j] = d b_i / d x_j` by central differences.
    pub fn jacobian(&self, t: f64, x: &[f64]) -> [[f64; 3]; 3] {
        let d = self.dim;
        let mut jac = [[0.0; 3]; 3];
        if self.constant.is_some() {
            return jac;
        }
        let eps = 1e-5 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let mut xp = [0.0; 3];
        xp[..d].copy_from_slice(&x[..d]);
        for j in 0..d {
            let x0 = xp[j];
            xp[j] = x0 + eps;
            let fp = self.eval(t, &xp);
            xp[j] = x0 - eps;
            let fm = self.eval(t, &xp);
            xp[j] = x0;
            for i in 0..d {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * eps);
            }
        }
        jac
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gauss(d: f64, t: f64, x: &[f64], y: &[f64]) -> f64 {
    heat_kernel(GaussianKernelSpec { diffusion: d, elapsed: t }, x, y).unwrap_or(0.0)
}

/// Exact fundamental solution for a constant drift: the Gaussian transported along `-b`.
pub fn constant_drift_gamma(diffusion: f64, b: &[f64], t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let shifted: Vec<f64> = x.iter().zip(b).map(|(xi, bi)| xi + bi * t).collect();
    heat_kernel(GaussianKernelSpec { diffusion, elapsed: t }, &shifted, y)
}

pub const MAX_LEVY_TERMS: usize = 6;

/// Truncated Levy series with its quadrature resolution.
#[derive(Clone, Debug)]
pub struct LevySeries {
    pub drift: DriftSpec,
    pub diffusion: f64,
    pub truncation: usize,
    pub time_nodes: usize,
    pub space_nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevyValue {
    pub value: f64,
    /// Contribution of each correction `m = 1..=M`.
    pub terms: Vec<f64>,
    /// Set when `|term_M / term_1| > 0.1` with `M >= 2`.
    pub truncation_warning: bool,
}

struct LevyCtx<'a> {
    series: &'a LevySeries,
    trule: Vec<(f64, f64)>,
    srule: Vec<(f64, f64)>,
}

impl LevyCtx<'_> {
    /// Visits the tensor Gauss-Hermite nodes of an isotropic Gaussian.
    fn for_gauss_nodes(&self, mean: &[f64], var: f64, mut f: impl FnMut(&[f64], f64)) {
        let d = mean.len();
        let sd = var.sqrt();
        let k = self.srule.len();
        let mut p = [0.0; 3];
        for idx in 0..k.pow(d as u32) {
            let mut r = idx;
            let mut w = 1.0;
            for a in 0..d {
                let (x, wa) = self.srule[r % k];
                r /= k;
                p[a] = mean[a] + sd * x;
                w *= wa;
            }
            f(&p[..d], w);
        }
    }

    /// `Q_m(sig, z; s, y)` with `(L N)_m = N(sig - s, z - y) Q_m`.
    fn q(&self, m: usize, sig: f64, z: &[f64], s: f64, y: &[f64]) -> f64 {
        let dcoef = self.series.diffusion;
        let b = self.series.drift.eval(sig, z);
        let d = z.len();
        if m == 1 {
            let f = -1.0 / (2.0 * dcoef * (sig - s));
            return (0..d).map(|i| b[i] * (z[i] - y[i]) * f).sum();
        }
        let mut acc = [0.0; 3];
        let span = sig - s;
        let mut mean = [0.0; 3];
        for &(u, wt) in &self.trule {
            let th = s + span * u;
            let a = 2.0 * dcoef * (th - s);
            let c = 2.0 * dcoef * (sig - th);
            for i in 0..d {
                mean[i] = (c * y[i] + a * z[i]) / (a + c);
            }
            let f = -1.0 / (2.0 * dcoef * (sig - th));
            self.for_gauss_nodes(&mean[..d], a * c / (a + c), |w, ww| {
                let qm = self.q(m - 1, th, w, s, y);
                for i in 0..d {
                    acc[i] += wt * span * ww * f * (z[i] - w[i]) * qm;
                }
            });
        }
        dot(&b[..d], &acc[..d])
    }
}

impl LevySeries {
    pub fn new(drift: DriftSpec, diffusion: f64, truncation: usize) -> Self {
        LevySeries { drift, diffusion, truncation, time_nodes: 16, space_nodes: 20 }
    }

    pub fn with_resolution(mut self, time_nodes: usize, space_nodes: usize) -> Self {
        self.time_nodes = time_nodes;
        self.space_nodes = space_nodes;
        self
    }

    pub fn gamma(&self, tau: f64, x: &[f64], s: f64, y: &[f64]) -> Result<LevyValue> {
        if self.truncation > MAX_LEVY_TERMS {
            return Err(Error::DepthExceeded { requested: self.truncation, max: MAX_LEVY_TERMS });
        }
        if tau <= s {
            return Err(Error::ZeroTime);
        }
        let n0 = gauss(self.diffusion, tau - s, x, y);
        if self.drift.is_zero() || self.truncation == 0 {
            return Ok(LevyValue { value: n0, terms: vec![0.0; self.truncation], truncation_warning: false });
        }
        let ctx = LevyCtx { series: self, trule: clustered01(self.time_nodes), srule: normal_rule(self.space_nodes) };
        let d = x.len();
        let dcoef = self.diffusion;
        let mut terms = Vec::with_capacity(self.truncation);
        let mut mean = [0.0; 3];
        for m in 1..=self.truncation {
            let mut im = 0.0;
            let span = tau - s;
            for &(u, wt) in &ctx.trule {
                let sig = s + span * u;
                let a = 2.0 * dcoef * (sig - s);
                let c = 2.0 * dcoef * (tau - sig);
                for i in 0..d {
                    mean[i] = (c * y[i] + a * x[i]) / (a + c);
                }
                ctx.for_gauss_nodes(&mean[..d], a * c / (a + c), |z, wz| {
                    im += wt * span * wz * ctx.q(m, sig, z, s, y);
                });
            }
            terms.push(n0 * im);
        }
        let value = n0 + terms.iter().sum::<f64>();
        let m = terms.len();
        let warn = m >= 2 && terms[0] != 0.0 && (terms[m - 1] / terms[0]).abs() > 0.1;
        Ok(LevyValue { value, terms, truncation_warning: warn })
    }
}

pub fn levy_gamma(series: &LevySeries, tau: f64, x: &[f64], s: f64, y: &[f64]) -> Result<LevyValue> {
    series.gamma(tau, x, s, y)
}

/// Short-time expansion `Gamma = N(t, x-y) sum_k d_k t^k`.
#[derive(Clone, Debug)]
pub struct DkExpansion {
    pub drift: DriftSpec,
    pub diffusion: f64,
    pub order: usize,
    pub max_order: usize,
    pub line_nodes: usize,
    /// Finite-difference step relative to `max(1, |x-y|)`.
    pub fd_step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamValue {
    pub value: f64,
    pub coefficients: Vec<f64>,
    /// Set when the last retained term is not smaller than the one before it.
    pub validity_warning: bool,
}

impl DkExpansion {
    pub fn new(drift: DriftSpec, diffusion: f64, order: usize) -> Self {
        DkExpansion { drift, diffusion, order, max_order: 4, line_nodes: 16, fd_step: 1e-3 }
    }

    /// `c_k(t, x, y)`: `c_0` is the drift line integral, `c_k = int_0^1 s^{k-1} R_{k-1}(y + s(x-y)) ds`.
    fn c(&self, k: usize, t: f64, x: &[f64], y: &[f64], h: f64) -> f64 {
        let d = x.len();
        let mut p = [0.0; 3];
        let rule = legendre01(self.line_nodes);
        if k == 0 {
            let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            if let Some(b) = self.drift.as_constant() {
                return -dot(b, &diff) / (2.0 * self.diffusion);
            }
            let mut acc = 0.0;
            for &(s, w) in &rule {
                for i in 0..d {
                    p[i] = y[i] + s * diff[i];
                }
                acc += w * dot(&self.drift.eval(t, &p[..d])[..d], &diff);
            }
            return -acc / (2.0 * self.diffusion);
        }
        let mut acc = 0.0;
        for &(s, w) in &rule {
            for i in 0..d {
                p[i] = y[i] + s * (x[i] - y[i]);
            }
            acc += w * s.powi(k as i32 - 1) * self.r(k - 1, t, &p[..d], y, h);
        }
        acc
    }

    /// Value, gradient and Laplacian of `c_k` in `x` by central differences.
    fn derivs(&self, k: usize, t: f64, x: &[f64], y: &[f64], h: f64) -> (f64, [f64; 3], f64) {
        let d = x.len();
        let c0 = self.c(k, t, x, y, h);
        let mut grad = [0.0; 3];
        let mut lap = 0.0;
        let mut p = [0.0; 3];
        p[..d].copy_from_slice(x);
        for a in 0..d {
            p[a] = x[a] + h;
            let cp = self.c(k, t, &p[..d], y, h);
            p[a] = x[a] - h;
            let cm = self.c(k, t, &p[..d], y, h);
            p[a] = x[a];
            grad[a] = (cp - cm) / (2.0 * h);
            lap += (cp - 2.0 * c0 + cm) / (h * h);
        }
        (c0, grad, lap)
    }

    fn r(&self, k: usize, t: f64, z: &[f64], y: &[f64], h: f64) -> f64 {
        let d = z.len();
        let dc = self.diffusion;
        let all: Vec<(f64, [f64; 3], f64)> = (0..=k).map(|j| self.derivs(j, t, z, y, h)).collect();
        let (_, gk, lk) = all[k];
        let mut out = dc * lk + dot(&self.drift.eval(t, z)[..d], &gk[..d]);
        for j in 0..=k {
            out += dc * dot(&all[j].1[..d], &all[k - j].1[..d]);
        }
        if self.drift.time_dependent {
            let ht = h.min(t.max(h) * 0.5);
            out -= (self.c(k, t + ht, z, y, h) - self.c(k, (t - ht).max(0.0), z, y, h)) / (t + ht - (t - ht).max(0.0));
        }
        out
    }

    pub fn c_terms(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if self.order > self.max_order {
            return Err(Error::DepthExceeded { requested: self.order, max: self.max_order });
        }
        let scale = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt().max(1.0);
        let h = self.fd_step * scale;
        if self.drift.is_zero() {
            return Ok(vec![0.0; self.order + 1]);
        }
        Ok((0..=self.order).map(|k| self.c(k, t, x, y, h)).collect())
    }

    /// `d_0 = exp(c_0)`, `d_m = sum_{k=1}^m (k/m) c_k d_{m-k}`.
    pub fn coefficients(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let c = self.c_terms(t, x, y)?;
        let mut d = vec![c[0].exp()];
        for m in 1..=self.order {
            let v = (1..=m).map(|k| k as f64 / m as f64 * c[k] * d[m - k]).sum();
            d.push(v);
        }
        Ok(d)
    }

    pub fn fundamental(&self, t: f64, x: &[f64], y: &[f64]) -> Result<ParamValue> {
        if t <= 0.0 {
            return Err(Error::ZeroTime);
        }
        let d = self.coefficients(t, x, y)?;
        let terms: Vec<f64> = d.iter().enumerate().map(|(k, dk)| dk * t.powi(k as i32)).collect();
        let k = terms.len() - 1;
        let warn = k >= 1 && terms[k].abs() >= terms[k - 1].abs() && terms[k] != 0.0;
        let value = gauss(self.diffusion, t, x, y) * terms.iter().sum::<f64>();
        Ok(ParamValue { value, coefficients: d, validity_warning: warn })
    }
}

pub fn dk_coefficients(exp: &DkExpansion, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    exp.coefficients(t, x, y)
}

pub fn param_fundamental(exp: &DkExpansion, t: f64, x: &[f64], y: &[f64]) -> Result<ParamValue> {
    exp.fundamental(t, x, y)
}

/// Terms kept in the constant-drift series used for `C_Gamma`.
const GAMMA_SERIES_TERMS: usize = 4;

/// Physicists' Hermite polynomials `H_0..=H_m` at `xi`.
fn hermite(m: usize, xi: f64) -> Vec<f64> {
    let mut h = vec![1.0, 2.0 * xi];
    for k in 1..m {
        let next = 2.0 * xi * h[k] - 2.0 * k as f64 * h[k - 1];
        h.push(next);
    }
    h.truncate(m + 1);
    h
}

/// For the drift `c e_1` truncated after `M` terms, returns
/// `(int |Gamma| dy, int |d_1 Gamma| dy, |term_M| / |term_1|)` at elapsed time `t`.
fn axis_integrals(c: f64, diffusion: f64, t: f64, terms: usize) -> (f64, f64, f64) {
    // with xi = (x-y)/sqrt(4Dt) the m-th term is beta^m/m! H_m(xi) e^{-xi^2}/sqrt(pi)
    let beta = -c * t.sqrt() / (2.0 * diffusion.sqrt());
    let n = 2400;
    let lim = 12.0 + 2.0 * beta.abs();
    let dx = 2.0 * lim / n as f64;
    let (mut a, mut b, mut last, mut first) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..=n {
        let xi = -lim + i as f64 * dx;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 } * dx * (-xi * xi).exp() / PI.sqrt();
        let h = hermite(terms + 1, xi);
        let (mut g, mut dg, mut coef) = (0.0, 0.0, 1.0);
        for m in 0..=terms {
            g += coef * h[m];
            dg += coef * h[m + 1];
            coef *= beta / (m + 1) as f64;
        }
        a += w * g.abs();
        b += w * dg.abs();
        let cm = beta.powi(terms as i32) / (1..=terms).product::<usize>() as f64;
        last += w * (cm * h[terms]).abs();
        first += w * (beta * h[1]).abs();
    }
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    (a, b / (4.0 * diffusion * t).sqrt(), ratio)
}

/// Largest `int_0^H int (|Gamma| + |Gamma_{,i}|) dy ds` over the constant-drift family with
/// drift magnitude `c`; `None` if the truncated series has not decayed for that member.
fn member_integral(dim: usize, c: f64, diffusion: f64, horizon: f64) -> Option<f64> {
    let (_, _, ratio) = axis_integrals(c, diffusion, horizon, GAMMA_SERIES_TERMS);
    if c != 0.0 && ratio > 0.1 {
        return None;
    }
    // t = H s^2 removes the t^{-1/2} singularity of the derivative term
    let (mut ia, mut ib1, mut ib0) = (0.0, 0.0, 0.0);
    for (s, w) in legendre01(24) {
        let t = horizon * s * s;
        let dt = 2.0 * horizon * s * w;
        let (a, b1, _) = axis_integrals(c, diffusion, t, GAMMA_SERIES_TERMS);
        let b0 = 1.0 / (PI * diffusion * t).sqrt();
        ia += dt * a;
        ib1 += dt * b1;
        ib0 += dt * a * b0;
    }
    Some(ia + if dim >= 2 { ib1.max(ib0) } else { ib1 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaConstant {
    pub value: f64,
    pub raw_max: f64,
    /// Drift magnitudes sampled and used.
    pub members: Vec<f64>,
    pub skipped: Vec<f64>,
}

/// Memoised estimator; family members are shared between calls.
#[derive(Debug, Default)]
pub struct GammaConstantEstimator {
    cache: Mutex<HashMap<(usize, u64, u64, i32), Option<f64>>>,
}

pub const GAMMA_SAFETY: f64 = 1.25;

impl GammaConstantEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    /// `1.25 * max` over the family `{0} U {+-c e_i : c = 2^k/64 <= drift_bound}` of
    /// `int_0^H int (|Gamma| + |d_i Gamma|) dy ds`. The family is nested in the bound,
    /// so the estimate is monotone in it; sign and axis are symmetric and evaluated once.
    pub fn estimate(&self, dim: usize, drift_bound: f64, diffusion: f64, horizon: f64) -> GammaConstant {
        let mut members = vec![0.0];
        let mut skipped = Vec::new();
        let mut raw: f64 = self.member(dim, 0, diffusion, horizon).unwrap_or(0.0);
        let mut k = 0;
        while (k as f64).exp2() / 64.0 <= drift_bound && k < 40 {
            let c = (k as f64).exp2() / 64.0;
            match self.member(dim, k + 1, diffusion, horizon) {
                Some(v) => {
                    raw = raw.max(v);
                    members.push(c);
                }
                None => skipped.push(c),
            }
            k += 1;
        }
        GammaConstant { value: GAMMA_SAFETY * raw, raw_max: raw, members, skipped }
    }

    fn member(&self, dim: usize, slot: i32, diffusion: f64, horizon: f64) -> Option<f64> {
        let key = (dim, diffusion.to_bits(), horizon.to_bits(), slot);
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return *v;
        }
        let c = if slot == 0 { 0.0 } else { ((slot - 1) as f64).exp2() / 64.0 };
        let v = member_integral(dim, c, diffusion, horizon);
        self.cache.lock().unwrap().insert(key, v);
        v
    }
}

pub fn estimate_gamma_constant(dim: usize, drift_bound: f64, diffusion: f64, horizon: f64) -> GammaConstant {
    GammaConstantEstimator::new().estimate(dim, drift_bound, diffusion, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted_gaussian(d: f64, b: f64, t: f64, x: f64, y: f64) -> f64 {
        let u = x + b * t - y;
        (-u * u / (4.0 * d * t)).exp() / (4.0 * PI * d * t).sqrt()
    }

    #[test]
    fn zero_drift_collapses_to_heat_kernel() {
        let s = LevySeries::new(DriftSpec::zero(2), 0.7, 3);
        let v = s.gamma(1.3, &[0.2, -0.1], 0.4, &[0.5, 0.3]).unwrap();
        let n = heat_kernel(GaussianKernelSpec { diffusion: 0.7, elapsed: 0.9 }, &[0.2, -0.1], &[0.5, 0.3]).unwrap();
        assert_eq!(v.value, n);
        let e = DkExpansion::new(DriftSpec::zero(3), 0.7, 3);
        let d = e.coefficients(0.3, &[1.0, 0.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(d, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn first_levy_term_is_drift_derivative() {
        // for constant drift the m-th correction is t^m/m! (b.grad)^m N
        let (d, b, t) = (0.5, 0.3, 0.4);
        let s = LevySeries::new(DriftSpec::constant(&[b]), d, 1);
        let (x, y) = (0.35, 0.0);
        let v = s.gamma(t, &[x], 0.0, &[y]).unwrap();
        let n = shifted_gaussian(d, 0.0, t, x, y);
        let dn = -(x - y) / (2.0 * d * t) * n;
        assert!((v.terms[0] - t * b * dn).abs() < 1e-8 * n);
    }

    #[test]
    fn constant_drift_levy_m2_within_tolerance() {
        let (d, b, t) = (0.5, 0.05, 0.5);
        let s = LevySeries::new(DriftSpec::constant(&[b]), d, 2);
        let sd = (2.0 * d * t).sqrt();
        for k in -6..=6 {
            let x = 0.5 * k as f64 * sd;
            let v = s.gamma(t, &[x], 0.0, &[0.0]).unwrap();
            let exact = shifted_gaussian(d, b, t, x, 0.0);
            assert!(((v.value - exact) / exact).abs() <= 1e-3, "x={x}");
            assert!(v.value > 0.0);
        }
    }

    #[test]
    fn levy_error_decreases_with_truncation() {
        let (d, b, t) = (0.5, 0.4, 0.5);
        let xs = [-1.0, -0.5, 0.0, 0.3, 0.6, 1.0];
        let errs: Vec<f64> = (0..=3)
            .map(|m| {
                let s = LevySeries::new(DriftSpec::constant(&[b]), d, m).with_resolution(12, 12);
                xs.iter()
                    .map(|&x| {
                        let exact = shifted_gaussian(d, b, t, x, 0.0);
                        ((s.gamma(t, &[x], 0.0, &[0.0]).unwrap().value - exact) / exact).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn levy_mass_is_conserved() {
        let (d, b, t) = (0.5, 0.1, 0.5);
        let s = LevySeries::new(DriftSpec::constant(&[b]), d, 2).with_resolution(12, 12);
        let sd = (2.0 * d * t).sqrt();
        let n = 161;
        let lim = 8.0 * sd;
        let dy = 2.0 * lim / (n - 1) as f64;
        let mass: f64 = (0..n).map(|i| s.gamma(t, &[0.0], 0.0, &[-lim + i as f64 * dy]).unwrap().value * dy).sum();
        assert!((mass - 1.0).abs() < 2e-3);
    }

    #[test]
    fn d0_matches_segment_integral() {
        let b = [0.3, -0.2, 0.1];
        let e = DkExpansion::new(DriftSpec::constant(&b), 0.5, 2);
        let d = e.coefficients(0.1, &[1.0, 0.0, 0.0], &[0.0; 3]).unwrap();
        assert!((d[0] - (-b[0]).exp()).abs() < 1e-14);
        // constant drift: c_1 = -|b|^2/(4D), d_1 = c_1 d_0, d_2 = c_1^2/2 d_0
        let c1 = -(0.09 + 0.04 + 0.01) / 2.0;
        assert!((d[1] - c1 * d[0]).abs() < 1e-6);
        assert!((d[2] - 0.5 * c1 * c1 * d[0]).abs() < 1e-4);
    }

    #[test]
    fn dk_expansion_matches_shifted_gaussian() {
        let (d, b, t) = (0.5, 0.3, 0.05);
        let e = DkExpansion::new(DriftSpec::constant(&[b]), d, 2);
        for x in [-0.4, -0.1, 0.0, 0.2, 0.5] {
            let v = e.fundamental(t, &[x], &[0.0]).unwrap();
            let exact = shifted_gaussian(d, b, t, x, 0.0);
            assert!(((v.value - exact) / exact).abs() <= 1e-4);
            assert!(!v.validity_warning);
        }
        let deep = DkExpansion { order: 9, ..e.clone() };
        assert!(matches!(deep.coefficients(t, &[0.1], &[0.0]), Err(Error::DepthExceeded { .. })));
    }

    #[test]
    fn dk_handles_variable_drift() {
        // b(x) = a x: check d_0 against the closed-form line integral
        let a = 0.4;
        let drift = DriftSpec::from_fn(1, 1.0, false, move |_, x, o| o[0] = a * x[0]);
        let e = DkExpansion::new(drift.clone(), 0.5, 2);
        let (x, y) = (0.7, 0.1);
        let d = e.coefficients(0.02, &[x], &[y]).unwrap();
        let c0 = -(a * (x + y) / 2.0) * (x - y) / (2.0 * 0.5);
        assert!((d[0] - c0.exp()).abs() < 1e-12);
        // and the two representations agree at short times
        let l = LevySeries::new(drift, 0.5, 2).with_resolution(12, 14);
        let t = 0.05;
        let p = e.fundamental(t, &[x], &[y]).unwrap().value;
        let q = l.gamma(t, &[x], 0.0, &[y]).unwrap().value;
        assert!(((p - q) / q).abs() < 1e-3);
    }

    #[test]
    fn gamma_constant_zero_drift_closed_form() {
        for dim in [1, 2, 3] {
            let g = estimate_gamma_constant(dim, 0.0, 1.0, 1.0);
            let want = 1.25 * (1.0 + 2.0 / PI.sqrt());
            assert!(((g.value - want) / want).abs() < 0.05, "{} vs {want}", g.value);
            assert!(((g.value - want) / want).abs() < 1e-4);
        }
    }

    #[test]
    fn gamma_constant_scaling_and_monotonicity() {
        let a = estimate_gamma_constant(2, 0.0, 1.0, 1.0).raw_max - 1.0;
        let b = estimate_gamma_constant(2, 0.0, 2.0, 1.0).raw_max - 1.0;
        assert!((a / b - 2f64.sqrt()).abs() < 1e-4);
        let est = GammaConstantEstimator::new();
        let mut last = 0.0;
        for bound in [0.0, 0.01, 0.1, 0.5, 1.0, 3.0, 10.0, 40.0] {
            let g = est.estimate(2, bound, 0.1, 1.0).value;
            assert!(g >= last);
            last = g;
        }
    }
}
