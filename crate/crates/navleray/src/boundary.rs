//! Second initial-boundary value problems on an interval or a disk through a
//! boundary-integral density solved by a Neumann series.
//!
//! In the rescaled step time the solution of `u_tau - D Lap u + b.grad u = F`,
//! `d_nu u + alpha u = g` on the boundary `S`, is represented as
//! `u = U0 + V + int_0^tau int_S Gamma phi`, where `U0` carries the data, `V` the
//! source and `Gamma` is the constant-drift Gaussian. The jump of the single layer
//! turns the boundary condition into `phi/2 = W phi + f` with
//! `W phi = -D int int (d_nu Gamma + alpha Gamma) phi` and `f = D (g - (d_nu + alpha)(U0 + V))`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{legendre01, normal_rule};

/// Neumann terms allowed before the series is declared too deep.
pub const MAX_DEPTH: usize = 64;
/// Default number of Neumann terms.
pub const DEFAULT_DEPTH: usize = 8;
const TIME_NODES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Disk { radius: f64 },
}

/// Boundary nodes with outward normals plus interior quadrature nodes.
///
/// Interval: the two end points and `n` cell centres. Disk: `nb` straight panels
/// (nodes at panel midpoints) and a polar grid of `nr x nt` cell centres.
#[derive(Clone, Debug)]
pub struct BoundaryDomain {
    pub shape: Shape,
    pub nodes: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    /// Panel length (zero for the point boundary of an interval).
    pub panel: f64,
    pub interior: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    nr: usize,
    nt: usize,
}

impl BoundaryDomain {
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(b > a) || n < 4 {
            return Err(Error::InvalidGrid(format!("interval [{a}, {b}] with {n} cells")));
        }
        let h = (b - a) / n as f64;
        Ok(BoundaryDomain {
            shape: Shape::Interval { a, b },
            nodes: vec![[a, 0.0], [b, 0.0]],
            normals: vec![[-1.0, 0.0], [1.0, 0.0]],
            panel: 0.0,
            interior: (0..n).map(|j| [a + (j as f64 + 0.5) * h, 0.0]).collect(),
            weights: vec![h; n],
            nr: n,
            nt: 1,
        })
    }

    pub fn disk(radius: f64, nb: usize, nr: usize, nt: usize) -> Result<Self> {
        if !(radius > 0.0) || nb < 8 || nr < 2 || nt < 8 {
            return Err(Error::InvalidGrid(format!("disk R={radius} nb={nb} nr={nr} nt={nt}")));
        }
        let mut nodes = Vec::with_capacity(nb);
        let mut normals = Vec::with_capacity(nb);
        let c = (PI / nb as f64).cos();
        for q in 0..nb {
            let th = 2.0 * PI * (q as f64 + 0.5) / nb as f64;
            normals.push([th.cos(), th.sin()]);
            nodes.push([radius * c * th.cos(), radius * c * th.sin()]);
        }
        let dr = radius / nr as f64;
        let dt = 2.0 * PI / nt as f64;
        let mut interior = Vec::with_capacity(nr * nt);
        let mut weights = Vec::with_capacity(nr * nt);
        for j in 0..nr {
            let r = (j as f64 + 0.5) * dr;
            for k in 0..nt {
                let th = k as f64 * dt;
                interior.push([r * th.cos(), r * th.sin()]);
                weights.push(r * dr * dt);
            }
        }
        Ok(BoundaryDomain {
            shape: Shape::Disk { radius },
            nodes,
            normals,
            panel: 2.0 * radius * (PI / nb as f64).sin(),
            interior,
            weights,
            nr,
            nt,
        })
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Interval { .. } => 1,
            Shape::Disk { .. } => 2,
        }
    }

    /// Interior resolution used to decide when a heat kernel is too narrow to be sampled.
    pub fn resolution(&self) -> f64 {
        match self.shape {
            Shape::Interval { a, b } => (b - a) / self.nr as f64,
            Shape::Disk { radius } => radius / self.nr as f64,
        }
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Extension of interior samples to the whole space: even reflection (periodic
    /// folding) on an interval, constant along normal rays outside a disk; linear
    /// interpolation between interior nodes.
    pub fn extend(&self, values: &[f64], x: [f64; 2]) -> f64 {
        match self.shape {
            Shape::Interval { a, b } => {
                let len = b - a;
                let mut z = (x[0] - a).rem_euclid(2.0 * len);
                if z > len {
                    z = 2.0 * len - z;
                }
                let h = len / self.nr as f64;
                let u = (z / h - 0.5).clamp(0.0, (self.nr - 1) as f64);
                let j = (u.floor() as usize).min(self.nr - 2);
                let w = u - j as f64;
                (1.0 - w) * values[j] + w * values[j + 1]
            }
            Shape::Disk { radius } => {
                let r = x[0].hypot(x[1]).min(radius);
                let th = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
                let dr = radius / self.nr as f64;
                let ur = (r / dr - 0.5).clamp(0.0, (self.nr - 1) as f64);
                let j = (ur.floor() as usize).min(self.nr - 2);
                let wr = ur - j as f64;
                let ut = th / (2.0 * PI) * self.nt as f64;
                let k = (ut.floor() as usize) % self.nt;
                let wt = ut - ut.floor();
                let k1 = (k + 1) % self.nt;
                let at = |jj: usize, kk: usize| values[jj * self.nt + kk];
                let lo = (1.0 - wt) * at(j, k) + wt * at(j, k1);
                let hi = (1.0 - wt) * at(j + 1, k) + wt * at(j + 1, k1);
                (1.0 - wr) * lo + wr * hi
            }
        }
    }

    /// Cartesian gradient of interior samples (one-sided at the ends of an interval
    /// and at the inner and outer radii of a disk).
    pub fn gradient(&self, values: &[f64]) -> Vec<Vec<f64>> {
        match self.shape {
            Shape::Interval { .. } => {
                let h = self.resolution();
                let n = values.len();
                let d = (0..n)
                    .map(|j| match j {
                        0 => (values[1] - values[0]) / h,
                        _ if j == n - 1 => (values[n - 1] - values[n - 2]) / h,
                        _ => (values[j + 1] - values[j - 1]) / (2.0 * h),
                    })
                    .collect();
                vec![d]
            }
            Shape::Disk { radius } => {
                let (nr, nt) = (self.nr, self.nt);
                let dr = radius / nr as f64;
                let dth = 2.0 * PI / nt as f64;
                let at = |j: usize, k: usize| values[j * nt + k % nt];
                let mut gx = vec![0.0; values.len()];
                let mut gy = vec![0.0; values.len()];
                for j in 0..nr {
                    let r = (j as f64 + 0.5) * dr;
                    for k in 0..nt {
                        let fr = match j {
                            0 => (at(1, k) - at(0, k)) / dr,
                            _ if j == nr - 1 => (at(j, k) - at(j - 1, k)) / dr,
                            _ => (at(j + 1, k) - at(j - 1, k)) / (2.0 * dr),
                        };
                        let ft = (at(j, k + 1) - at(j, k + nt - 1)) / (2.0 * dth);
                        let th = k as f64 * dth;
                        gx[j * nt + k] = th.cos() * fr - th.sin() / r * ft;
                        gy[j * nt + k] = th.sin() * fr + th.cos() / r * ft;
                    }
                }
                vec![gx, gy]
            }
        }
    }
}

type Eval = Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>;

/// Robin coefficient `alpha(t, x)` and data `g(t, x)` in original time.
#[derive(Clone)]
pub struct RobinData {
    pub alpha: Eval,
    pub g: Eval,
}

impl RobinData {
    pub fn constant(alpha: f64, g: f64) -> Self {
        RobinData { alpha: Arc::new(move |_, _| alpha), g: Arc::new(move |_, _| g) }
    }
}

impl std::fmt::Debug for RobinData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RobinData")
    }
}

/// Gaussian fundamental solution of `u_tau - D Lap u + b.grad u = 0` in one or two dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatGamma {
    pub dim: usize,
    pub diffusion: f64,
    pub drift: [f64; 2],
}

impl HeatGamma {
    fn shifted(&self, tau: f64, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
        [x[0] - y[0] - self.drift[0] * tau, x[1] - y[1] - self.drift[1] * tau]
    }

    pub fn value(&self, tau: f64, x: [f64; 2], y: [f64; 2]) -> f64 {
        let d = self.shifted(tau, x, y);
        let r2: f64 = d[..self.dim].iter().map(|v| v * v).sum();
        (4.0 * PI * self.diffusion * tau).powf(-(self.dim as f64) / 2.0) * (-r2 / (4.0 * self.diffusion * tau)).exp()
    }

    pub fn grad_x(&self, tau: f64, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
        let d = self.shifted(tau, x, y);
        let v = self.value(tau, x, y);
        let s = -v / (2.0 * self.diffusion * tau);
        [s * d[0], if self.dim > 1 { s * d[1] } else { 0.0 }]
    }

    /// `(int_panel Gamma dy, nu . grad_x int_panel Gamma dy)` for a straight panel of
    /// length `len` centred at `y` with unit normal `ny`; a point when `len == 0`.
    pub fn panel(&self, tau: f64, x: [f64; 2], nu: [f64; 2], y: [f64; 2], ny: [f64; 2], len: f64) -> (f64, f64) {
        if self.dim == 1 || len == 0.0 {
            let v = self.value(tau, x, y);
            let g = self.grad_x(tau, x, y);
            return (v, nu[0] * g[0] + nu[1] * g[1]);
        }
        let d = self.shifted(tau, x, y);
        let t = [-ny[1], ny[0]];
        let a = d[0] * t[0] + d[1] * t[1];
        let c = d[0] * ny[0] + d[1] * ny[1];
        let dt4 = 4.0 * self.diffusion * tau;
        let s = dt4.sqrt();
        let g1 = (PI * dt4).powf(-0.5) * (-c * c / dt4).exp();
        let e = 0.5 * (libm::erf((a + 0.5 * len) / s) - libm::erf((a - 0.5 * len) / s));
        let de = ((-(a + 0.5 * len).powi(2) / dt4).exp() - (-(a - 0.5 * len).powi(2) / dt4).exp()) / (s * PI.sqrt());
        let da = g1 * de;
        let dc = -c / (0.5 * dt4) * g1 * e;
        let nt = nu[0] * t[0] + nu[1] * t[1];
        let nn = nu[0] * ny[0] + nu[1] * ny[1];
        (g1 * e, nt * da + nn * dc)
    }
}

/// `K_Gamma = d_nu Gamma(tau, x; s, y) + alpha Gamma(tau, x; s, y)` at a boundary point `x` with outward normal `nu`.
pub fn k_gamma(gamma: &HeatGamma, alpha: f64, tau: f64, x: [f64; 2], nu: [f64; 2], s: f64, y: [f64; 2]) -> Result<f64> {
    if !(tau > s) {
        return Err(Error::ZeroTime);
    }
    let g = gamma.grad_x(tau - s, x, y);
    Ok(nu[0] * g[0] + nu[1] * g[1] + alpha * gamma.value(tau - s, x, y))
}

/// Integrals of a panel kernel against the two hat functions of the subinterval
/// `[lag Delta, (lag+1) Delta]` of elapsed time (`left` is the hat peaking at the
/// far end of the subinterval in elapsed time, i.e. at the earlier source time).
fn lag_integrals(dt: f64, lag: usize, mut kernel: impl FnMut(f64) -> (f64, f64)) -> [(f64, f64); 2] {
    // substitute elapsed time e = u^2 to remove the e^{-1/2} endpoint behaviour
    let (u0, u1) = ((lag as f64 * dt).sqrt(), ((lag + 1) as f64 * dt).sqrt());
    let mut out = [(0.0, 0.0); 2];
    for (z, w) in legendre01(TIME_NODES) {
        let u = u0 + (u1 - u0) * z;
        let e = u * u;
        if e <= 0.0 {
            continue;
        }
        let jac = w * (u1 - u0) * 2.0 * u;
        let (v, dn) = kernel(e);
        // hat at earlier source time grows with elapsed time
        let far = (e - lag as f64 * dt) / dt;
        let near = 1.0 - far;
        out[0].0 += jac * far * v;
        out[0].1 += jac * far * dn;
        out[1].0 += jac * near * v;
        out[1].1 += jac * near * dn;
    }
    out
}

/// Uniform time mesh `tau_i = i Delta`, `i = 0..=n`, over one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeMesh {
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }
}

/// Discretised boundary operator `W`, stored by lag with piecewise-linear densities in time.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    pub mesh: TimeMesh,
    pub diffusion: f64,
    nb: usize,
    /// `[lag][hat][p * nb + q] -> (single layer, normal derivative)`
    blocks: Vec<[Vec<(f64, f64)>; 2]>,
    /// `alpha(t_i, x_p)`
    alpha: Vec<Vec<f64>>,
}

impl DensityOperator {
    /// `t0` and `time_scale` map step time to original time for the Robin coefficient.
    pub fn new(domain: &BoundaryDomain, gamma: HeatGamma, robin: &RobinData, mesh: TimeMesh, t0: f64, time_scale: f64) -> Self {
        let nb = domain.nodes.len();
        let dt = mesh.dt();
        let blocks = (0..mesh.steps)
            .map(|lag| {
                let mut far = vec![(0.0, 0.0); nb * nb];
                let mut near = vec![(0.0, 0.0); nb * nb];
                for p in 0..nb {
                    for q in 0..nb {
                        let [f, n] = lag_integrals(dt, lag, |e| {
                            gamma.panel(e, domain.nodes[p], domain.normals[p], domain.nodes[q], domain.normals[q], domain.panel)
                        });
                        far[p * nb + q] = f;
                        near[p * nb + q] = n;
                    }
                }
                [far, near]
            })
            .collect();
        let alpha = (0..=mesh.steps)
            .map(|i| domain.nodes.iter().map(|&x| (robin.alpha)(t0 + time_scale * mesh.time(i), x)).collect())
            .collect();
        DensityOperator { mesh, diffusion: gamma.diffusion, nb, blocks, alpha }
    }

    /// `(W phi)_i(p) = -D sum_q int_0^{tau_i} (d_nu Gamma + alpha Gamma) phi_q`
    pub fn apply(&self, phi: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let nb = self.nb;
        let mut out = vec![vec![0.0; nb]; self.mesh.steps + 1];
        for i in 1..=self.mesh.steps {
            for lag in 0..i {
                // subinterval between source times t_{i-lag-1} (far) and t_{i-lag} (near)
                let [far, near] = &self.blocks[lag];
                let (jf, jn) = (i - lag - 1, i - lag);
                for p in 0..nb {
                    let a = self.alpha[i][p];
                    let mut acc = 0.0;
                    for q in 0..nb {
                        let (fv, fd) = far[p * nb + q];
                        let (nv, nd) = near[p * nb + q];
                        acc += (fd + a * fv) * phi[jf][q] + (nd + a * nv) * phi[jn][q];
                    }
                    out[i][p] -= self.diffusion * acc;
                }
            }
        }
        out
    }
}

fn sup(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

/// Density samples `phi[i][q]` on the time mesh with the Neumann-series record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDensity {
    pub values: Vec<Vec<f64>>,
    /// `sup` of each Neumann term `(2W)^m (2f)`.
    pub terms: Vec<f64>,
    /// `terms[m] / terms[m-1]`
    pub ratios: Vec<f64>,
    /// `sup |phi/2 - W phi - f|`
    pub residual: f64,
}

/// `phi = 2 (f + sum_{m>=1} (2W)^m f)`, stopping once a term is negligible or after `depth` terms.
pub fn solve_density(f: &[Vec<f64>], op: &DensityOperator, depth: usize) -> Result<BoundaryDensity> {
    if depth > MAX_DEPTH {
        return Err(Error::DepthExceeded { requested: depth, max: MAX_DEPTH });
    }
    if f.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("boundary data".into()));
    }
    let mut term: Vec<Vec<f64>> = f.iter().map(|r| r.iter().map(|x| 2.0 * x).collect()).collect();
    let mut phi = term.clone();
    let mut terms = vec![sup(&term)];
    let mut ratios = Vec::new();
    for m in 1..depth {
        if terms[m - 1] <= 1e-15 * sup(&phi).max(1e-300) {
            break;
        }
        term = op.apply(&term).into_iter().map(|r| r.into_iter().map(|x| 2.0 * x).collect()).collect();
        let s = sup(&term);
        ratios.push(s / terms[m - 1]);
        terms.push(s);
        if (2..=3).contains(&m) && ratios[m - 1] >= 1.0 {
            return Err(Error::SeriesDiverging { ratio: ratios[m - 1] });
        }
        for (a, b) in phi.iter_mut().zip(&term) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    let w = op.apply(&phi);
    let mut residual: f64 = 0.0;
    for i in 0..phi.len() {
        for p in 0..phi[i].len() {
            residual = residual.max((0.5 * phi[i][p] - w[i][p] - f[i][p]).abs());
        }
    }
    Ok(BoundaryDensity { values: phi, terms, ratios, residual })
}

/// Single-layer potential `int_0^{tau_n} int_S Gamma phi` at interior points for all `n`.
fn single_layer(domain: &BoundaryDomain, gamma: HeatGamma, mesh: TimeMesh, phi: &[Vec<f64>], points: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let nb = domain.nodes.len();
    let dt = mesh.dt();
    let mut out = vec![vec![0.0; points.len()]; mesh.steps + 1];
    for (ix, &x) in points.iter().enumerate() {
        let mut lags = Vec::with_capacity(mesh.steps);
        for lag in 0..mesh.steps {
            let per: Vec<[(f64, f64); 2]> = (0..nb)
                .map(|q| lag_integrals(dt, lag, |e| gamma.panel(e, x, [0.0, 0.0], domain.nodes[q], domain.normals[q], domain.panel)))
                .collect();
            lags.push(per);
        }
        for n in 1..=mesh.steps {
            let mut acc = 0.0;
            for lag in 0..n {
                for q in 0..nb {
                    let [f, ne] = lags[lag][q];
                    acc += f.0 * phi[n - lag - 1][q] + ne.0 * phi[n - lag][q];
                }
            }
            out[n][ix] = acc;
        }
    }
    out
}

/// Data potential `U0 = int Gamma(tau, x; 0, y) h_ext(y) dy` and its normal derivative.
fn data_potential(domain: &BoundaryDomain, gamma: HeatGamma, h: &[f64], tau: f64, x: [f64; 2], nu: [f64; 2]) -> (f64, f64) {
    if tau <= 0.0 {
        return (domain.extend(h, x), 0.0);
    }
    let c = [x[0] - gamma.drift[0] * tau, x[1] - gamma.drift[1] * tau];
    let sigma = (2.0 * gamma.diffusion * tau).sqrt();
    match domain.shape {
        Shape::Interval { .. } => {
            let res = domain.resolution();
            if sigma < 0.25 * res {
                let e = 1e-3 * res;
                let v = domain.extend(h, c);
                let d = (domain.extend(h, [c[0] + e, 0.0]) - domain.extend(h, [c[0] - e, 0.0])) / (2.0 * e);
                return (v, nu[0] * d);
            }
            // composite Gauss-Legendre over +-8 sigma with panels no wider than the cell size
            let span = 8.0 * sigma;
            let panels = ((2.0 * span / res).ceil() as usize).max(8);
            let width = 2.0 * span / panels as f64;
            let rule = legendre01(6);
            let (mut v, mut d) = (0.0, 0.0);
            for k in 0..panels {
                for &(z, w) in &rule {
                    let y = c[0] - span + (k as f64 + z) * width;
                    let hy = domain.extend(h, [y, 0.0]);
                    let g = gamma.value(tau, x, [y, 0.0]);
                    let gx = gamma.grad_x(tau, x, [y, 0.0]);
                    v += w * width * g * hy;
                    d += w * width * gx[0] * hy;
                }
            }
            (v, nu[0] * d)
        }
        Shape::Disk { .. } => {
            // E[h(c + sigma Z)] and, by Stein's identity, grad = E[h(c + sigma Z) Z] / sigma
            let rule = normal_rule(16);
            let (mut v, mut g) = (0.0, [0.0; 2]);
            for &(z1, w1) in &rule {
                for &(z2, w2) in &rule {
                    let hv = domain.extend(h, [c[0] + sigma * z1, c[1] + sigma * z2]);
                    v += w1 * w2 * hv;
                    g[0] += w1 * w2 * hv * z1 / sigma;
                    g[1] += w1 * w2 * hv * z2 / sigma;
                }
            }
            (v, nu[0] * g[0] + nu[1] * g[1])
        }
    }
}

/// Source potential `V = int_0^tau int_Omega Gamma F` with `F` given on the time mesh at interior
/// nodes. Subintervals whose kernel is narrower than the interior resolution use the local
/// value `F(x)` (the kernel acts as a delta there); the rest use interior quadrature.
fn source_potential(domain: &BoundaryDomain, gamma: HeatGamma, mesh: TimeMesh, src: &[Vec<f64>], n: usize, x: [f64; 2], nu: [f64; 2]) -> (f64, f64) {
    let dt = mesh.dt();
    let res = domain.resolution();
    let (mut v, mut d) = (0.0, 0.0);
    for m in 0..n {
        let lag_end = (n - m) as f64 * dt;
        if (2.0 * gamma.diffusion * lag_end).sqrt() < 2.0 * res {
            let shift = |s: f64| [x[0] - gamma.drift[0] * s, x[1] - gamma.drift[1] * s];
            let a = domain.extend(&src[m], shift(lag_end));
            let b = domain.extend(&src[m + 1], shift(lag_end - dt));
            v += 0.5 * dt * (a + b);
            continue;
        }
        for (z, w) in legendre01(2) {
            let s = (m as f64 + z) * dt;
            let e = mesh.time(n) - s;
            for (iy, &y) in domain.interior.iter().enumerate() {
                let fy = (1.0 - z) * src[m][iy] + z * src[m + 1][iy];
                let g = gamma.value(e, x, y);
                let gx = gamma.grad_x(e, x, y);
                v += w * dt * domain.weights[iy] * g * fy;
                d += w * dt * domain.weights[iy] * (nu[0] * gx[0] + nu[1] * gx[1]) * fy;
            }
        }
    }
    (v, d)
}

/// Solution of one scalar Robin problem over a step, sampled on the time mesh.
#[derive(Clone, Debug)]
pub struct RobinSolution {
    /// `values[n][j]` at interior node `j` and time `tau_n`.
    pub values: Vec<Vec<f64>>,
    pub density: BoundaryDensity,
}

/// Scalar problem `u_tau - D Lap u + b.grad u = F` with Robin data, initial samples `h`.
#[derive(Clone, Debug)]
pub struct RobinProblem<'a> {
    pub domain: &'a BoundaryDomain,
    pub gamma: HeatGamma,
    pub robin: &'a RobinData,
    pub mesh: TimeMesh,
    pub initial: &'a [f64],
    /// `F` on the time mesh (`steps + 1` samples of interior values), or none.
    pub source: Option<&'a [Vec<f64>]>,
    /// Original time at `tau = 0` and `dt/dtau`, for evaluating the Robin data.
    pub t0: f64,
    pub time_scale: f64,
    pub depth: usize,
}

pub fn solve_robin(p: &RobinProblem) -> Result<RobinSolution> {
    let d = p.domain;
    if p.initial.len() != d.interior.len() {
        return Err(Error::ShapeMismatch("initial samples do not match the interior nodes".into()));
    }
    if let Some(s) = p.source {
        if s.len() != p.mesh.steps + 1 || s.iter().any(|r| r.len() != d.interior.len()) {
            return Err(Error::ShapeMismatch("source samples do not match the mesh".into()));
        }
    }
    let op = DensityOperator::new(d, p.gamma, p.robin, p.mesh, p.t0, p.time_scale);
    let mut f = vec![vec![0.0; d.nodes.len()]; p.mesh.steps + 1];
    for (i, row) in f.iter_mut().enumerate() {
        let tau = p.mesh.time(i);
        let t = p.t0 + p.time_scale * tau;
        for (q, val) in row.iter_mut().enumerate() {
            let (x, nu) = (d.nodes[q], d.normals[q]);
            let (mut u, mut un) = data_potential(d, p.gamma, p.initial, tau, x, nu);
            if let Some(src) = p.source {
                let (v, vn) = source_potential(d, p.gamma, p.mesh, src, i, x, nu);
                u += v;
                un += vn;
            }
            *val = p.gamma.diffusion * ((p.robin.g)(t, x) - un - (p.robin.alpha)(t, x) * u);
        }
    }
    let density = solve_density(&f, &op, p.depth)?;
    let layer = single_layer(d, p.gamma, p.mesh, &density.values, &d.interior);
    let values = (0..=p.mesh.steps)
        .map(|n| {
            let tau = p.mesh.time(n);
            d.interior
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    if n == 0 {
                        return p.initial[j];
                    }
                    let mut u = data_potential(d, p.gamma, p.initial, tau, x, [0.0, 0.0]).0 + layer[n][j];
                    if let Some(src) = p.source {
                        u += source_potential(d, p.gamma, p.mesh, src, n, x, [0.0, 0.0]).0;
                    }
                    u
                })
                .collect()
        })
        .collect();
    Ok(RobinSolution { values, density })
}

/// `int_Omega d_i K(x-y) S(y) dy` over the interior nodes (two dimensions; the self cell is skipped).
pub fn leray_on_domain(domain: &BoundaryDomain, s: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; s.len()]; 2];
    for (i, &x) in domain.interior.iter().enumerate() {
        for (j, &y) in domain.interior.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = [x[0] - y[0], x[1] - y[1]];
            let r2 = d[0] * d[0] + d[1] * d[1];
            let c = domain.weights[j] * s[j] / (2.0 * PI * r2);
            out[0][i] += c * d[0];
            out[1][i] += c * d[1];
        }
    }
    out
}

/// Interior trajectory `[n][component][node]` of one step.
pub type BoundaryTrajectory = Vec<Vec<Vec<f64>>>;

/// Parameters of a step of the boundary scheme.
#[derive(Clone, Debug)]
pub struct BoundaryStep<'a> {
    pub domain: &'a BoundaryDomain,
    pub rho: f64,
    pub nu: f64,
    /// One set of Robin data per component.
    pub robin: &'a [RobinData],
    pub mesh: TimeMesh,
    pub t0: f64,
    pub depth: usize,
}

#[derive(Clone, Debug)]
pub struct BoundaryStepResult {
    pub trajectory: BoundaryTrajectory,
    pub densities: Vec<BoundaryDensity>,
}

fn mean(domain: &BoundaryDomain, v: &[f64]) -> f64 {
    v.iter().zip(&domain.weights).map(|(a, w)| a * w).sum::<f64>() / domain.measure()
}

/// Iterate `k` of the boundary scheme: each component solves
/// `u_tau - rho nu Lap u + rho (w.grad) u = rho P(w)` with `w` the previous iterate (frozen at
/// the step start for `k = 0`), Robin conditions on `S`, from `v_prev`. The drift of the
/// Gaussian is the domain mean of `w` at the step start; the remainder of the transport term
/// is carried in the source with `w` in place of `u`.
pub fn boundary_step(step: &BoundaryStep, v_prev: &[Vec<f64>], previous: Option<&BoundaryTrajectory>) -> Result<BoundaryStepResult> {
    let d = step.domain;
    let n = d.dim();
    if v_prev.len() != n || v_prev.iter().any(|c| c.len() != d.interior.len()) {
        return Err(Error::ShapeMismatch("step data do not match the domain".into()));
    }
    if step.robin.len() != n {
        return Err(Error::ShapeMismatch("one set of Robin data per component".into()));
    }
    let frozen = v_prev.to_vec();
    let samples: &[Vec<Vec<f64>>] = match previous {
        Some(tr) if tr.len() == step.mesh.steps + 1 => tr,
        Some(_) => return Err(Error::ShapeMismatch("previous iterate has the wrong number of samples".into())),
        None => std::slice::from_ref(&frozen),
    };
    let sample = |m: usize| -> &Vec<Vec<f64>> { &samples[m.min(samples.len() - 1)] };
    let mut drift = [0.0; 2];
    for (a, dr) in drift.iter_mut().enumerate().take(n) {
        *dr = step.rho * mean(d, &sample(0)[a]);
    }
    let gamma = HeatGamma { dim: n, diffusion: step.rho * step.nu, drift };
    let mut sources = vec![vec![Vec::new(); step.mesh.steps + 1]; n];
    for m in 0..=step.mesh.steps {
        let w = sample(m);
        let grads: Vec<Vec<Vec<f64>>> = w.iter().map(|c| d.gradient(c)).collect();
        let pressure = if n == 2 {
            let s: Vec<f64> = (0..d.interior.len())
                .map(|p| (0..2).map(|k| (0..2).map(|j| grads[k][j][p] * grads[j][k][p]).sum::<f64>()).sum())
                .collect();
            Some(leray_on_domain(d, &s))
        } else {
            None
        };
        for i in 0..n {
            sources[i][m] = (0..d.interior.len())
                .map(|p| {
                    let mut f = 0.0;
                    for j in 0..n {
                        f -= (step.rho * w[j][p] - drift[j]) * grads[i][j][p];
                    }
                    if let Some(pr) = &pressure {
                        f += step.rho * pr[i][p];
                    }
                    f
                })
                .collect();
        }
    }
    let mut trajectory = vec![vec![Vec::new(); n]; step.mesh.steps + 1];
    let mut densities = Vec::with_capacity(n);
    for i in 0..n {
        let zero = sources[i].iter().all(|r| r.iter().all(|x| *x == 0.0));
        let prob = RobinProblem {
            domain: d,
            gamma,
            robin: &step.robin[i],
            mesh: step.mesh,
            initial: &v_prev[i],
            source: if zero { None } else { Some(&sources[i]) },
            t0: step.t0,
            time_scale: step.rho,
            depth: step.depth,
        };
        let sol = solve_robin(&prob)?;
        for (m, row) in sol.values.into_iter().enumerate() {
            trajectory[m][i] = row;
        }
        densities.push(sol.density);
    }
    Ok(BoundaryStepResult { trajectory, densities })
}

/// Crank-Nicolson reference for `u_t = D u_xx` on `[a, b]` with `d_nu u + alpha u = g`
/// (constant `alpha`, `g`), vertex-centred with ghost points. Returns the vertex values at `t_end`.
pub fn robin_heat_fd(a: f64, b: f64, diffusion: f64, alpha: f64, g: f64, h: impl Fn(f64) -> f64, t_end: f64, nx: usize, nt: usize) -> Vec<f64> {
    let dx = (b - a) / nx as f64;
    let dt = t_end / nt as f64;
    let n = nx + 1;
    let lam = diffusion * dt / (dx * dx);
    // operator L u_j = (u_{j-1} - 2 u_j + u_{j+1}), ghosts u_{-1} = u_1 - 2 dx (alpha u_0 - g)
    let apply = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| match j {
                0 => 2.0 * u[1] - 2.0 * u[0] - 2.0 * dx * (alpha * u[0] - g),
                _ if j == n - 1 => 2.0 * u[n - 2] - 2.0 * u[n - 1] - 2.0 * dx * (alpha * u[n - 1] - g),
                _ => u[j - 1] - 2.0 * u[j] + u[j + 1],
            })
            .collect()
    };
    // implicit matrix (I - lam/2 L): tridiagonal with constant-g part moved to the right side
    let mut lower = vec![-0.5 * lam; n];
    let mut diag = vec![1.0 + lam; n];
    let mut upper = vec![-0.5 * lam; n];
    diag[0] = 1.0 + lam * (1.0 + dx * alpha);
    diag[n - 1] = diag[0];
    upper[0] = -lam;
    lower[n - 1] = -lam;
    let mut u: Vec<f64> = (0..n).map(|j| h(a + j as f64 * dx)).collect();
    for _ in 0..nt {
        let lu = apply(&u);
        let mut rhs: Vec<f64> = (0..n).map(|j| u[j] + 0.5 * lam * lu[j]).collect();
        rhs[0] += lam * dx * g;
        rhs[n - 1] += lam * dx * g;
        // Thomas algorithm
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = upper[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for j in 1..n {
            let m = diag[j] - lower[j] * c[j - 1];
            c[j] = upper[j] / m;
            d[j] = (rhs[j] - lower[j] * d[j - 1]) / m;
        }
        u[n - 1] = d[n - 1];
        for j in (0..n - 1).rev() {
            u[j] = d[j] - c[j] * u[j + 1];
        }
    }
    u
}

/// Outcome of the Robin heat benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobinBenchmark {
    pub nx: usize,
    pub nt: usize,
    pub depth: usize,
    /// Max difference to the Crank-Nicolson reference at the final time.
    pub max_error: f64,
    pub residual: f64,
    pub ratios: Vec<f64>,
    pub terms: Vec<f64>,
}

/// Heat equation on `[0, 1]`, `D = 1/2`, `T = 1/2`, `alpha = 1`, `g = 0`, `h = sin(pi x)`,
/// solved with the boundary density and compared against a fine Crank-Nicolson run.
pub fn robin_heat_benchmark(nx: usize, nt: usize, depth: usize) -> Result<RobinBenchmark> {
    let (diffusion, t_end, alpha) = (0.5, 0.5, 1.0);
    let domain = BoundaryDomain::interval(0.0, 1.0, nx)?;
    let h0: Vec<f64> = domain.interior.iter().map(|x| (PI * x[0]).sin()).collect();
    let robin = RobinData::constant(alpha, 0.0);
    let prob = RobinProblem {
        domain: &domain,
        gamma: HeatGamma { dim: 1, diffusion, drift: [0.0; 2] },
        robin: &robin,
        mesh: TimeMesh { horizon: t_end, steps: nt },
        initial: &h0,
        source: None,
        t0: 0.0,
        time_scale: 1.0,
        depth,
    };
    let sol = solve_robin(&prob)?;
    let fine = 2048;
    let reference = robin_heat_fd(0.0, 1.0, diffusion, alpha, 0.0, |x| (PI * x).sin(), t_end, fine, 4096);
    let last = sol.values.last().expect("mesh has samples");
    let max_error = domain
        .interior
        .iter()
        .zip(last)
        .map(|(x, u)| {
            let z = x[0] * fine as f64;
            let j = (z.floor() as usize).min(fine - 1);
            let w = z - j as f64;
            (u - ((1.0 - w) * reference[j] + w * reference[j + 1])).abs()
        })
        .fold(0.0, f64::max);
    Ok(RobinBenchmark {
        nx,
        nt,
        depth,
        max_error,
        residual: sol.density.residual,
        ratios: sol.density.ratios.clone(),
        terms: sol.density.terms.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(dim: usize, d: f64) -> HeatGamma {
        HeatGamma { dim, diffusion: d, drift: [0.0; 2] }
    }

    #[test]
    fn k_gamma_closed_form() {
        let g = heat(1, 0.5);
        let (tau, s, x, y, alpha) = (0.3, 0.1, [1.0, 0.0], [0.4, 0.0], 2.0);
        let e = tau - s;
        let gv = (-(0.6f64).powi(2) / (4.0 * 0.5 * e)).exp() / (4.0 * PI * 0.5 * e).sqrt();
        let expect = -0.6 / (2.0 * 0.5 * e) * gv + alpha * gv;
        let got = k_gamma(&g, alpha, tau, x, [1.0, 0.0], s, y).unwrap();
        assert!((got - expect).abs() < 1e-13 * expect.abs().max(1.0));
        assert_eq!(k_gamma(&g, alpha, 0.1, x, [1.0, 0.0], 0.1, y), Err(Error::ZeroTime));
    }

    #[test]
    fn panel_integral_matches_quadrature() {
        let g = heat(2, 0.3);
        let (x, nu) = ([0.2, 0.5], [0.6, 0.8]);
        let (y, ny, len) = ([0.9, 0.1], [0.0, 1.0], 0.4);
        let (v, dn) = g.panel(0.2, x, nu, y, ny, len);
        let (mut qv, mut qd) = (0.0, 0.0);
        for (z, w) in legendre01(40) {
            let p = [y[0] - 0.5 * len + z * len, y[1]];
            qv += w * len * g.value(0.2, x, p);
            let gr = g.grad_x(0.2, x, p);
            qd += w * len * (nu[0] * gr[0] + nu[1] * gr[1]);
        }
        assert!((v - qv).abs() < 1e-12 && (dn - qd).abs() < 1e-11, "{v} {qv} {dn} {qd}");
    }

    fn problem<'a>(d: &'a BoundaryDomain, r: &'a RobinData, h: &'a [f64], steps: usize) -> RobinProblem<'a> {
        RobinProblem {
            domain: d,
            gamma: heat(d.dim(), 0.5),
            robin: r,
            mesh: TimeMesh { horizon: 0.2, steps },
            initial: h,
            source: None,
            t0: 0.0,
            time_scale: 1.0,
            depth: DEFAULT_DEPTH,
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let d = BoundaryDomain::interval(0.0, 1.0, 16).unwrap();
        let r = RobinData::constant(1.0, 0.0);
        let h = vec![0.0; 16];
        let s = solve_robin(&problem(&d, &r, &h, 10)).unwrap();
        assert!(s.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn constants_are_preserved() {
        let d = BoundaryDomain::interval(0.0, 1.0, 32).unwrap();
        let h = vec![1.5; 32];
        // Neumann and a consistent Robin datum
        for r in [RobinData::constant(0.0, 0.0), RobinData::constant(2.0, 3.0)] {
            let s = solve_robin(&problem(&d, &r, &h, 20)).unwrap();
            let dev = s.values.iter().flatten().map(|v| (v - 1.5).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-6, "{dev}");
        }
    }

    #[test]
    fn neumann_conserves_mass() {
        let d = BoundaryDomain::interval(0.0, 1.0, 64).unwrap();
        let r = RobinData::constant(0.0, 0.0);
        let h: Vec<f64> = d.interior.iter().map(|x| (PI * x[0]).cos() + x[0] * x[0]).collect();
        let s = solve_robin(&problem(&d, &r, &h, 20)).unwrap();
        let m0 = mean(&d, &h);
        let m1 = mean(&d, s.values.last().unwrap());
        assert!((m1 - m0).abs() < 1e-4, "{m0} {m1}");
    }

    #[test]
    fn benchmark_converges() {
        let b = robin_heat_benchmark(32, 40, 32).unwrap();
        assert!(b.residual < 1e-6, "{b:?}");
        assert!(b.ratios.iter().take(3).all(|r| *r < 0.9), "{b:?}");
        assert!(b.max_error < 5e-3, "{b:?}");
    }

    #[test]
    fn disk_constant_and_fd_reference() {
        let d = BoundaryDomain::disk(1.0, 24, 6, 16).unwrap();
        let r = RobinData::constant(0.0, 0.0);
        let h = vec![2.0; d.interior.len()];
        let s = solve_robin(&problem(&d, &r, &h, 6)).unwrap();
        let dev = s.values.iter().flatten().map(|v| (v - 2.0).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
        let u = robin_heat_fd(0.0, 1.0, 1.0, 0.0, 0.0, |x| (PI * x).cos(), 0.1, 200, 400);
        let exact = (-PI * PI * 0.1f64).exp();
        assert!((u[0] - exact).abs() < 1e-4);
    }

    #[test]
    fn depth_is_bounded() {
        let d = BoundaryDomain::interval(0.0, 1.0, 8).unwrap();
        let op = DensityOperator::new(&d, heat(1, 0.5), &RobinData::constant(1.0, 0.0), TimeMesh { horizon: 0.1, steps: 4 }, 0.0, 1.0);
        let f = vec![vec![1.0; 2]; 5];
        assert!(matches!(solve_density(&f, &op, MAX_DEPTH + 1), Err(Error::DepthExceeded { .. })));
    }

    #[test]
    fn boundary_step_keeps_uniform_flow() {
        let d = BoundaryDomain::disk(1.0, 16, 4, 12).unwrap();
        let robin = vec![RobinData::constant(0.0, 0.0), RobinData::constant(0.0, 0.0)];
        let v = vec![vec![0.3; d.interior.len()], vec![-0.2; d.interior.len()]];
        let step = BoundaryStep { domain: &d, rho: 0.1, nu: 0.1, robin: &robin, mesh: TimeMesh { horizon: 1.0, steps: 4 }, t0: 0.0, depth: DEFAULT_DEPTH };
        let out = boundary_step(&step, &v, None).unwrap();
        let again = boundary_step(&step, &v, Some(&out.trajectory)).unwrap();
        for (c, target) in [0.3, -0.2].into_iter().enumerate() {
            let dev = again.trajectory.iter().flat_map(|s| s[c].iter()).map(|x| (x - target).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-3, "{dev}");
        }
    }
}
