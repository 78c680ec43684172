//! Frozen-coefficient linear problems `u_t + a . grad u = D Delta u + g` over one
//! unit of transformed time.
//!
//! The marching backend is IMEX: backward-Euler diffusion (an FFT solve on a
//! torus, conjugate gradients with zero Dirichlet ghosts on a truncated box) with
//! explicit advection and source. The Duhamel backend convolves data and sources
//! with the fundamental solution and serves as the independent check.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{FftNd, signed_index};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::kernels::{GaussianKernelSpec, KernelSpectrum, SampledKernel};
use crate::parametrix::{DriftSpec, LevySeries};

/// Time-indexed field data: absent, frozen, or one sample per substep time (`N + 1`).
#[derive(Clone, Debug)]
pub enum TimeData {
    Zero,
    Const(VectorField),
    Samples(Vec<VectorField>),
}

impl TimeData {
    fn at(&self, n: usize) -> Option<&VectorField> {
        match self {
            TimeData::Zero => None,
            TimeData::Const(v) => Some(v),
            TimeData::Samples(s) => Some(&s[n.min(s.len() - 1)]),
        }
    }

    fn check(&self, substeps: usize, grid: &Grid, what: &str) -> Result<()> {
        let fields: Vec<&VectorField> = match self {
            TimeData::Zero => vec![],
            TimeData::Const(v) => vec![v],
            TimeData::Samples(s) => {
                if s.len() != substeps + 1 {
                    return Err(Error::ShapeMismatch(format!("{what}: {} samples for {substeps} substeps", s.len())));
                }
                s.iter().collect()
            }
        };
        if fields.iter().any(|f| !f.grid.same_shape(grid)) {
            return Err(Error::ShapeMismatch(format!("{what} lives on a different grid")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LinearProblem {
    pub diffusion: f64,
    /// Transport velocity is `drift_scale * drift`.
    pub drift: TimeData,
    pub drift_scale: f64,
    pub source: TimeData,
    pub initial: VectorField,
    pub horizon: f64,
}

impl LinearProblem {
    pub fn heat(initial: VectorField, diffusion: f64) -> Self {
        LinearProblem { diffusion, drift: TimeData::Zero, drift_scale: 1.0, source: TimeData::Zero, initial, horizon: 1.0 }
    }

    pub fn grid(&self) -> Grid {
        self.initial.grid
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ReferenceImex,
    DuhamelParametrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advection {
    Central,
    Upwind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backend {
    pub kind: BackendKind,
    pub substeps: usize,
    pub advection: Advection,
}

impl Default for Backend {
    fn default() -> Self {
        Backend { kind: BackendKind::ReferenceImex, substeps: 16, advection: Advection::Central }
    }
}

impl Backend {
    pub fn imex(substeps: usize) -> Self {
        Backend { substeps, ..Default::default() }
    }
    pub fn duhamel(substeps: usize) -> Self {
        Backend { kind: BackendKind::DuhamelParametrix, substeps, ..Default::default() }
    }
}

/// Solution samples at `tau_n = n * horizon / N`, `n = 0..=N`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<VectorField>,
}

impl Trajectory {
    pub fn last(&self) -> &VectorField {
        self.states.last().unwrap()
    }
}

pub const MAX_CFL: f64 = 0.5;

/// Advective CFL number `max|a| dtau / h` over the samples that will be used.
pub fn cfl_number(p: &LinearProblem, substeps: usize) -> f64 {
    let dt = p.horizon / substeps as f64;
    let h = p.grid().spacing();
    let amax = match &p.drift {
        TimeData::Zero => 0.0,
        TimeData::Const(v) => v.sup(),
        TimeData::Samples(s) => s.iter().fold(0.0f64, |m, v| m.max(v.sup())),
    };
    amax * p.drift_scale.abs() * dt / h
}

/// Reusable IMEX workspace for one grid and one `D * dtau`.
#[derive(Clone, Debug)]
pub struct ImexSolver {
    grid: Grid,
    kappa: f64,
    fft: Option<Arc<FftNd>>,
    symbol: Vec<f64>,
}

impl ImexSolver {
    pub fn new(grid: Grid, diffusion: f64, dtau: f64) -> Self {
        let kappa = diffusion * dtau;
        if !grid.is_torus() {
            return ImexSolver { grid, kappa, fft: None, symbol: vec![] };
        }
        let n = grid.points_per_axis();
        let h = grid.spacing();
        let d = grid.dim();
        let dk = std::f64::consts::PI / grid.extent();
        let symbol = (0..grid.len())
            .map(|idx| {
                let mut r = idx;
                let mut lam = 0.0;
                for _ in 0..d {
                    let k = signed_index(r % n, n) as f64 * dk;
                    r /= n;
                    lam += 4.0 * (0.5 * k * h).sin().powi(2) / (h * h);
                }
                1.0 / (1.0 + kappa * lam)
            })
            .collect();
        ImexSolver { grid, kappa, fft: Some(Arc::new(FftNd::new(d, n))), symbol }
    }

    /// Solves `(I - kappa Delta_h) u = rhs` in place for every component.
    pub fn implicit(&self, comps: &mut [ScalarField]) {
        if self.kappa == 0.0 {
            return;
        }
        match &self.fft {
            Some(fft) => {
                for pair in comps.chunks_mut(2) {
                    let mut buf: Vec<Complex64> = if pair.len() == 2 {
                        pair[0].values.iter().zip(&pair[1].values).map(|(a, b)| Complex64::new(*a, *b)).collect()
                    } else {
                        pair[0].values.iter().map(|a| Complex64::new(*a, 0.0)).collect()
                    };
                    fft.forward(&mut buf);
                    for (z, s) in buf.iter_mut().zip(&self.symbol) {
                        *z *= s;
                    }
                    fft.inverse(&mut buf);
                    for (i, z) in buf.iter().enumerate() {
                        pair[0].values[i] = z.re;
                        if pair.len() == 2 {
                            pair[1].values[i] = z.im;
                        }
                    }
                }
            }
            None => {
                for c in comps.iter_mut() {
                    self.cg(c);
                }
            }
        }
    }

    fn apply_dirichlet(&self, u: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let n = g.points_per_axis();
        let inv = self.kappa / (g.spacing() * g.spacing());
        let d = g.dim();
        for (idx, o) in out.iter_mut().enumerate() {
            let mut acc = u[idx] * (1.0 + 2.0 * d as f64 * inv);
            let mut r = idx;
            for a in (0..d).rev() {
                let i = r % n;
                r /= n;
                let s = g.stride(a);
                if i > 0 {
                    acc -= inv * u[idx - s];
                }
                if i + 1 < n {
                    acc -= inv * u[idx + s];
                }
            }
            *o = acc;
        }
    }

    fn cg(&self, f: &mut ScalarField) {
        let b = f.values.clone();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return;
        }
        let x = &mut f.values;
        let mut ax = vec![0.0; b.len()];
        self.apply_dirichlet(x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut p = r.clone();
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        for _ in 0..10 * b.len() {
            if rr.sqrt() <= 1e-13 * bnorm {
                break;
            }
            self.apply_dirichlet(&p, &mut ax);
            let alpha = rr / p.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * ax[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..p.len() {
                p[i] = r[i] + beta * p[i];
            }
        }
    }

    /// One IMEX substep from `u` with advecting velocity `a` (already scaled) and source `g`.
    pub fn step(&self, u: &VectorField, a: Option<(&VectorField, f64)>, g: Option<&VectorField>, dtau: f64, adv: Advection) -> VectorField {
        let mut comps = u.comps.clone();
        if let Some((vel, scale)) = a {
            for (c, uc) in comps.iter_mut().zip(&u.comps) {
                let t = advect(uc, vel, scale, adv);
                c.axpy(-dtau, &t);
            }
        }
        if let Some(g) = g {
            for (c, gc) in comps.iter_mut().zip(&g.comps) {
                c.axpy(dtau, gc);
            }
        }
        self.implicit(&mut comps);
        VectorField { grid: u.grid, comps }
    }
}

/// `scale * a . grad u`
fn advect(u: &ScalarField, a: &VectorField, scale: f64, adv: Advection) -> ScalarField {
    let g = u.grid;
    let mut out = ScalarField::zeros(g);
    for (axis, ac) in a.comps.iter().enumerate() {
        match adv {
            Advection::Central => {
                let du = u.partial(axis);
                for i in 0..out.values.len() {
                    out.values[i] += scale * ac.values[i] * du.values[i];
                }
            }
            Advection::Upwind => {
                let n = g.points_per_axis();
                let s = g.stride(axis);
                let h = g.spacing();
                for i in 0..out.values.len() {
                    let vel = scale * ac.values[i];
                    let pos = (i / s) % n;
                    let (fwd, bwd) = if g.is_torus() {
                        (i - pos * s + ((pos + 1) % n) * s, i - pos * s + ((pos + n - 1) % n) * s)
                    } else {
                        (if pos + 1 < n { i + s } else { i }, if pos > 0 { i - s } else { i })
                    };
                    let du = if vel > 0.0 {
                        (u.values[i] - u.values[bwd]) / if bwd == i { f64::INFINITY } else { h }
                    } else {
                        (u.values[fwd] - u.values[i]) / if fwd == i { f64::INFINITY } else { h }
                    };
                    out.values[i] += vel * du;
                }
            }
        }
    }
    out
}

fn validate(p: &LinearProblem, b: &Backend) -> Result<()> {
    let g = p.grid();
    if !(p.diffusion > 0.0) {
        return Err(Error::InvalidGrid(format!("diffusion {} must be positive", p.diffusion)));
    }
    if b.substeps < 4 {
        return Err(Error::InvalidGrid(format!("{} substeps, need >= 4", b.substeps)));
    }
    p.drift.check(b.substeps, &g, "drift")?;
    p.source.check(b.substeps, &g, "source")?;
    if let Some(a) = p.drift.at(0) {
        if a.comps.len() != g.dim() {
            return Err(Error::ShapeMismatch("drift needs one component per axis".into()));
        }
    }
    Ok(())
}

pub fn solve_cauchy(p: &LinearProblem, b: &Backend) -> Result<Trajectory> {
    validate(p, b)?;
    match b.kind {
        BackendKind::ReferenceImex => {
            let solver = ImexSolver::new(p.grid(), p.diffusion, p.horizon / b.substeps as f64);
            solve_imex(&solver, p, b)
        }
        BackendKind::DuhamelParametrix => solve_duhamel(p, b.substeps),
    }
}

/// IMEX march with a prebuilt workspace (its `kappa` must match `D * horizon / substeps`).
pub fn solve_imex(solver: &ImexSolver, p: &LinearProblem, b: &Backend) -> Result<Trajectory> {
    let cfl = cfl_number(p, b.substeps);
    if cfl > MAX_CFL {
        return Err(Error::CflViolation { cfl });
    }
    let dt = p.horizon / b.substeps as f64;
    let mut states = Vec::with_capacity(b.substeps + 1);
    states.push(p.initial.clone());
    for n in 0..b.substeps {
        let a = p.drift.at(n).map(|v| (v, p.drift_scale));
        let next = solver.step(&states[n], a, p.source.at(n), dt, b.advection);
        states.push(next);
    }
    let times = (0..=b.substeps).map(|n| n as f64 * dt).collect();
    Ok(Trajectory { times, states })
}

/// Normalised one-step propagator rows for a general drift (1D only).
fn levy_matrix(grid: Grid, drift: &VectorField, scale: f64, diffusion: f64, dt: f64) -> Result<Vec<f64>> {
    let n = grid.len();
    let series = LevySeries::new(DriftSpec::from_field(drift, -scale), diffusion, 1).with_resolution(8, 8);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        let x = grid.point(i);
        let mut row = 0.0;
        for j in 0..n {
            let mut y = grid.point(j);
            if grid.is_torus() {
                let period = 2.0 * grid.extent();
                y[0] = x[0] - (x[0] - y[0] - period * ((x[0] - y[0]) / period).round());
            }
            let v = series.gamma(dt, &x[..1], 0.0, &y[..1])?.value.max(0.0);
            m[i * n + j] = v;
            row += v;
        }
        if row > 0.0 {
            m[i * n..(i + 1) * n].iter_mut().for_each(|v| *v /= row);
        } else {
            m[i * n + i] = 1.0;
        }
    }
    Ok(m)
}

fn is_uniform(v: &VectorField) -> Option<Vec<f64>> {
    let c: Vec<f64> = v.comps.iter().map(|c| c.values[0]).collect();
    v.comps.iter().zip(&c).all(|(comp, c0)| comp.values.iter().all(|x| x == c0)).then_some(c)
}

/// Duhamel representation `u = Gamma * u0 + int Gamma * g`, sources by the trapezoid rule.
fn solve_duhamel(p: &LinearProblem, substeps: usize) -> Result<Trajectory> {
    let g = p.grid();
    let dt = p.horizon / substeps as f64;
    let times: Vec<f64> = (0..=substeps).map(|n| n as f64 * dt).collect();
    // uniform-in-space, constant-in-time drift keeps the closed-form kernel
    let const_drift: Option<Vec<f64>> = match &p.drift {
        TimeData::Zero => Some(vec![0.0; g.dim()]),
        TimeData::Const(v) => is_uniform(v).map(|c| c.iter().map(|x| x * p.drift_scale).collect()),
        TimeData::Samples(s) => is_uniform(&s[0])
            .filter(|c| s.iter().all(|v| is_uniform(v).as_ref() == Some(c)))
            .map(|c| c.iter().map(|x| x * p.drift_scale).collect()),
    };
    if let Some(a) = const_drift {
        let d = g.dim();
        let propagate = |f: &VectorField, elapsed: f64| -> Result<VectorField> {
            if elapsed <= 0.0 {
                return Ok(f.clone());
            }
            let spec = GaussianKernelSpec { diffusion: p.diffusion, elapsed };
            // transport by +a over the elapsed time: sample N(t, x - a t)
            let shift: Vec<f64> = a.iter().map(|ai| ai * elapsed).collect();
            let k = SampledKernel::from_fn(g, |x| {
                let xs: Vec<f64> = x.iter().zip(&shift).map(|(xi, s)| xi - s).collect();
                crate::kernels::heat_kernel(spec, &xs, &vec![0.0; d]).unwrap_or(0.0)
            });
            let k = normalise(k);
            let spec = KernelSpectrum::new(&k);
            let comps = f.comps.iter().map(|c| spec.apply(c)).collect::<Result<Vec<_>>>()?;
            Ok(VectorField { grid: g, comps })
        };
        let mut states = Vec::with_capacity(substeps + 1);
        for (n, &t) in times.iter().enumerate() {
            let mut u = propagate(&p.initial, t)?;
            if !matches!(p.source, TimeData::Zero) {
                for j in 0..=n {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 } * dt;
                    if n == 0 {
                        break;
                    }
                    let contrib = propagate(p.source.at(j).unwrap(), t - times[j])?;
                    u = u.lincomb(1.0, &contrib, w);
                }
            }
            states.push(u);
        }
        return Ok(Trajectory { times, states });
    }
    if g.dim() != 1 || g.len() > 64 {
        return Err(Error::InvalidGrid("variable-drift Duhamel backend is limited to 1D grids of <= 64 points".into()));
    }
    let nn = g.len();
    let mut states = vec![p.initial.clone()];
    for n in 0..substeps {
        let a = p.drift.at(n).unwrap();
        let m = levy_matrix(g, a, p.drift_scale, p.diffusion, dt)?;
        let apply = |f: &ScalarField| -> ScalarField {
            let values = (0..nn).map(|i| (0..nn).map(|j| m[i * nn + j] * f.values[j]).sum()).collect();
            ScalarField { grid: g, values }
        };
        let cur = &states[n];
        let comps = cur
            .comps
            .iter()
            .enumerate()
            .map(|(c, f)| {
                let mut next = apply(f);
                if let (Some(g0), Some(g1)) = (p.source.at(n), p.source.at(n + 1)) {
                    next.axpy(0.5 * dt, &apply(&g0.comps[c]));
                    next.axpy(0.5 * dt, &g1.comps[c]);
                }
                next
            })
            .collect();
        states.push(VectorField { grid: g, comps });
    }
    Ok(Trajectory { times, states })
}

fn normalise(mut k: SampledKernel) -> SampledKernel {
    let dv = k.grid.cell_volume();
    let mass: f64 = k.values.iter().sum::<f64>() * dv;
    if mass > 1e-300 {
        k.values.iter_mut().for_each(|v| *v /= mass);
    } else {
        k.values.iter_mut().for_each(|v| *v = 0.0);
        k.values[0] = 1.0 / dv;
    }
    k
}

pub const CROSS_VALIDATE_MAX_POINTS: usize = 48;

/// Runs both backends with the same substep count; returns the sup discrepancy over all times.
pub fn cross_validate(p: &LinearProblem, substeps: usize) -> Result<f64> {
    if p.grid().points_per_axis() > CROSS_VALIDATE_MAX_POINTS {
        return Err(Error::InvalidGrid(format!(
            "cross validation limited to {CROSS_VALIDATE_MAX_POINTS} points per axis"
        )));
    }
    let a = solve_cauchy(p, &Backend::imex(substeps))?;
    let b = solve_cauchy(p, &Backend::duhamel(substeps))?;
    Ok(a.states.iter().zip(&b.states).fold(0.0f64, |m, (x, y)| m.max(x.max_abs_diff(y))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Topology;
    use std::f64::consts::PI;

    fn gaussian(grid: Grid, var: f64, center: f64) -> VectorField {
        VectorField::from_fn(grid, |x, _| {
            let r2: f64 = x.iter().map(|t| (t - center) * (t - center)).sum();
            (-r2 / (2.0 * var)).exp() / (2.0 * PI * var).sqrt().powi(grid.dim() as i32)
        })
    }

    #[test]
    fn heat_matches_variance_growth() {
        let g = Grid::new(1, 10.0, 256, Topology::FreeSpaceTruncated).unwrap();
        let d = 0.1;
        let p = LinearProblem::heat(gaussian(g, 1.0, 0.0), d);
        let out = solve_cauchy(&p, &Backend::imex(256)).unwrap();
        let want = gaussian(g, 1.0 + 2.0 * d, 0.0);
        assert!(out.last().max_abs_diff(&want) <= 1e-4);
    }

    #[test]
    fn zero_problem_stays_zero() {
        let g = Grid::new(2, 3.0, 16, Topology::Torus).unwrap();
        let p = LinearProblem::heat(VectorField::zeros(g), 0.3);
        for b in [Backend::imex(8), Backend::duhamel(8)] {
            assert_eq!(solve_cauchy(&p, &b).unwrap().last().sup(), 0.0);
        }
        assert_eq!(cross_validate(&p, 8).unwrap(), 0.0);
    }

    #[test]
    fn constant_drift_translates() {
        let g = Grid::new(1, 10.0, 256, Topology::FreeSpaceTruncated).unwrap();
        let c = 1.5;
        let mut p = LinearProblem::heat(gaussian(g, 0.5, -2.0), 0.05);
        p.drift = TimeData::Const(VectorField::from_fn(g, |_, _| c));
        let out = solve_cauchy(&p, &Backend::imex(64)).unwrap();
        let u = &out.last().comps[0];
        let mass: f64 = u.values.iter().sum();
        let com: f64 = u.values.iter().enumerate().map(|(i, v)| g.coord(i) * v).sum::<f64>() / mass;
        assert!((com - (-2.0 + c)).abs() <= g.spacing());
    }

    #[test]
    fn backends_agree() {
        let g = Grid::new(1, 8.0, 48, Topology::Torus).unwrap();
        let p = LinearProblem::heat(gaussian(g, 2.0, 0.0), 0.2);
        assert!(cross_validate(&p, 64).unwrap() <= 1e-3);
        let mut q = p.clone();
        q.drift = TimeData::Const(VectorField::from_fn(g, |_, _| 0.5));
        assert!(cross_validate(&q, 64).unwrap() <= 5e-3);
        let big = Grid::new(1, 8.0, 64, Topology::Torus).unwrap();
        assert!(cross_validate(&LinearProblem::heat(VectorField::zeros(big), 1.0), 8).is_err());
    }

    #[test]
    fn variable_drift_duhamel_tracks_imex() {
        let g = Grid::new(1, 6.0, 48, Topology::FreeSpaceTruncated).unwrap();
        let mut p = LinearProblem::heat(gaussian(g, 0.8, 0.0), 0.3);
        p.drift = TimeData::Const(VectorField::from_fn(g, |x, _| 0.4 * (x[0] / 2.0).sin()));
        p.source = TimeData::Const(VectorField::from_fn(g, |x, _| 0.1 * (-x[0] * x[0]).exp()));
        assert!(cross_validate(&p, 16).unwrap() <= 5e-3);
    }

    #[test]
    fn cfl_guard() {
        let g = Grid::new(1, 1.0, 16, Topology::Torus).unwrap();
        let mut p = LinearProblem::heat(gaussian(g, 0.1, 0.0), 0.1);
        p.drift = TimeData::Const(VectorField::from_fn(g, |_, _| 10.0));
        assert!(matches!(solve_cauchy(&p, &Backend::imex(4)), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn torus_mean_is_conserved() {
        let g = Grid::new(2, PI, 32, Topology::Torus).unwrap();
        let u0 = VectorField::from_fn(g, |x, c| (x[0] + c as f64).sin().exp() * x[1].cos().exp());
        let p = LinearProblem::heat(u0.clone(), 0.7);
        let out = solve_cauchy(&p, &Backend::imex(8)).unwrap();
        for c in 0..2 {
            let m0: f64 = u0.comps[c].values.iter().sum::<f64>() / g.len() as f64;
            let m1: f64 = out.last().comps[c].values.iter().sum::<f64>() / g.len() as f64;
            assert!((m0 - m1).abs() < 1e-12);
        }
    }
}
