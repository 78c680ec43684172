//! The global march: step-size schedules, the local fixed-point iteration on each
//! unit step, the control-function assembly `v = v^r - r` and the Burgers mode.
//!
//! Step `l` works in the rescaled time `tau in [l-1, l]`, where the equation reads
//! `v_tau - rho nu Lap v + rho (v.grad) v = rho P(v, v)` with
//! `P(a, b)_i = int d_i K(x-y) sum_{j,k} a_{k,j} b_{j,k}(y) dy`.

use serde::{Deserialize, Serialize};

use crate::control::{
    BoundsLedger, ConsumptionCheck, LedgerRow, Modulation, RStep, build_phi, consumption_check, initial_constant,
    r_source, solve_r, trajectory_stats, transport,
};
use crate::error::{Error, Result};
use crate::grid::{VectorField, decay_check, divergence, norms, product_source};
use crate::kernels::LerayOperator;
use crate::linparab::{Backend, BackendKind, ImexSolver, LinearProblem, TimeData, Trajectory, solve_cauchy, solve_imex};
use crate::parametrix::GammaConstantEstimator;

/// Smallest admissible cap before the run is declared collapsed.
pub const MIN_CAP: f64 = 1e-8;
/// Largest factor tried when searching for the step-one constant `C*`.
pub const MAX_C_STAR: f64 = 1024.0;
/// Contraction target of the local iteration and the allowance used by the checks.
pub const CONTRACTION_TARGET: f64 = 0.25;
pub const CONTRACTION_SLACK: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// `rho_l = min(C / l, cap_l)`
    Decreasing,
    /// One `rho` for all steps, checked against the cap at `l = 1`.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub mode: ScheduleMode,
    pub c: f64,
    /// Requested uniform step; `None` takes the step-one cap.
    pub rho: Option<f64>,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule { mode: ScheduleMode::Uniform, c: 0.5, rho: None }
    }
}

/// Constants entering the step-size cap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapConstants {
    pub c_star: f64,
    /// `C^{l-1}_{1,2}`
    pub c_prev: f64,
    pub c_r: f64,
    pub c_gamma: f64,
}

/// `1 / (C* ((C^{l-1} + C_r) + l (C^{l-1} + C_r)) 4 C_Gamma^2)`
pub fn step_cap(l: usize, k: &CapConstants) -> f64 {
    let base = k.c_prev + k.c_r;
    1.0 / (k.c_star * (base + l as f64 * base) * 4.0 * k.c_gamma * k.c_gamma)
}

pub fn rho_schedule(l: usize, cap: f64, schedule: &StepSchedule) -> Result<f64> {
    if !(cap >= MIN_CAP) {
        return Err(Error::CapCollapse { cap });
    }
    Ok(match schedule.mode {
        ScheduleMode::Decreasing => (schedule.c / l.max(1) as f64).min(cap),
        ScheduleMode::Uniform => match (l, schedule.rho) {
            (1, Some(r)) => r.min(cap),
            (_, Some(r)) => r,
            (_, None) => cap,
        },
    })
}

/// `sum_{l<=n} C/l`
pub fn schedule_partial_sum(c: f64, n: u64) -> f64 {
    (1..=n).rev().map(|l| c / l as f64).sum()
}

/// `C ln(n+1) <= sum_{l<=n} C/l`
pub fn harmonic_lower_bound(c: f64, n: u64) -> f64 {
    c * (n as f64 + 1.0).ln()
}

/// Number of decreasing steps after which the elapsed time surely exceeds `bound`.
pub fn steps_to_exceed(c: f64, bound: f64) -> f64 {
    (bound / c).exp()
}

/// History of the local iteration on one step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    /// Index of the last computed iterate.
    pub k: usize,
    /// `|delta v^k|_{1,2}` for `k >= 1`.
    pub delta12: Vec<f64>,
    /// `max_tau |delta v^k(tau)|_{H^2}` for `k >= 1`.
    pub delta_h2: Vec<f64>,
    /// `|delta v^{k+1}| / |delta v^k|`
    pub ratios: Vec<f64>,
    pub converged: bool,
}

impl IterationState {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
    pub fn final_ratio(&self) -> f64 {
        self.ratios.last().copied().unwrap_or(0.0)
    }
    pub fn delta_sum(&self) -> f64 {
        self.delta12.iter().sum()
    }
}

/// Parameters of one local solve.
#[derive(Clone, Copy, Debug)]
pub struct LocalSetup<'a> {
    pub rho: f64,
    pub nu: f64,
    pub backend: Backend,
    pub tol: f64,
    pub kmax: usize,
    /// Corrections computed before the tolerance may stop the iteration, so at
    /// least `min_corrections - 1` contraction ratios are measured.
    pub min_corrections: usize,
    /// `None` disables the pressure term (Burgers mode).
    pub leray: Option<&'a LerayOperator>,
}

fn diff(a: &Trajectory, b: &Trajectory) -> Trajectory {
    Trajectory {
        times: a.times.clone(),
        states: a.states.iter().zip(&b.states).map(|(x, y)| x.lincomb(1.0, y, -1.0)).collect(),
    }
}

fn constant_trajectory(v: &VectorField, substeps: usize) -> Trajectory {
    Trajectory {
        times: (0..=substeps).map(|n| n as f64 / substeps as f64).collect(),
        states: vec![v.clone(); substeps + 1],
    }
}

/// One-sided difference quotients of a trajectory (forward at the first sample, backward after).
fn time_derivative(tr: &Trajectory) -> Vec<VectorField> {
    let n = tr.states.len();
    (0..n)
        .map(|k| {
            let (a, b) = if k == 0 { (1, 0) } else { (k, k - 1) };
            let dt = tr.times[a] - tr.times[b];
            tr.states[a].lincomb(1.0 / dt, &tr.states[b], -1.0 / dt)
        })
        .collect()
}

/// `rho P(u,u) + L(r; u) + r_tau` with
/// `L(r;u) = -rho nu Lap r - rho (r.grad) r + rho (r.grad) u + rho (u.grad) r - 2 rho P(r,u) + rho P(r,r)`.
fn iteration_source(
    u: &VectorField,
    r: Option<(&VectorField, &VectorField)>,
    rho: f64,
    nu: f64,
    leray: Option<&LerayOperator>,
) -> Result<VectorField> {
    let mut out = VectorField::zeros(u.grid);
    out.comps.truncate(u.dim());
    if let Some(op) = leray {
        let ju = u.jacobian();
        let mut s = product_source(&ju, &ju);
        if let Some((rv, _)) = r {
            let jr = rv.jacobian();
            s.axpy(-2.0, &product_source(&jr, &ju));
            s.axpy(1.0, &product_source(&jr, &jr));
        }
        out = op.grad_potential(&s)?.scaled(rho);
    }
    if let Some((rv, rt)) = r {
        let rr = transport(rv, rv);
        let ru = transport(rv, u);
        let ur = transport(u, rv);
        for i in 0..u.dim() {
            let c = &mut out.comps[i];
            c.axpy(-rho * nu, &rv.comps[i].laplacian());
            c.axpy(-rho, &rr.comps[i]);
            c.axpy(rho, &ru.comps[i]);
            c.axpy(rho, &ur.comps[i]);
            c.axpy(1.0, &rt.comps[i]);
        }
    }
    Ok(out)
}

/// Local fixed-point iteration on step `l`: the `k`-th iterate solves
/// `u_tau - rho nu Lap u + rho (u^{k-1}.grad) u = rho P(u^{k-1}, u^{k-1}) + L(r; u^{k-1}) + r_tau`
/// from `v_init`, with `u^{-1} = v_init`.
pub fn local_fixed_point(
    l: usize,
    v_init: &VectorField,
    r: Option<&Trajectory>,
    setup: &LocalSetup,
) -> Result<(Trajectory, IterationState)> {
    let n = setup.backend.substeps;
    if let Some(rt) = r {
        if rt.states.len() != n + 1 {
            return Err(Error::ShapeMismatch(format!("control trajectory has {} samples for {n} substeps", rt.states.len())));
        }
    }
    let r_tau = r.map(time_derivative);
    let imex = ImexSolver::new(v_init.grid, setup.rho * setup.nu, 1.0 / n as f64);
    let full_samples = setup.backend.kind == BackendKind::DuhamelParametrix;
    let mut prev = constant_trajectory(v_init, n);
    let mut state = IterationState::default();
    let mut rising = 0;
    for k in 0..=setup.kmax {
        let mut src = Vec::with_capacity(n + 1);
        for m in 0..=n {
            if m == n && !full_samples {
                // the explicit step never reads the last sample
                let last: VectorField = src.last().cloned().unwrap();
                src.push(last);
                break;
            }
            let rv = r.map(|t| (&t.states[m], &r_tau.as_ref().unwrap()[m]));
            src.push(iteration_source(&prev.states[m], rv, setup.rho, setup.nu, setup.leray)?);
        }
        let source = if r.is_none() && setup.leray.is_none() { TimeData::Zero } else { TimeData::Samples(src) };
        let drift = if k == 0 { TimeData::Const(v_init.clone()) } else { TimeData::Samples(prev.states.clone()) };
        let prob = LinearProblem {
            diffusion: setup.rho * setup.nu,
            drift,
            drift_scale: setup.rho,
            source,
            initial: v_init.clone(),
            horizon: 1.0,
        };
        let next = match setup.backend.kind {
            BackendKind::ReferenceImex => solve_imex(&imex, &prob, &setup.backend)?,
            BackendKind::DuhamelParametrix => solve_cauchy(&prob, &setup.backend)?,
        };
        state.k = k;
        if k >= 1 {
            let d = diff(&next, &prev);
            let st = trajectory_stats(&d);
            let d12 = st.norm12;
            if let Some(&last) = state.delta12.last() {
                let ratio = if last > 0.0 { d12 / last } else { 0.0 };
                state.ratios.push(ratio);
                rising = if ratio > 1.0 { rising + 1 } else { 0 };
            }
            state.delta12.push(d12);
            state.delta_h2.push(st.max_h2);
            if !d12.is_finite() || rising >= 3 {
                return Err(Error::NoContraction { step: l, retries: 0 });
            }
            if d12 <= setup.tol && k >= setup.min_corrections {
                state.converged = true;
                return Ok((next, state));
            }
        }
        prev = next;
    }
    Err(Error::NoContraction { step: l, retries: 0 })
}

/// Six-term difference between the step's frozen right side and the consumption source,
/// `|psi^{l,0} - phi^l|_{0,1}` maximised over the substep samples.
pub fn psi_gap_diagnostic(
    r: &Trajectory,
    r_prev: &VectorField,
    v_prev: &VectorField,
    rho: f64,
    leray: &LerayOperator,
) -> Result<f64> {
    let jv = v_prev.jacobian();
    let jp = r_prev.jacobian();
    let spp = product_source(&jp, &jp);
    let mut worst: f64 = 0.0;
    for rl in &r.states {
        let dr = rl.lincomb(1.0, r_prev, -1.0);
        if dr.sup() == 0.0 {
            continue;
        }
        let jr = rl.jacobian();
        let jd = dr.jacobian();
        let mut s = product_source(&jd, &jv).scaled(-2.0);
        s.axpy(1.0, &product_source(&jr, &jr));
        s.axpy(-1.0, &spp);
        let pot = leray.grad_potential(&s)?;
        let t1 = transport(&dr, rl);
        let t2 = transport(&dr, v_prev);
        let t3 = transport(v_prev, &dr);
        for i in 0..rl.dim() {
            let mut c = pot.comps[i].clone();
            c.axpy(-1.0, &t1.comps[i]);
            c.axpy(1.0, &t2.comps[i]);
            c.axpy(1.0, &t3.comps[i]);
            worst = worst.max(rho * c.norms().sup01);
        }
    }
    Ok(worst)
}

/// Per-step record of the march.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub l: usize,
    pub rho: f64,
    /// Original time at the end of the step.
    pub t: f64,
    pub iterations: usize,
    pub retries: usize,
    pub final_ratio: f64,
    pub max_ratio: f64,
    pub delta_sum: f64,
    pub sup_vr: f64,
    pub h2_vr: f64,
    pub sup_r: f64,
    pub h2_r: f64,
    pub sup_v: f64,
    pub h2_v: f64,
    pub div_max: f64,
    pub integral_magnitude: f64,
    pub psi_gap: f64,
    pub consumption_ok: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarchConfig {
    pub nu: f64,
    /// Final original time.
    pub horizon: f64,
    pub schedule: StepSchedule,
    pub controls: bool,
    /// Pressure term on (Navier-Stokes) or off (Burgers).
    pub leray: bool,
    pub backend: Backend,
    /// Convergence tolerance; `None` uses `1e-8 C_{1,2}`.
    pub tol: Option<f64>,
    pub kmax: usize,
    pub min_corrections: usize,
    pub modulation: Modulation,
    /// `r^1 = 0` on the first step.
    pub zero_first_control: bool,
    /// `None` searches the smallest power of two passing the step-one checks.
    pub c_star: Option<f64>,
    pub max_steps: Option<usize>,
    pub max_retries: usize,
    pub consumption_checks: bool,
    /// Assert the sup-norm maximum principle on every sample (Burgers mode).
    pub max_principle: bool,
    pub abort_on_breach: bool,
}

impl Default for MarchConfig {
    fn default() -> Self {
        MarchConfig {
            nu: 0.1,
            horizon: 1.0,
            schedule: StepSchedule::default(),
            controls: false,
            leray: true,
            backend: Backend::imex(4),
            tol: None,
            kmax: 25,
            min_corrections: 2,
            modulation: Modulation::Constant,
            zero_first_control: true,
            c_star: None,
            max_steps: None,
            max_retries: 6,
            consumption_checks: true,
            max_principle: false,
            abort_on_breach: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MarchOutput {
    pub reports: Vec<StepReport>,
    pub ledger: BoundsLedger,
    pub iterations: Vec<IterationState>,
    pub consumption: Vec<ConsumptionCheck>,
    pub final_vr: VectorField,
    pub final_r: VectorField,
    pub final_v: VectorField,
    pub initial_divergence: f64,
    /// First ledger breach; the march stops there when `abort_on_breach` is set.
    pub breach: Option<String>,
}

impl MarchOutput {
    pub fn final_time(&self) -> f64 {
        self.reports.last().map(|r| r.t).unwrap_or(0.0)
    }
}

struct StepResult {
    vr: Trajectory,
    r: Trajectory,
    iter: IterationState,
    psi_gap: f64,
    consumption: Option<ConsumptionCheck>,
}

struct Ctx<'a> {
    cfg: &'a MarchConfig,
    leray: Option<&'a LerayOperator>,
    tol: f64,
    level: f64,
}

fn attempt_step(ctx: &Ctx, l: usize, rho: f64, v_prev: &VectorField, r_prev: &VectorField) -> Result<StepResult> {
    let cfg = ctx.cfg;
    let n = cfg.backend.substeps;
    let mut psi_gap = 0.0;
    let mut consumption = None;
    let r = if cfg.controls && !(cfg.zero_first_control && l == 1) {
        let op = ctx.leray.ok_or_else(|| Error::Validation(vec!["controls need the pressure term".into()]))?;
        let cf = build_phi(v_prev, r_prev, ctx.level)?;
        let s = r_source(v_prev, r_prev, rho, op)?;
        let rs = RStep { rho, nu: cfg.nu, modulation: cfg.modulation, backend: cfg.backend };
        let r = solve_r(r_prev, &s, &cf.total, &rs)?;
        if cfg.consumption_checks {
            consumption = Some(consumption_check(r_prev, &s, &cf, &rs)?);
        }
        psi_gap = psi_gap_diagnostic(&r, r_prev, v_prev, rho, op)?;
        r
    } else {
        constant_trajectory(r_prev, n)
    };
    let setup = LocalSetup { rho, nu: cfg.nu, backend: cfg.backend, tol: ctx.tol, kmax: cfg.kmax, min_corrections: cfg.min_corrections, leray: ctx.leray };
    let rr = if cfg.controls { Some(&r) } else { None };
    let (vr, iter) = local_fixed_point(l, v_prev, rr, &setup)?;
    Ok(StepResult { vr, r, iter, psi_gap, consumption })
}

fn step_checks_pass(res: &StepResult, ledger: &BoundsLedger, l: usize) -> bool {
    res.iter.converged
        && res.iter.max_ratio() <= CONTRACTION_TARGET + CONTRACTION_SLACK
        && res.iter.delta_sum() <= CONTRACTION_TARGET * ledger.c12
        && trajectory_stats(&res.vr).max_h2 <= ledger.h2_budget(l)
}

/// Sup norm of the discrete divergence; zero for scalar (one-dimensional) fields.
fn divergence_sup(v: &VectorField) -> Result<f64> {
    if v.grid.dim() < 2 { Ok(0.0) } else { Ok(divergence(v)?.sup()) }
}

pub fn global_march(h: &VectorField, cfg: &MarchConfig) -> Result<MarchOutput> {
    global_march_observed(h, cfg, &mut |_, _| {})
}

/// March with a callback receiving each report and the assembled `v^{rho,l}`.
pub fn global_march_observed(
    h: &VectorField,
    cfg: &MarchConfig,
    observer: &mut dyn FnMut(&StepReport, &VectorField),
) -> Result<MarchOutput> {
    h.check_finite()?;
    let g = h.grid;
    let mut problems = Vec::new();
    if h.dim() != g.dim() {
        problems.push(format!("field has {} components on a {}-dimensional grid", h.dim(), g.dim()));
    }
    if !(cfg.nu > 0.0) || !(cfg.horizon > 0.0) {
        problems.push("nu and horizon must be positive".into());
    }
    if cfg.leray && g.dim() < 2 {
        problems.push("the pressure term needs dimension 2 or 3".into());
    }
    if cfg.controls && !cfg.leray {
        problems.push("controls need the pressure term".into());
    }
    if cfg.backend.substeps == 0 {
        problems.push("substeps must be positive".into());
    }
    if !g.is_torus() && problems.is_empty() && !decay_check(h, 2)?.passes {
        problems.push("initial data fails the decay check".into());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let leray_op = if cfg.leray { Some(LerayOperator::new(g)?) } else { None };
    let c12 = initial_constant(h)?;
    let mut ledger = BoundsLedger::new(c12);
    ledger.c_gamma = GammaConstantEstimator::new().estimate(g.dim(), h.sup(), cfg.nu, 1.0).value;
    let ctx = Ctx { cfg, leray: leray_op.as_ref(), tol: cfg.tol.unwrap_or(1e-8 * c12), level: c12 };
    let mut schedule = cfg.schedule;
    let initial_divergence = divergence_sup(h)?;
    let zero = {
        let mut z = VectorField::zeros(g);
        z.comps.truncate(h.dim());
        z
    };
    let mut out = MarchOutput {
        reports: Vec::new(),
        ledger: ledger.clone(),
        iterations: Vec::new(),
        consumption: Vec::new(),
        final_vr: h.clone(),
        final_r: zero.clone(),
        final_v: h.clone(),
        initial_divergence,
        breach: None,
    };
    let mut v_prev = h.clone();
    let mut r_prev = zero;
    // observed |h|_{1,2} of the time-independent data
    let mut c_prev = norms(h)?.sup12;
    let mut t = 0.0;
    let mut l = 0;
    let eps_mp = 1e-6 + g.spacing() * g.spacing();
    while t < cfg.horizon * (1.0 - 1e-12) {
        l += 1;
        if cfg.max_steps.is_some_and(|m| l > m) {
            break;
        }
        let cap_for = |c_star: f64| {
            let k = CapConstants { c_star, c_prev, c_r: if cfg.controls { ledger.c_r } else { 0.0 }, c_gamma: ledger.c_gamma };
            step_cap(l, &k)
        };
        let remaining = cfg.horizon - t;
        let (rho, res, retries) = if l == 1 && cfg.c_star.is_none() {
            let mut c_star = 1.0;
            loop {
                ledger.c_star = c_star;
                let rho = rho_schedule(l, cap_for(c_star), &schedule)?.min(remaining);
                match attempt_step(&ctx, l, rho, &v_prev, &r_prev) {
                    Ok(res) if step_checks_pass(&res, &ledger, l) => break (rho, res, 0),
                    Ok(_) | Err(Error::NoContraction { .. }) if c_star < MAX_C_STAR => c_star *= 2.0,
                    Ok(_) => return Err(Error::NoContraction { step: l, retries: c_star.log2() as usize }),
                    Err(e) => return Err(e),
                }
            }
        } else {
            if l == 1 {
                ledger.c_star = cfg.c_star.unwrap_or(1.0);
            }
            let mut rho = rho_schedule(l, cap_for(ledger.c_star), &schedule)?.min(remaining);
            let mut retries = 0;
            loop {
                match attempt_step(&ctx, l, rho, &v_prev, &r_prev) {
                    Ok(res) => break (rho, res, retries),
                    Err(Error::NoContraction { .. }) if retries < cfg.max_retries => {
                        retries += 1;
                        rho *= 0.5;
                        if rho < MIN_CAP {
                            return Err(Error::CapCollapse { cap: rho });
                        }
                    }
                    Err(Error::NoContraction { .. }) => return Err(Error::NoContraction { step: l, retries }),
                    Err(e) => return Err(e),
                }
            }
        };
        if l == 1 && schedule.mode == ScheduleMode::Uniform {
            schedule.rho = Some(rho);
        }
        t += rho;
        if cfg.max_principle {
            let bound = v_prev.sup() + eps_mp;
            for s in &res.vr.states {
                let sup = s.sup();
                if sup > bound {
                    return Err(Error::MaxPrincipleViolation { step: l, sup, bound });
                }
            }
        }
        let vr_end = res.vr.last().clone();
        let r_end = res.r.last().clone();
        let v = vr_end.lincomb(1.0, &r_end, -1.0);
        let sv = trajectory_stats(&res.vr);
        let sr = trajectory_stats(&res.r);
        let nv = norms(&v)?;
        let report = StepReport {
            l,
            rho,
            t,
            iterations: res.iter.k + 1,
            retries,
            final_ratio: res.iter.final_ratio(),
            max_ratio: res.iter.max_ratio(),
            delta_sum: res.iter.delta_sum(),
            sup_vr: sv.max_sup,
            h2_vr: sv.max_h2,
            sup_r: sr.max_sup,
            h2_r: sr.max_h2,
            sup_v: v.sup(),
            h2_v: nv.h2,
            div_max: divergence_sup(&v)?,
            integral_magnitude: nv.integral_magnitude,
            psi_gap: res.psi_gap,
            consumption_ok: res.consumption.map(|c| c.passed).unwrap_or(true),
        };
        c_prev = sv.norm12;
        let mut row = LedgerRow {
            l,
            rho,
            c12_l: c_prev,
            h2_vr: report.h2_vr,
            h2_r: report.h2_r,
            sup_vr: report.sup_vr,
            sup_v: report.sup_v,
            sup_r: report.sup_r,
            ..Default::default()
        };
        ledger.judge(&mut row, g.dim(), cfg.controls);
        if report.psi_gap > CONTRACTION_TARGET {
            row.breaches.push("psi_gap".into());
        }
        if !report.consumption_ok {
            row.breaches.push("consumption".into());
        }
        let breach = (!row.breaches.is_empty()).then(|| row.breaches.join("+"));
        observer(&report, &v);
        ledger.rows.push(row);
        out.reports.push(report);
        out.iterations.push(res.iter);
        if let Some(c) = res.consumption {
            out.consumption.push(c);
        }
        v_prev = vr_end;
        r_prev = r_end;
        out.final_v = v;
        if let Some(what) = breach {
            if out.breach.is_none() {
                out.breach = Some(format!("step {l}: {what}"));
            }
            if cfg.abort_on_breach {
                break;
            }
        }
    }
    out.final_vr = v_prev;
    out.final_r = r_prev;
    out.ledger = ledger;
    Ok(out)
}

/// Burgers mode: no pressure, no controls, maximum principle asserted on every sample.
pub fn burgers_march(h: &VectorField, cfg: &MarchConfig) -> Result<MarchOutput> {
    let cfg = MarchConfig { leray: false, controls: false, max_principle: true, ..*cfg };
    global_march(h, &cfg)
}

/// Converts a march failure on a breach into an error for callers that need one.
pub fn require_no_breach(out: &MarchOutput) -> Result<()> {
    match &out.breach {
        None => Ok(()),
        Some(what) => Err(Error::LedgerBreach { step: out.reports.last().map(|r| r.l).unwrap_or(0), what: what.clone() }),
    }
}
