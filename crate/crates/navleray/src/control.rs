//! Growth controls: threshold bands, smooth consumption sources built from a
//! bump partition of unity, the auxiliary field `r` and the bounds ledger.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField, norms, product_source};
use crate::kernels::LerayOperator;
use crate::linparab::{Backend, ImexSolver, LinearProblem, TimeData, Trajectory, solve_imex};

/// `exp(-1/(1-y^2))` on `|y| < 1`, zero elsewhere.
pub fn bump(y: f64) -> f64 {
    if y.abs() >= 1.0 { 0.0 } else { (-1.0 / (1.0 - y * y)).exp() }
}

/// `psi(y) = h(y) / sum_m h(y - m)`; the integer translates of `psi` sum to one.
pub fn psi(y: f64) -> f64 {
    let h = bump(y);
    if h == 0.0 {
        return 0.0;
    }
    let f = y.floor();
    let total = bump(y - f) + bump(y - f - 1.0);
    h / total
}

type Cell = [i64; 3];

/// Bump partition `phi_p(x) = prod_i psi(x_i/mu - p_i)` with the cells touching two sets.
#[derive(Clone, Debug)]
pub struct BumpPartition {
    pub grid: Grid,
    pub mu: f64,
    pub distance: f64,
    cells_a: HashSet<Cell>,
    cells_b: HashSet<Cell>,
    /// Cells per period on a torus.
    period: Option<i64>,
}

impl BumpPartition {
    fn local(&self, x: &[f64]) -> [f64; 3] {
        let mut u = [0.0; 3];
        for (a, xi) in x.iter().enumerate() {
            u[a] = if self.period.is_some() { (xi + self.grid.extent()) / self.mu } else { xi / self.mu };
        }
        u
    }

    fn wrap(&self, mut p: Cell) -> Cell {
        if let Some(m) = self.period {
            for v in p.iter_mut().take(self.grid.dim()) {
                *v = v.rem_euclid(m);
            }
        }
        p
    }

    /// Visits every cell whose bump is non-zero at `x` with its value.
    fn for_cells(&self, x: &[f64], mut f: impl FnMut(Cell, f64)) {
        let d = self.grid.dim();
        let u = self.local(x);
        for corner in 0..(1usize << d) {
            let mut p: Cell = [0; 3];
            let mut val = 1.0;
            for a in 0..d {
                let base = u[a].floor() as i64;
                p[a] = base + ((corner >> a) & 1) as i64;
                val *= psi(u[a] - p[a] as f64);
            }
            if val != 0.0 {
                f(self.wrap(p), val);
            }
        }
    }

    /// `sum_p phi_p(x)` over all cells; one up to rounding.
    pub fn partition_sum(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_cells(x, |_, v| s += v);
        s
    }

    /// `(sum over cells of A, sum over cells of B)` at `x`.
    pub fn sums(&self, x: &[f64]) -> (f64, f64) {
        let (mut a, mut b) = (0.0, 0.0);
        self.for_cells(x, |p, v| {
            if self.cells_a.contains(&p) {
                a += v;
            }
            if self.cells_b.contains(&p) {
                b += v;
            }
        });
        (a, b)
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.cells_a.len(), self.cells_b.len())
    }
}

/// Smallest Euclidean distance between two index sets (nearest image on a torus).
pub fn set_distance(grid: &Grid, a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let d = grid.dim();
    let period = 2.0 * grid.extent();
    let pa: Vec<[f64; 3]> = a.iter().map(|&i| grid.point(i)).collect();
    let mut best = f64::INFINITY;
    for &j in b {
        let y = grid.point(j);
        for x in &pa {
            let mut r2 = 0.0;
            for k in 0..d {
                let mut dx = (x[k] - y[k]).abs();
                if grid.is_torus() {
                    dx = dx.min(period - dx);
                }
                r2 += dx * dx;
            }
            best = best.min(r2);
        }
    }
    best.sqrt()
}

/// Smooth `f` with `f = 1` on `A`, `-1` on `B`, `|f| <= 1`, plus the weight
/// `w = sum_{P_A u P_B} phi_p` that equals one on both sets.
#[derive(Clone, Debug)]
pub struct PartitionField {
    pub partition: BumpPartition,
    pub f: ScalarField,
    pub weight: ScalarField,
    /// `|f|_{0,2}` measured on the grid.
    pub f_norm02: f64,
}

pub fn build_partition(a: &[usize], b: &[usize], grid: Grid) -> Result<PartitionField> {
    let sa: HashSet<usize> = a.iter().copied().collect();
    if b.iter().any(|i| sa.contains(i)) {
        return Err(Error::EmptyDistance(0.0));
    }
    let distance = set_distance(&grid, a, b);
    let h = grid.spacing();
    let d = grid.dim();
    let mut mu = (4.0 * h).min(distance / (2.0 * (d as f64).sqrt()));
    // just under the bound so supports stay strictly apart
    if distance.is_finite() && mu * 2.0 * (d as f64).sqrt() >= distance {
        mu *= 1.0 - 1e-9;
    }
    let period = if grid.is_torus() {
        let m = (2.0 * grid.extent() / mu).ceil();
        mu = 2.0 * grid.extent() / m;
        Some(m as i64)
    } else {
        None
    };
    let mut part = BumpPartition { grid, mu, distance, cells_a: HashSet::new(), cells_b: HashSet::new(), period };
    let collect = |set: &[usize]| {
        let mut cells = HashSet::new();
        for &i in set {
            part.for_cells(&grid.point(i)[..d], |p, _| {
                cells.insert(p);
            });
        }
        cells
    };
    let ca = collect(a);
    let cb = collect(b);
    part.cells_a = ca;
    part.cells_b = cb;
    let mut f = ScalarField::zeros(grid);
    let mut w = ScalarField::zeros(grid);
    for i in 0..grid.len() {
        let (sa_, sb_) = part.sums(&grid.point(i)[..d]);
        f.values[i] = (sa_ - sb_).clamp(-1.0, 1.0);
        w.values[i] = (sa_ + sb_).min(1.0);
    }
    for &i in a {
        f.values[i] = 1.0;
        w.values[i] = 1.0;
    }
    for &i in b {
        f.values[i] = -1.0;
        w.values[i] = 1.0;
    }
    let f_norm02 = f.norms().sup02;
    Ok(PartitionField { partition: part, f, weight: w, f_norm02 })
}

/// Threshold bands of one component.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComponentSets {
    pub v_plus: Vec<usize>,
    pub v_minus: Vec<usize>,
    pub r_plus: Vec<usize>,
    pub r_minus: Vec<usize>,
    pub delta_v: f64,
    pub delta_r: f64,
    /// Erosion passes applied to keep the bands at least two spacings apart.
    pub eroded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSets {
    pub level: f64,
    pub comps: Vec<ComponentSets>,
}

impl ThresholdSets {
    pub fn is_empty(&self) -> bool {
        self.comps.iter().all(|c| c.v_plus.is_empty() && c.v_minus.is_empty() && c.r_plus.is_empty() && c.r_minus.is_empty())
    }
}

fn band(f: &ScalarField, lo: f64, hi: f64, exclude: &HashSet<usize>) -> Vec<usize> {
    (0..f.values.len()).filter(|&i| f.values[i] >= lo && f.values[i] <= hi && !exclude.contains(&i)).collect()
}

/// Drops band points that have a neighbour (Chebyshev) outside the band.
fn erode(grid: &Grid, set: &[usize]) -> Vec<usize> {
    let inside: HashSet<usize> = set.iter().copied().collect();
    let n = grid.points_per_axis() as i64;
    let d = grid.dim();
    set.iter()
        .copied()
        .filter(|&i| {
            let ijk = grid.unravel(i);
            for off in 0..3usize.pow(d as u32) {
                let mut r = off;
                let mut q = [0usize; 3];
                let mut outside = false;
                for a in 0..d {
                    let s = (r % 3) as i64 - 1;
                    r /= 3;
                    let mut c = ijk[a] as i64 + s;
                    if grid.is_torus() {
                        c = c.rem_euclid(n);
                    } else if c < 0 || c >= n {
                        outside = true;
                        break;
                    }
                    q[a] = c as usize;
                }
                if !outside && !inside.contains(&grid.ravel(q)) {
                    return false;
                }
            }
            true
        })
        .collect()
}

fn separate(grid: &Grid, plus: &mut Vec<usize>, minus: &mut Vec<usize>) -> (f64, usize) {
    let h = grid.spacing();
    let mut passes = 0;
    let mut dist = set_distance(grid, plus, minus);
    while dist < 2.0 * h && !(plus.is_empty() || minus.is_empty()) {
        *plus = erode(grid, plus);
        *minus = erode(grid, minus);
        passes += 1;
        dist = set_distance(grid, plus, minus);
    }
    (dist, passes)
}

/// Bands `[C/2, C]` and `[-C, -C/2]` of `v_prev` and of `r_prev` (the latter outside the `v` bands).
pub fn build_threshold_sets(v_prev: &VectorField, r_prev: &VectorField, level: f64) -> Result<ThresholdSets> {
    let sup = v_prev.sup();
    if sup > level {
        return Err(Error::LedgerViolation(format!("sup|v| = {sup:.6e} exceeds level {level:.6e}")));
    }
    let g = v_prev.grid;
    let mut comps = Vec::with_capacity(v_prev.dim());
    for (vc, rc) in v_prev.comps.iter().zip(&r_prev.comps) {
        let none = HashSet::new();
        let mut v_plus = band(vc, 0.5 * level, level, &none);
        let mut v_minus = band(vc, -level, -0.5 * level, &none);
        let (delta_v, ev) = separate(&g, &mut v_plus, &mut v_minus);
        let in_v: HashSet<usize> = v_plus.iter().chain(&v_minus).copied().collect();
        let mut r_plus = band(rc, 0.5 * level, level, &in_v);
        let mut r_minus = band(rc, -level, -0.5 * level, &in_v);
        let (delta_r, er) = separate(&g, &mut r_plus, &mut r_minus);
        comps.push(ComponentSets { v_plus, v_minus, r_plus, r_minus, delta_v, delta_r, eroded: ev + er });
    }
    Ok(ThresholdSets { level, comps })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    #[default]
    Constant,
    /// `sin^2(pi (tau - (l-1)))`
    SineSquared,
}

impl Modulation {
    pub fn factor(self, s: f64) -> f64 {
        match self {
            Modulation::Constant => 1.0,
            Modulation::SineSquared => (std::f64::consts::PI * s).sin().powi(2),
        }
    }
}

/// `phi = phi_v + phi_r`, time-constant over the step (before modulation).
#[derive(Clone, Debug)]
pub struct ConsumptionField {
    pub v_part: VectorField,
    pub r_part: VectorField,
    pub total: VectorField,
    pub sets: ThresholdSets,
    pub mu: Vec<f64>,
}

fn blended(plus: &[usize], minus: &[usize], data: &ScalarField, level: f64) -> Result<(ScalarField, f64)> {
    let p = build_partition(minus, plus, data.grid)?;
    let mut out = ScalarField::zeros(data.grid);
    for i in 0..out.values.len() {
        let fill = (-2.0 / level * data.values[i]).clamp(-1.0, 1.0);
        let w = p.weight.values[i];
        out.values[i] = w * p.f.values[i] + (1.0 - w) * fill;
    }
    for &i in plus {
        out.values[i] = -1.0;
    }
    for &i in minus {
        out.values[i] = 1.0;
    }
    Ok((out, p.partition.mu))
}

pub fn build_phi(v_prev: &VectorField, r_prev: &VectorField, level: f64) -> Result<ConsumptionField> {
    let sets = build_threshold_sets(v_prev, r_prev, level)?;
    let g = v_prev.grid;
    let mut vp = Vec::new();
    let mut rp = Vec::new();
    let mut mu = Vec::new();
    for (i, cs) in sets.comps.iter().enumerate() {
        let (a, m) = blended(&cs.v_plus, &cs.v_minus, &v_prev.comps[i], level)?;
        let (b, _) = blended(&cs.r_plus, &cs.r_minus, &r_prev.comps[i], level)?;
        vp.push(a);
        rp.push(b);
        mu.push(m);
    }
    let v_part = VectorField { grid: g, comps: vp };
    let r_part = VectorField { grid: g, comps: rp };
    let total = v_part.lincomb(1.0, &r_part, 1.0);
    Ok(ConsumptionField { v_part, r_part, total, sets, mu })
}

/// `(a . grad) b`
pub fn transport(a: &VectorField, b: &VectorField) -> VectorField {
    let comps = b
        .comps
        .iter()
        .map(|bc| {
            let mut out = ScalarField::zeros(b.grid);
            for (j, aj) in a.comps.iter().enumerate() {
                let d = bc.partial(j);
                for p in 0..out.values.len() {
                    out.values[p] += aj.values[p] * d.values[p];
                }
            }
            out
        })
        .collect();
    VectorField { grid: b.grid, comps }
}

/// Source of the auxiliary equation, frozen at the start of the step:
/// `rho [ -P(r,r) - (r.grad)v - (v.grad)r + 2 P(r,v) - P(v,v) ]` with
/// `P(a,b)_i = int d_i K(x-y) sum a_{k,j} b_{j,k}(y) dy`.
pub fn r_source(v_prev: &VectorField, r_prev: &VectorField, rho: f64, leray: &LerayOperator) -> Result<VectorField> {
    let jv = v_prev.jacobian();
    let jr = r_prev.jacobian();
    let srr = product_source(&jr, &jr);
    let srv = product_source(&jr, &jv);
    let svv = product_source(&jv, &jv);
    let mut s = svv.scaled(-1.0);
    s.axpy(2.0, &srv);
    s.axpy(-1.0, &srr);
    let pot = leray.grad_potential(&s)?;
    let t1 = transport(r_prev, v_prev);
    let t2 = transport(v_prev, r_prev);
    let comps = (0..v_prev.dim())
        .map(|i| {
            let mut c = pot.comps[i].clone();
            c.axpy(-1.0, &t1.comps[i]);
            c.axpy(-1.0, &t2.comps[i]);
            c.scaled(rho)
        })
        .collect();
    Ok(VectorField { grid: v_prev.grid, comps })
}

/// Parameters of the auxiliary solve for one step.
#[derive(Clone, Copy, Debug)]
pub struct RStep {
    pub rho: f64,
    pub nu: f64,
    pub modulation: Modulation,
    pub backend: Backend,
}

/// Linear problem for `r^l`: `r_t - rho nu Delta r - rho (r_prev.grad) r = S + phi`.
pub fn r_problem(r_prev: &VectorField, source: &VectorField, phi: &VectorField, p: &RStep) -> LinearProblem {
    let n = p.backend.substeps;
    let forcing = match p.modulation {
        Modulation::Constant => TimeData::Const(source.lincomb(1.0, phi, 1.0)),
        m => TimeData::Samples((0..=n).map(|k| source.lincomb(1.0, phi, m.factor(k as f64 / n as f64))).collect()),
    };
    LinearProblem {
        diffusion: p.rho * p.nu,
        drift: TimeData::Const(r_prev.clone()),
        drift_scale: -p.rho,
        source: forcing,
        initial: r_prev.clone(),
        horizon: 1.0,
    }
}

pub fn solve_r(r_prev: &VectorField, source: &VectorField, phi: &VectorField, p: &RStep) -> Result<Trajectory> {
    let prob = r_problem(r_prev, source, phi, p);
    let solver = ImexSolver::new(r_prev.grid, prob.diffusion, 1.0 / p.backend.substeps as f64);
    solve_imex(&solver, &prob, &p.backend)
}

/// Quadrature checks of consumption dominance along the step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionCheck {
    /// `max over D+ and tau of (int phi Gamma) / (tau - (l-1))`; must be `<= -3/4`.
    pub plus_ratio: f64,
    /// `min over D- and tau`; must be `>= 3/4`.
    pub minus_ratio: f64,
    /// `max over x and tau of |int S Gamma| / (tau - (l-1))`; must be `<= 1/2`.
    pub source_ratio: f64,
    pub plus_points: usize,
    pub minus_points: usize,
    pub passed: bool,
}

/// Solves the auxiliary operator with zero data and source `phi` (resp. `S`) and
/// compares the responses on the bands with the elapsed time.
pub fn consumption_check(
    r_prev: &VectorField,
    source: &VectorField,
    cf: &ConsumptionField,
    p: &RStep,
) -> Result<ConsumptionCheck> {
    let g = r_prev.grid;
    let zero = VectorField { grid: g, comps: vec![ScalarField::zeros(g); r_prev.dim()] };
    let mut prob = r_problem(r_prev, &zero, &cf.total, p);
    prob.initial = zero.clone();
    let solver = ImexSolver::new(g, prob.diffusion, 1.0 / p.backend.substeps as f64);
    let tphi = solve_imex(&solver, &prob, &p.backend)?;
    let mut sprob = r_problem(r_prev, source, &zero, p);
    sprob.initial = zero;
    let ts = solve_imex(&solver, &sprob, &p.backend)?;
    let mut out = ConsumptionCheck { plus_ratio: f64::NEG_INFINITY, minus_ratio: f64::INFINITY, ..Default::default() };
    for (k, (&t, (wp, ws))) in tphi.times.iter().zip(tphi.states.iter().zip(&ts.states)).enumerate() {
        if k == 0 {
            continue;
        }
        let elapsed = match p.modulation {
            Modulation::Constant => t,
            // integral of sin^2 over the elapsed part of the step
            Modulation::SineSquared => t / 2.0 - (2.0 * std::f64::consts::PI * t).sin() / (4.0 * std::f64::consts::PI),
        };
        for (i, cs) in cf.sets.comps.iter().enumerate() {
            let plus = cs.v_plus.iter().chain(&cs.r_plus);
            let minus = cs.v_minus.iter().chain(&cs.r_minus);
            for &j in plus {
                out.plus_ratio = out.plus_ratio.max(wp.comps[i].values[j] / elapsed);
            }
            for &j in minus {
                out.minus_ratio = out.minus_ratio.min(wp.comps[i].values[j] / elapsed);
            }
            out.source_ratio = out.source_ratio.max(ws.comps[i].sup() / t);
        }
    }
    for cs in &cf.sets.comps {
        out.plus_points += cs.v_plus.len() + cs.r_plus.len();
        out.minus_points += cs.v_minus.len() + cs.r_minus.len();
    }
    if out.plus_points == 0 {
        out.plus_ratio = -1.0;
    }
    if out.minus_points == 0 {
        out.minus_ratio = 1.0;
    }
    out.passed = out.plus_ratio <= -0.75 && out.minus_ratio >= 0.75 && out.source_ratio <= 0.5;
    Ok(out)
}

/// `2 + 2|h|^n_{1,2} + int (sum|dh|)^2 + int (sum|d^2 h|)(sum|dh|)` for time-independent data.
pub fn initial_constant(h: &VectorField) -> Result<f64> {
    let nr = norms(h)?;
    let g = h.grid;
    let d = g.dim();
    let mut first = vec![0.0; g.len()];
    let mut second = vec![0.0; g.len()];
    for c in &h.comps {
        for a in 0..d {
            let ca = c.partial(a);
            for (f, v) in first.iter_mut().zip(&ca.values) {
                *f += v.abs();
            }
            for b in 0..d {
                let cab = if a == b { c.partial2(a) } else { ca.partial(b) };
                for (s, v) in second.iter_mut().zip(&cab.values) {
                    *s += v.abs();
                }
            }
        }
    }
    let dv = g.cell_volume();
    let i1: f64 = first.iter().map(|f| f * f).sum::<f64>() * dv;
    let i2: f64 = first.iter().zip(&second).map(|(f, s)| f * s).sum::<f64>() * dv;
    Ok(2.0 + 2.0 * nr.sup12 + i1 + i2)
}

/// Sup and Sobolev summaries of a step trajectory, each state measured once.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrajectoryStats {
    /// `|w|^n_{1,2}`: per component `sup_tau |w_i|_{0,2} + sup |d_tau w_i|` (difference
    /// quotients), summed over components.
    pub norm12: f64,
    pub max_h2: f64,
    pub max_sup: f64,
}

pub fn trajectory_stats(tr: &Trajectory) -> TrajectoryStats {
    let dim = tr.states[0].dim();
    let mut space = vec![0.0f64; dim];
    let mut time = vec![0.0f64; dim];
    let mut out = TrajectoryStats::default();
    for (k, s) in tr.states.iter().enumerate() {
        let sup = s.sup();
        out.max_sup = out.max_sup.max(sup);
        if sup > 0.0 {
            let mut h2sq = 0.0;
            for (i, c) in s.comps.iter().enumerate() {
                let cn = c.norms();
                space[i] = space[i].max(cn.sup02);
                h2sq += cn.h2sq;
            }
            out.max_h2 = out.max_h2.max(h2sq.sqrt());
        }
        if k > 0 {
            let dt = tr.times[k] - tr.times[k - 1];
            for (i, c) in s.comps.iter().enumerate() {
                time[i] = time[i].max(c.max_abs_diff(&tr.states[k - 1].comps[i]) / dt);
            }
        }
    }
    out.norm12 = space.iter().zip(&time).map(|(a, b)| a + b).sum();
    out
}

pub fn trajectory_norm12(tr: &Trajectory) -> f64 {
    trajectory_stats(tr).norm12
}

/// One row of the bounds ledger.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub l: usize,
    pub rho: f64,
    /// Observed `|v^r|^n_{1,2}` over the step.
    pub c12_l: f64,
    pub h2_budget: f64,
    pub h2_vr: f64,
    pub h2_r: f64,
    pub sup_vr: f64,
    pub sup_v: f64,
    pub sup_r: f64,
    pub breaches: Vec<String>,
}

/// Constants of the bounds ledger and its per-step rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundsLedger {
    pub c_r: f64,
    pub c12: f64,
    pub c_star: f64,
    pub c_gamma: f64,
    pub rows: Vec<LedgerRow>,
}

impl BoundsLedger {
    pub fn new(c12: f64) -> Self {
        BoundsLedger { c_r: c12, c12, c_star: 1.0, c_gamma: 1.0, rows: Vec::new() }
    }

    pub fn h2_budget(&self, l: usize) -> f64 {
        self.c_star * self.c12 * (1.0 + l as f64)
    }

    /// Fills the breach list of `row` against the ledger bounds.
    pub fn judge(&self, row: &mut LedgerRow, dim: usize, controls: bool) {
        row.h2_budget = self.h2_budget(row.l);
        let mut b = Vec::new();
        if row.c12_l > self.c12 {
            b.push("c12".to_string());
        }
        if row.sup_v > (dim as f64 + 1.0) * self.c12 {
            b.push("sup_v".to_string());
        }
        if row.h2_vr > row.h2_budget {
            b.push("h2_vr".to_string());
        }
        if controls {
            if row.sup_r > self.c_r {
                b.push("sup_r".to_string());
            }
            if row.h2_r > row.h2_budget {
                b.push("h2_r".to_string());
            }
        }
        row.breaches = b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Topology;

    #[test]
    fn psi_translates_sum_to_one() {
        for k in 0..200 {
            let y = -3.0 + 0.0371 * k as f64;
            let s: f64 = (-6..=6).map(|m| psi(y - m as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(bump(1.0), 0.0);
        assert!((bump(0.0) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_consumption_example() {
        let g = Grid::new(1, 6.0, 96, Topology::FreeSpaceTruncated).unwrap();
        let a: Vec<usize> = (0..g.len()).filter(|&i| g.coord(i) <= -2.0).collect();
        let b: Vec<usize> = (0..g.len()).filter(|&i| g.coord(i) >= 2.0).collect();
        let p = build_partition(&a, &b, g).unwrap();
        let at = |x: f64| p.f.values[((x + 6.0) / g.spacing()).round() as usize];
        assert_eq!(at(-3.0), 1.0);
        assert_eq!(at(3.0), -1.0);
        assert!(at(0.0).abs() <= 1.0);
        assert!(p.f.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn empty_set_and_touching_sets() {
        let g = Grid::new(2, 3.0, 16, Topology::Torus).unwrap();
        let b = vec![g.ravel([3, 3, 0]), g.ravel([3, 4, 0])];
        let p = build_partition(&[], &b, g).unwrap();
        assert!(p.f.values.iter().all(|v| *v <= 0.0 && *v >= -1.0));
        assert_eq!(p.f.values[b[0]], -1.0);
        assert!(matches!(build_partition(&b, &b[..1], g), Err(Error::EmptyDistance(_))));
    }

    #[test]
    fn threshold_bands_of_a_gaussian() {
        let g = Grid::new(1, 4.0, 64, Topology::FreeSpaceTruncated).unwrap();
        let c = 2.0;
        let v = VectorField::from_fn(g, |x, _| c * (-x[0] * x[0]).exp());
        let s = build_threshold_sets(&v, &VectorField::zeros(g), c).unwrap();
        let want: Vec<usize> = (0..g.len()).filter(|&i| (-g.coord(i).powi(2)).exp() >= 0.5).collect();
        assert_eq!(s.comps[0].v_plus, want);
        assert!(s.comps[0].v_minus.is_empty());
        let too_big = v.scaled(1.5);
        assert!(matches!(build_threshold_sets(&too_big, &v, c), Err(Error::LedgerViolation(_))));
        assert!(build_threshold_sets(&VectorField::zeros(g), &VectorField::zeros(g), c).unwrap().is_empty());
    }

    #[test]
    fn r_bands_exclude_v_bands() {
        let g = Grid::new(1, 4.0, 64, Topology::FreeSpaceTruncated).unwrap();
        let v = VectorField::from_fn(g, |x, _| (-x[0] * x[0]).exp());
        let r = VectorField::from_fn(g, |x, _| (-(x[0] - 0.5).powi(2)).exp());
        let s = build_threshold_sets(&v, &r, 1.0).unwrap();
        let cs = &s.comps[0];
        assert!(!cs.r_plus.is_empty());
        assert!(cs.r_plus.iter().all(|i| !cs.v_plus.contains(i)));
    }

    #[test]
    fn phi_values_on_bands_and_fill() {
        let g = Grid::new(1, 6.0, 96, Topology::FreeSpaceTruncated).unwrap();
        let c = 4.0;
        let v = VectorField::from_fn(g, |x, _| c * (-(x[0] - 2.0).powi(2)).exp() - c * (-(x[0] + 2.0).powi(2)).exp());
        let cf = build_phi(&v, &VectorField::zeros(g), c).unwrap();
        let cs = &cf.sets.comps[0];
        assert!(!cs.v_plus.is_empty() && !cs.v_minus.is_empty());
        assert!(cs.v_plus.iter().all(|&i| cf.v_part.comps[0].values[i] == -1.0));
        assert!(cs.v_minus.iter().all(|&i| cf.v_part.comps[0].values[i] == 1.0));
        assert!(cf.v_part.comps[0].values.iter().all(|x| x.abs() <= 1.0));
        assert_eq!(cf.r_part.sup(), 0.0);
        // far from the bands the fill is -(2/C) v
        let i = g.len() - 3;
        let want = -2.0 / c * v.comps[0].values[i];
        assert!((cf.v_part.comps[0].values[i] - want).abs() < 1e-12);
        // and a point where v = C/4 with no bump nearby gets -1/2
        let flat = VectorField::from_fn(g, |_, _| c / 4.0);
        let cf = build_phi(&flat, &VectorField::zeros(g), c).unwrap();
        assert!(cf.v_part.comps[0].values.iter().all(|x| (x + 0.5).abs() < 1e-15));
    }

    #[test]
    fn zero_sources_give_zero_r() {
        let g = Grid::new(2, 3.0, 16, Topology::Torus).unwrap();
        let z = VectorField::zeros(g);
        let op = LerayOperator::new(g).unwrap();
        let s = r_source(&z, &z, 0.1, &op).unwrap();
        assert_eq!(s.sup(), 0.0);
        let p = RStep { rho: 0.1, nu: 0.1, modulation: Modulation::Constant, backend: Backend::imex(8) };
        assert_eq!(solve_r(&z, &s, &z, &p).unwrap().last().sup(), 0.0);
    }

    #[test]
    fn r_source_without_r_is_the_velocity_poisson_term() {
        let g = Grid::new(2, std::f64::consts::PI, 32, Topology::Torus).unwrap();
        let v = VectorField::from_fn(g, |x, c| if c == 0 { x[0].sin() * x[1].cos() } else { -x[0].cos() * x[1].sin() });
        let op = LerayOperator::new(g).unwrap();
        let s = r_source(&v, &VectorField::zeros(g), 0.2, &op).unwrap();
        let want = op.rhs(&v).unwrap().scaled(-0.2);
        assert!(s.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn consumption_dominates_for_small_steps() {
        let g = Grid::new(1, std::f64::consts::PI, 64, Topology::Torus).unwrap();
        let c = 2.0;
        let v = VectorField::from_fn(g, |x, _| c * x[0].sin());
        let z = VectorField::zeros(g);
        let cf = build_phi(&v, &z, c).unwrap();
        let p = RStep { rho: 1e-3, nu: 1.0, modulation: Modulation::Constant, backend: Backend::imex(8) };
        let chk = consumption_check(&z, &z, &cf, &p).unwrap();
        assert!(chk.passed, "{chk:?}");
        assert!(chk.plus_ratio < -0.99 && chk.minus_ratio > 0.99);
    }

    #[test]
    fn torus_partition_sums_to_one() {
        let g = Grid::new(2, 3.0, 16, Topology::Torus).unwrap();
        let p = build_partition(&[g.ravel([1, 1, 0])], &[g.ravel([9, 9, 0])], g).unwrap();
        for k in 0..50 {
            let x = [-3.0 + 0.12 * k as f64, 2.9 - 0.11 * k as f64];
            assert!((p.partition.partition_sum(&x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn taylor_green_initial_constant() {
        let g = Grid::new(2, std::f64::consts::PI, 64, Topology::Torus).unwrap();
        let v = VectorField::from_fn(g, |x, c| if c == 0 { x[0].sin() * x[1].cos() } else { -x[0].cos() * x[1].sin() });
        let c = initial_constant(&v).unwrap();
        // 2 + 2*14 + (8 pi^2 + 32) + second-derivative term
        assert!(c > 2.0 + 28.0 + 8.0 * std::f64::consts::PI.powi(2) + 30.0 && c < 400.0, "{c}");
    }
}
