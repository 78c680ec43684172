//! Uniform grids, sampled fields and the finite-difference calculus the ledgers run on.
//!
//! Points sit at `-L + i*h` with `h = 2L/N` on every axis. On a torus the
//! index wraps; on a truncated free-space box the outermost samples use
//! one-sided second-order stencils. Storage is row-major with the last axis
//! fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    FreeSpaceTruncated,
    Torus,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::FreeSpaceTruncated => "free_space_truncated",
            Topology::Torus => "torus",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: f64,
    n: usize,
    topology: Topology,
}

impl Grid {
    /// `extent` is the half-width L; the box (or period cell) is `[-L, L)^dim`.
    pub fn new(dim: usize, extent: f64, points_per_axis: usize, topology: Topology) -> Result<Grid> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim {dim} not in 1..=3")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
        }
        if points_per_axis < 8 {
            return Err(Error::InvalidGrid(format!("{points_per_axis} points per axis, need >= 8")));
        }
        if points_per_axis % 2 != 0 {
            return Err(Error::InvalidGrid(format!("{points_per_axis} points per axis is odd")));
        }
        Ok(Grid { dim, extent, n: points_per_axis, topology })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn extent(&self) -> f64 {
        self.extent
    }
    pub fn points_per_axis(&self) -> usize {
        self.n
    }
    pub fn topology(&self) -> Topology {
        self.topology
    }
    pub fn is_torus(&self) -> bool {
        self.topology == Topology::Torus
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.spacing()
    }
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut r = idx;
        for a in (0..self.dim).rev() {
            out[a] = r % self.n;
            r /= self.n;
        }
        out
    }

    pub fn ravel(&self, ijk: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.n + ijk[a])
    }

    /// Physical coordinates of sample `idx` (unused axes are zero).
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unravel(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coord(ijk[a]);
        }
        x
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.dim == other.dim && self.n == other.n && self.topology == other.topology && self.extent == other.extent
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for {} points", values.len(), grid.len())));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        ScalarField { grid, values }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("sample {i}"))),
            None => Ok(()),
        }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        ScalarField { grid: self.grid, values: self.values.iter().map(|v| a * v).collect() }
    }

    /// `a*self + b*other`
    pub fn lincomb(&self, a: f64, other: &ScalarField, b: f64) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        ScalarField { grid: self.grid, values }
    }

    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Multilinear interpolation; periodic on a torus, zero outside a truncated box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = self.grid;
        let d = g.dim();
        let n = g.points_per_axis();
        let h = g.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..d {
            let u = (x[a] + g.extent()) / h;
            let fl = u.floor();
            frac[a] = u - fl;
            let i = fl as i64;
            if g.is_torus() {
                base[a] = i.rem_euclid(n as i64) as usize;
            } else if i == (n - 1) as i64 && frac[a] == 0.0 {
                // the last sample itself
                base[a] = n - 2;
                frac[a] = 1.0;
            } else if i < 0 || i >= (n - 1) as i64 {
                return 0.0;
            } else {
                base[a] = i as usize;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut ijk = [0usize; 3];
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                ijk[a] = if g.is_torus() { (base[a] + bit) % n } else { base[a] + bit };
            }
            if w != 0.0 {
                acc += w * self.values[g.ravel(ijk)];
            }
        }
        acc
    }

    /// Applies a three-point stencil along `axis` row by row; `edge` gets the rows
    /// `[r0, r1, r2, r3]` from one end of a truncated axis (nearest first) and returns that edge value.
    fn axis_stencil(&self, axis: usize, mid: impl Fn(f64, f64, f64) -> f64, edge: impl Fn([f64; 4], f64) -> f64) -> ScalarField {
        let g = self.grid;
        let n = g.points_per_axis();
        let s = g.stride(axis);
        let f = &self.values;
        let mut out = vec![0.0; f.len()];
        let torus = g.is_torus();
        for b0 in (0..f.len()).step_by(n * s) {
            for i in 0..n {
                let o = b0 + i * s;
                if !torus && (i == 0 || i == n - 1) {
                    // sign flips the odd stencils at the right edge
                    let (dir, sign): (isize, f64) = if i == 0 { (1, 1.0) } else { (-1, -1.0) };
                    for j in 0..s {
                        let row = |k: isize| f[(o as isize + dir * k * s as isize) as usize + j];
                        out[o + j] = edge([row(0), row(1), row(2), row(3)], sign);
                    }
                    continue;
                }
                let p = b0 + ((i + 1) % n) * s;
                let m = b0 + ((i + n - 1) % n) * s;
                for j in 0..s {
                    out[o + j] = mid(f[m + j], f[o + j], f[p + j]);
                }
            }
        }
        ScalarField { grid: g, values: out }
    }

    /// First derivative along `axis`, second-order central (one-sided at a truncated edge).
    pub fn partial(&self, axis: usize) -> ScalarField {
        let inv = 1.0 / (2.0 * self.grid.spacing());
        self.axis_stencil(axis, |m, _, p| (p - m) * inv, |r, sign| sign * (-3.0 * r[0] + 4.0 * r[1] - r[2]) * inv)
    }

    /// Second derivative along `axis` with the three-point stencil.
    pub fn partial2(&self, axis: usize) -> ScalarField {
        let h = self.grid.spacing();
        let inv = 1.0 / (h * h);
        self.axis_stencil(axis, |m, c, p| (p - 2.0 * c + m) * inv, |r, _| (2.0 * r[0] - 5.0 * r[1] + 4.0 * r[2] - r[3]) * inv)
    }

    /// Mixed or pure second derivative `d^2/dx_a dx_b`.
    pub fn partial_ab(&self, a: usize, b: usize) -> ScalarField {
        if a == b { self.partial2(a) } else { self.partial(a).partial(b) }
    }

    pub fn laplacian(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        for a in 0..self.grid.dim() {
            out.axpy(1.0, &self.partial2(a));
        }
        out
    }

    pub fn gradient(&self) -> VectorField {
        VectorField { grid: self.grid, comps: (0..self.grid.dim()).map(|a| self.partial(a)).collect() }
    }

    /// Spatial sup norms `|w|_0`, `|w|_{0,1}`, `|w|_{0,2}` and the Sobolev norms of one scalar.
    pub fn norms(&self) -> ComponentNorms {
        let d = self.grid.dim();
        let dv = self.grid.cell_volume();
        let sq = |f: &ScalarField| f.values.iter().map(|v| v * v).sum::<f64>() * dv;
        let sup0 = self.sup();
        let mut first_sup = 0.0;
        let mut first_sq = 0.0;
        let mut second_sup = 0.0;
        let mut second_sq = 0.0;
        let firsts: Vec<ScalarField> = (0..d).map(|a| self.partial(a)).collect();
        for (a, fa) in firsts.iter().enumerate() {
            first_sup += fa.sup();
            first_sq += sq(fa);
            for b in 0..d {
                let fab = if a == b { self.partial2(a) } else { fa.partial(b) };
                second_sup += fab.sup();
                second_sq += sq(&fab);
            }
        }
        let l2sq = sq(self);
        ComponentNorms {
            sup0,
            sup01: sup0 + first_sup,
            sup02: sup0 + first_sup + second_sup,
            l2sq,
            h1sq: l2sq + first_sq,
            h2sq: l2sq + first_sq + second_sq,
        }
    }
}

/// Per-component building blocks; squared Sobolev norms so components can be summed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ComponentNorms {
    pub sup0: f64,
    pub sup01: f64,
    pub sup02: f64,
    pub l2sq: f64,
    pub h1sq: f64,
    pub h2sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField { grid, comps: vec![ScalarField::zeros(grid); grid.dim()] }
    }

    pub fn from_comps(comps: Vec<ScalarField>) -> Result<Self> {
        let grid = comps.first().ok_or_else(|| Error::ShapeMismatch("no components".into()))?.grid;
        if comps.len() != grid.dim() || comps.iter().any(|c| !c.grid.same_shape(&grid)) {
            return Err(Error::ShapeMismatch("components must share a grid and match its dimension".into()));
        }
        Ok(VectorField { grid, comps })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64], usize) -> f64) -> Self {
        let comps = (0..grid.dim()).map(|c| ScalarField::from_fn(grid, |x| f(x, c))).collect();
        VectorField { grid, comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn check_finite(&self) -> Result<()> {
        self.comps.iter().try_for_each(|c| c.check_finite())
    }

    pub fn scaled(&self, a: f64) -> Self {
        VectorField { grid: self.grid, comps: self.comps.iter().map(|c| c.scaled(a)).collect() }
    }

    pub fn lincomb(&self, a: f64, other: &VectorField, b: f64) -> Self {
        let comps = self.comps.iter().zip(&other.comps).map(|(x, y)| x.lincomb(a, y, b)).collect();
        VectorField { grid: self.grid, comps }
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.comps.iter().zip(&other.comps).fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    /// Largest component sup norm.
    pub fn sup(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.sup()))
    }

    /// `J[k][j] = d v_k / d x_j`.
    pub fn jacobian(&self) -> Vec<Vec<ScalarField>> {
        self.comps.iter().map(|c| (0..self.grid.dim()).map(|j| c.partial(j)).collect()).collect()
    }

    /// The pressure source `sum_{j,k} v_{k,j} v_{j,k}`.
    pub fn gradient_product_source(&self) -> ScalarField {
        let jac = self.jacobian();
        product_source(&jac, &jac)
    }

    /// `sum_{j,k} |v_{k,j} v_{j,k}|` integrated over the grid.
    pub fn integral_magnitude(&self) -> f64 {
        let jac = self.jacobian();
        let d = self.dim();
        let mut acc = 0.0;
        for p in 0..self.grid.len() {
            for j in 0..d {
                for k in 0..d {
                    acc += (jac[k][j].values[p] * jac[j][k].values[p]).abs();
                }
            }
        }
        acc * self.grid.cell_volume()
    }
}

/// `sum_{j,k} a_{k,j} b_{j,k}` from two precomputed Jacobians.
pub fn product_source(a: &[Vec<ScalarField>], b: &[Vec<ScalarField>]) -> ScalarField {
    let grid = a[0][0].grid;
    let d = a.len();
    let mut out = vec![0.0; grid.len()];
    for j in 0..d {
        for k in 0..d {
            let x = &a[k][j].values;
            let y = &b[j][k].values;
            for p in 0..out.len() {
                out[p] += x[p] * y[p];
            }
        }
    }
    ScalarField { grid, values: out }
}

pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    if v.grid.dim() < 2 {
        return Err(Error::InvalidGrid("divergence needs dim >= 2".into()));
    }
    if v.dim() != v.grid.dim() {
        return Err(Error::ShapeMismatch("component count differs from grid dimension".into()));
    }
    let mut out = ScalarField::zeros(v.grid);
    for (a, c) in v.comps.iter().enumerate() {
        out.axpy(1.0, &c.partial(a));
    }
    Ok(out)
}

/// Norms of a vector field. Sup norms add the component norms (the `|.|^n`
/// convention of the ledgers); `l2`, `h1`, `h2` are the usual vector Sobolev
/// norms. `sup12` holds the spatial `|.|_{0,2}` part; the scheme adds the
/// time-derivative part for trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub sup0: f64,
    pub sup01: f64,
    pub sup12: f64,
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub integral_magnitude: f64,
}

pub fn norms(v: &VectorField) -> Result<NormReport> {
    v.check_finite()?;
    let mut r = NormReport::default();
    let (mut l2sq, mut h1sq, mut h2sq) = (0.0, 0.0, 0.0);
    for c in &v.comps {
        let cn = c.norms();
        r.sup0 += cn.sup0;
        r.sup01 += cn.sup01;
        r.sup12 += cn.sup02;
        l2sq += cn.l2sq;
        h1sq += cn.h1sq;
        h2sq += cn.h2sq;
    }
    r.l2 = l2sq.sqrt();
    r.h1 = h1sq.sqrt();
    r.h2 = h2sq.sqrt();
    r.integral_magnitude = if v.dim() == v.grid.dim() { v.integral_magnitude() } else { 0.0 };
    debug_assert!(r.sup0 <= r.sup01 && r.sup01 <= r.sup12);
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayReport {
    pub passes: bool,
    /// `max |d^a v(x)| (1+|x|)^k` over all samples and `|a| <= 2`.
    pub worst_constant: f64,
    pub inner_max: f64,
    pub outer_max: f64,
}

/// Polynomial decay check: the weighted derivatives must not grow toward the
/// edge of the box (outer shell `|x|_inf >= 3L/4` versus inner core `|x|_inf <= L/2`).
pub fn decay_check(v: &VectorField, k: u32) -> Result<DecayReport> {
    if v.grid.is_torus() {
        return Err(Error::TopologyMismatch("decay check needs a free-space grid".into()));
    }
    if k > 5 {
        return Err(Error::InvalidGrid(format!("decay order {k} > 5")));
    }
    let g = v.grid;
    let d = g.dim();
    let l = g.extent();
    let mut fields: Vec<ScalarField> = Vec::new();
    for c in &v.comps {
        fields.push(c.clone());
        for a in 0..d {
            let ca = c.partial(a);
            for b in a..d {
                fields.push(if a == b { c.partial2(a) } else { ca.partial(b) });
            }
            fields.push(ca);
        }
    }
    let (mut worst, mut inner, mut outer) = (0.0f64, 0.0f64, 0.0f64);
    for p in 0..g.len() {
        let x = g.point(p);
        let r = x[..d].iter().map(|t| t * t).sum::<f64>().sqrt();
        let rinf = x[..d].iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let w = (1.0 + r).powi(k as i32);
        let m = fields.iter().fold(0.0f64, |m, f| m.max(f.values[p].abs())) * w;
        worst = worst.max(m);
        if rinf <= 0.5 * l {
            inner = inner.max(m);
        }
        if rinf >= 0.75 * l {
            outer = outer.max(m);
        }
    }
    Ok(DecayReport { passes: outer <= inner, worst_constant: worst, inner_max: inner, outer_max: outer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_construction() {
        let g = Grid::new(1, PI, 16, Topology::Torus).unwrap();
        assert!((g.spacing() - 2.0 * PI / 16.0).abs() < 1e-15);
        let g3 = Grid::new(3, 8.0, 32, Topology::FreeSpaceTruncated).unwrap();
        assert_eq!(g3.len(), 32 * 32 * 32);
        assert!(matches!(Grid::new(4, 1.0, 16, Topology::Torus), Err(Error::InvalidGrid(_))));
        assert!(Grid::new(2, 1.0, 7, Topology::Torus).is_err());
        assert!(Grid::new(2, 1.0, 9, Topology::Torus).is_err());
    }

    #[test]
    fn ravel_roundtrip() {
        let g = Grid::new(3, 1.0, 8, Topology::Torus).unwrap();
        for idx in [0, 1, 7, 8, 63, 64, 511] {
            assert_eq!(g.ravel(g.unravel(idx)), idx);
        }
    }

    #[test]
    fn linear_field_divergence_is_one() {
        let g = Grid::new(3, 4.0, 16, Topology::FreeSpaceTruncated).unwrap();
        let v = VectorField::from_fn(g, |x, c| if c == 0 { x[0] } else { 0.0 });
        let div = divergence(&v).unwrap();
        for p in 0..g.len() {
            assert!((div.values[p] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stream_function_divergence_second_order() {
        let err = |n: usize| {
            let g = Grid::new(2, PI, n, Topology::Torus).unwrap();
            // unequal wavenumbers so the discrete divergence is not identically zero
            let v = VectorField::from_fn(g, |x, c| {
                if c == 0 { 2.0 * x[0].sin() * (2.0 * x[1]).cos() } else { -x[0].cos() * (2.0 * x[1]).sin() }
            });
            divergence(&v).unwrap().sup()
        };
        let (e1, e2) = (err(32), err(64));
        assert!((e1 / e2).log2() > 1.9);
    }

    #[test]
    fn interpolation_reproduces_linear_data() {
        let g = Grid::new(2, 2.0, 16, Topology::FreeSpaceTruncated).unwrap();
        let f = ScalarField::from_fn(g, |x| 1.0 + 2.0 * x[0] - x[1]);
        assert!((f.interpolate(&[0.13, -0.71]) - (1.0 + 0.26 + 0.71)).abs() < 1e-12);
        assert_eq!(f.interpolate(&[5.0, 0.0]), 0.0);
        let gt = Grid::new(1, 1.0, 8, Topology::Torus).unwrap();
        let f = ScalarField::from_fn(gt, |x| x[0]);
        assert!((f.interpolate(&[-1.0 + 2.0 * 3.0]) - f.values[0]).abs() < 1e-12);
    }

    #[test]
    fn sine_l2() {
        let g = Grid::new(1, PI, 256, Topology::Torus).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0].sin());
        assert!((f.l2() - PI.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn decay_examples() {
        let g = Grid::new(2, 8.0, 32, Topology::FreeSpaceTruncated).unwrap();
        let bump = VectorField::from_fn(g, |x, _| (-(x[0] * x[0] + x[1] * x[1])).exp());
        assert!(decay_check(&bump, 5).unwrap().passes);
        let c = VectorField::from_fn(g, |_, _| 1.0);
        assert!(!decay_check(&c, 1).unwrap().passes);
        let z = VectorField::zeros(g);
        let r = decay_check(&z, 3).unwrap();
        assert!(r.passes && r.worst_constant == 0.0);
        let gt = Grid::new(2, 8.0, 32, Topology::Torus).unwrap();
        assert!(matches!(decay_check(&VectorField::zeros(gt), 2), Err(Error::TopologyMismatch(_))));
    }
}
