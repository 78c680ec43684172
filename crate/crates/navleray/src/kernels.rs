//! Poisson and Gaussian kernels and the two convolution engines built on them.
//!
//! A kernel is stored as samples on the displacement lattice of a grid: `N`
//! offsets per axis on a torus (wrapping), `2N` on a truncated box so that the
//! fast engine is an exact zero-padded linear convolution. Both engines read
//! the same samples, so they agree up to rounding.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{FftNd, signed_index};
use crate::grid::{Grid, ScalarField, VectorField};

/// Area of the unit sphere in `R^n`.
pub fn omega(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(n as f64 / 2.0) / statrs::function::gamma::gamma(n as f64 / 2.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonKernelSpec {
    pub dim: usize,
    pub omega_n: f64,
}

impl PoissonKernelSpec {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidGrid(format!("Poisson kernel needs dim >= 2, got {dim}")));
        }
        Ok(PoissonKernelSpec { dim, omega_n: omega(dim) })
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// `K_2 = ln|x| / 2pi`, `K_n = -1 / ((n-2) omega_n |x|^{n-2})`, so `Delta K = delta`.
pub fn poisson_kernel(n: usize, x: &[f64]) -> Result<f64> {
    let spec = PoissonKernelSpec::new(n)?;
    let r = norm(&x[..n]);
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(if n == 2 { r.ln() / (2.0 * PI) } else { -1.0 / ((n as f64 - 2.0) * spec.omega_n * r.powi(n as i32 - 2)) })
}

/// `dK/dx_l = x_l / (omega_n |x|^n)`; the same formula covers the logarithmic case.
pub fn poisson_kernel_grad(n: usize, x: &[f64]) -> Result<Vec<f64>> {
    let spec = PoissonKernelSpec::new(n)?;
    let r = norm(&x[..n]);
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    let s = 1.0 / (spec.omega_n * r.powi(n as i32));
    Ok(x[..n].iter().map(|t| t * s).collect())
}

/// Mean of `K_n` over the cube of side `h` centred at the origin.
pub fn poisson_origin_average(n: usize, h: f64) -> f64 {
    match n {
        // mean of ln|u| over [-1/2,1/2]^2 is (pi/2 - 3 - ln 2)/2
        2 => (h.ln() + (PI / 2.0 - 3.0 - 2f64.ln()) / 2.0) / (2.0 * PI),
        // mean of 1/|u| over [-1/2,1/2]^3 is 3 ln(2+sqrt3) - pi/2
        3 => -(3.0 * (2.0 + 3f64.sqrt()).ln() - PI / 2.0) / (4.0 * PI * h),
        _ => 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianKernelSpec {
    pub diffusion: f64,
    pub elapsed: f64,
}

impl GaussianKernelSpec {
    pub fn variance(&self) -> f64 {
        2.0 * self.diffusion * self.elapsed
    }
}

/// `(4 pi d t)^{-n/2} exp(-|x-y|^2 / (4 d t))`
pub fn heat_kernel(spec: GaussianKernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if spec.elapsed == 0.0 {
        return Err(Error::ZeroTime);
    }
    let n = x.len();
    let dt = spec.diffusion * spec.elapsed;
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((4.0 * PI * dt).powf(-(n as f64) / 2.0) * (-r2 / (4.0 * dt)).exp())
}

/// Gradient of the heat kernel in `x`.
pub fn heat_kernel_grad(spec: GaussianKernelSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let g = heat_kernel(spec, x, y)?;
    let dt = spec.diffusion * spec.elapsed;
    Ok(x.iter().zip(y).map(|(a, b)| -g * (a - b) / (2.0 * dt)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Direct,
    Fast,
}

/// Kernel samples on the displacement lattice of `grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledKernel {
    pub grid: Grid,
    m: usize,
    pub values: Vec<f64>,
}

impl SampledKernel {
    fn lattice(grid: Grid) -> usize {
        if grid.is_torus() { grid.points_per_axis() } else { 2 * grid.points_per_axis() }
    }

    pub fn axis_len(&self) -> usize {
        self.m
    }

    /// Samples `f(displacement)`; on a torus the displacement is the nearest image.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let m = Self::lattice(grid);
        let d = grid.dim();
        let h = grid.spacing();
        let len = m.pow(d as u32);
        let mut values = Vec::with_capacity(len);
        let mut x = [0.0; 3];
        for idx in 0..len {
            let mut r = idx;
            for a in (0..d).rev() {
                x[a] = signed_index(r % m, m) as f64 * h;
                r /= m;
            }
            values.push(f(&x[..d]));
        }
        SampledKernel { grid, m, values }
    }

    /// Torus kernel whose Fourier coefficients are `symbol(k)`, with `k` the physical wavenumber.
    pub fn from_symbol(grid: Grid, symbol: impl Fn(&[f64], &[i64]) -> Complex64) -> Result<Self> {
        if !grid.is_torus() {
            return Err(Error::TopologyMismatch("spectral kernels live on the torus".into()));
        }
        let fft = FftNd::new(grid.dim(), grid.points_per_axis());
        let mut hat = torus_symbol(&grid, symbol);
        fft.inverse(&mut hat);
        let s = 1.0 / grid.cell_volume();
        Ok(SampledKernel { grid, m: grid.points_per_axis(), values: hat.iter().map(|z| z.re * s).collect() })
    }

    /// Point samples of the heat kernel normalised to unit discrete mass.
    pub fn heat(grid: Grid, spec: GaussianKernelSpec) -> Result<Self> {
        if spec.elapsed == 0.0 {
            return Err(Error::ZeroTime);
        }
        let zero = [0.0; 3];
        let d = grid.dim();
        let mut k = Self::from_fn(grid, |x| heat_kernel(spec, x, &zero[..d]).unwrap_or(0.0));
        let mass: f64 = k.values.iter().sum::<f64>() * grid.cell_volume();
        if mass > 0.0 {
            for v in &mut k.values {
                *v /= mass;
            }
        } else {
            // unresolved: collapse to the discrete identity
            k.values.iter_mut().for_each(|v| *v = 0.0);
            k.values[0] = 1.0 / grid.cell_volume();
        }
        Ok(k)
    }

    /// `K_n` on the grid: the periodic Green's function on a torus, point samples with a
    /// cell-averaged origin on a truncated box.
    pub fn poisson(grid: Grid) -> Result<Self> {
        let n = PoissonKernelSpec::new(grid.dim())?.dim;
        if grid.is_torus() {
            return Self::from_symbol(grid, |k, _| {
                let k2: f64 = k.iter().map(|t| t * t).sum();
                if k2 == 0.0 { Complex64::default() } else { Complex64::new(-1.0 / k2, 0.0) }
            });
        }
        let h = grid.spacing();
        Ok(Self::from_fn(grid, |x| poisson_kernel(n, x).unwrap_or_else(|_| poisson_origin_average(n, h))))
    }

    /// `dK_n/dx_axis`; the origin sample is zero (principal value).
    pub fn poisson_grad(grid: Grid, axis: usize) -> Result<Self> {
        let n = PoissonKernelSpec::new(grid.dim())?.dim;
        if grid.is_torus() {
            let half = grid.points_per_axis() as i64 / 2;
            return Self::from_symbol(grid, |k, m| {
                let k2: f64 = k.iter().map(|t| t * t).sum();
                if k2 == 0.0 || m[axis] == -half { Complex64::default() } else { Complex64::new(0.0, -k[axis] / k2) }
            });
        }
        Ok(Self::from_fn(grid, |x| poisson_kernel_grad(n, x).map(|g| g[axis]).unwrap_or(0.0)))
    }

    fn offset_index(&self, x: [usize; 3], y: [usize; 3]) -> usize {
        let m = self.m;
        (0..self.grid.dim()).fold(0, |acc, a| acc * m + (x[a] + m - y[a]) % m)
    }

    pub fn spectrum(&self) -> KernelSpectrum {
        KernelSpectrum::new(self)
    }
}

fn torus_symbol(grid: &Grid, symbol: impl Fn(&[f64], &[i64]) -> Complex64) -> Vec<Complex64> {
    let n = grid.points_per_axis();
    let d = grid.dim();
    let dk = PI / grid.extent();
    let mut out = Vec::with_capacity(grid.len());
    let mut k = [0.0; 3];
    let mut mi = [0i64; 3];
    for idx in 0..grid.len() {
        let mut r = idx;
        for a in (0..d).rev() {
            mi[a] = signed_index(r % n, n);
            k[a] = mi[a] as f64 * dk;
            r /= n;
        }
        out.push(symbol(&k[..d], &mi[..d]));
    }
    out
}

/// `h^n * sum_y K(x-y) f(y)` by explicit summation.
pub fn convolve_direct(field: &ScalarField, kernel: &SampledKernel) -> Result<ScalarField> {
    check_pair(field, kernel)?;
    let g = field.grid;
    let idx: Vec<[usize; 3]> = (0..g.len()).map(|i| g.unravel(i)).collect();
    let dv = g.cell_volume();
    let values = idx
        .iter()
        .map(|&x| {
            let s: f64 = idx.iter().zip(&field.values).map(|(&y, f)| kernel.values[kernel.offset_index(x, y)] * f).sum();
            s * dv
        })
        .collect();
    Ok(ScalarField { grid: g, values })
}

fn check_pair(field: &ScalarField, kernel: &SampledKernel) -> Result<()> {
    if !field.grid.same_shape(&kernel.grid) {
        return Err(Error::ShapeMismatch("kernel sampled on a different grid".into()));
    }
    Ok(())
}

/// Cached transform of a sampled kernel (already multiplied by the cell volume).
#[derive(Clone, Debug)]
pub struct KernelSpectrum {
    grid: Grid,
    fft: Arc<FftNd>,
    hat: Vec<Complex64>,
}

impl KernelSpectrum {
    pub fn new(kernel: &SampledKernel) -> Self {
        let fft = Arc::new(FftNd::new(kernel.grid.dim(), kernel.m));
        Self::with_plan(kernel, fft)
    }

    fn with_plan(kernel: &SampledKernel, fft: Arc<FftNd>) -> Self {
        let dv = kernel.grid.cell_volume();
        let mut hat: Vec<Complex64> = kernel.values.iter().map(|v| Complex64::new(v * dv, 0.0)).collect();
        fft.forward(&mut hat);
        KernelSpectrum { grid: kernel.grid, fft, hat }
    }

    pub fn apply(&self, field: &ScalarField) -> Result<ScalarField> {
        if !field.grid.same_shape(&self.grid) {
            return Err(Error::ShapeMismatch("kernel sampled on a different grid".into()));
        }
        let mut buf = pad(&self.fft, field);
        self.fft.forward(&mut buf);
        for (z, k) in buf.iter_mut().zip(&self.hat) {
            *z *= k;
        }
        self.fft.inverse(&mut buf);
        Ok(crop(&self.fft, &self.grid, &buf, |z| z.re))
    }
}

fn pad(fft: &FftNd, field: &ScalarField) -> Vec<Complex64> {
    let g = field.grid;
    let m = fft.axis_len();
    let mut buf = vec![Complex64::default(); fft.len()];
    for (i, v) in field.values.iter().enumerate() {
        let ijk = g.unravel(i);
        let j = (0..g.dim()).fold(0, |acc, a| acc * m + ijk[a]);
        buf[j] = Complex64::new(*v, 0.0);
    }
    buf
}

fn crop(fft: &FftNd, g: &Grid, buf: &[Complex64], part: impl Fn(&Complex64) -> f64) -> ScalarField {
    let m = fft.axis_len();
    let values = (0..g.len())
        .map(|i| {
            let ijk = g.unravel(i);
            part(&buf[(0..g.dim()).fold(0, |acc, a| acc * m + ijk[a])])
        })
        .collect();
    ScalarField { grid: *g, values }
}

pub fn convolve(field: &ScalarField, kernel: &SampledKernel, engine: Engine) -> Result<ScalarField> {
    match engine {
        Engine::Direct => convolve_direct(field, kernel),
        Engine::Fast => {
            check_pair(field, kernel)?;
            kernel.spectrum().apply(field)
        }
    }
}

/// Runs both engines and fails if they disagree by more than `tol` (relative to the output scale).
pub fn convolve_checked(field: &ScalarField, kernel: &SampledKernel, tol: f64) -> Result<ScalarField> {
    let a = convolve(field, kernel, Engine::Direct)?;
    let b = convolve(field, kernel, Engine::Fast)?;
    let diff = a.max_abs_diff(&b) / a.sup().max(1.0);
    if diff > tol {
        return Err(Error::EngineMismatch { diff, tol });
    }
    Ok(b)
}

/// Pressure and Leray right-hand side on one grid with cached kernel transforms.
#[derive(Clone, Debug)]
pub struct LerayOperator {
    grid: Grid,
    fft: Arc<FftNd>,
    k: Vec<Complex64>,
    dk: Vec<Vec<Complex64>>,
}

impl LerayOperator {
    pub fn new(grid: Grid) -> Result<Self> {
        let d = PoissonKernelSpec::new(grid.dim())?.dim;
        let m = if grid.is_torus() { grid.points_per_axis() } else { 2 * grid.points_per_axis() };
        let fft = Arc::new(FftNd::new(d, m));
        let k = KernelSpectrum::with_plan(&SampledKernel::poisson(grid)?, fft.clone()).hat;
        let dk = (0..d)
            .map(|a| Ok(KernelSpectrum::with_plan(&SampledKernel::poisson_grad(grid, a)?, fft.clone()).hat))
            .collect::<Result<Vec<_>>>()?;
        Ok(LerayOperator { grid, fft, k, dk })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `int K(x-y) s(y) dy`
    pub fn potential(&self, source: &ScalarField) -> Result<ScalarField> {
        self.check(source)?;
        let mut buf = pad(&self.fft, source);
        self.fft.forward(&mut buf);
        for (z, k) in buf.iter_mut().zip(&self.k) {
            *z *= k;
        }
        self.fft.inverse(&mut buf);
        Ok(crop(&self.fft, &self.grid, &buf, |z| z.re))
    }

    /// `int grad K(x-y) s(y) dy`, two real outputs per inverse transform.
    pub fn grad_potential(&self, source: &ScalarField) -> Result<VectorField> {
        self.check(source)?;
        let mut base = pad(&self.fft, source);
        self.fft.forward(&mut base);
        let d = self.grid.dim();
        let mut comps = Vec::with_capacity(d);
        let mut a = 0;
        while a < d {
            let pair = a + 1 < d;
            let mut buf: Vec<Complex64> = if pair {
                let i = Complex64::new(0.0, 1.0);
                base.iter().zip(&self.dk[a]).zip(&self.dk[a + 1]).map(|((z, p), q)| z * (p + i * q)).collect()
            } else {
                base.iter().zip(&self.dk[a]).map(|(z, p)| z * p).collect()
            };
            self.fft.inverse(&mut buf);
            comps.push(crop(&self.fft, &self.grid, &buf, |z| z.re));
            if pair {
                comps.push(crop(&self.fft, &self.grid, &buf, |z| z.im));
            }
            a += if pair { 2 } else { 1 };
        }
        Ok(VectorField { grid: self.grid, comps })
    }

    /// `p = -K * S` with mean pinned to zero.
    pub fn pressure(&self, v: &VectorField) -> Result<ScalarField> {
        let mut p = self.potential(&v.gradient_product_source())?.scaled(-1.0);
        let mean = p.values.iter().sum::<f64>() / p.values.len() as f64;
        p.values.iter_mut().for_each(|x| *x -= mean);
        Ok(p)
    }

    /// `int grad K(x-y) sum_{j,k} v_{k,j} v_{j,k}(y) dy`
    pub fn rhs(&self, v: &VectorField) -> Result<VectorField> {
        self.grad_potential(&v.gradient_product_source())
    }

    fn check(&self, s: &ScalarField) -> Result<()> {
        if !s.grid.same_shape(&self.grid) {
            return Err(Error::ShapeMismatch("field not on the operator grid".into()));
        }
        Ok(())
    }
}

pub fn leray_pressure(v: &VectorField) -> Result<ScalarField> {
    LerayOperator::new(v.grid)?.pressure(v)
}

pub fn leray_rhs(v: &VectorField) -> Result<VectorField> {
    LerayOperator::new(v.grid)?.rhs(v)
}

/// `sup |S - Delta(K * S)|` with `S = sum v_{k,j} v_{j,k}`. On a torus the periodic
/// Green's function inverts the Laplacian on mean-free data, so the mean of `S` is removed.
pub fn pressure_identity_residual(v: &VectorField) -> Result<f64> {
    let op = LerayOperator::new(v.grid)?;
    let mut s = v.gradient_product_source();
    if v.grid.is_torus() {
        let mean = s.values.iter().sum::<f64>() / s.values.len() as f64;
        s.values.iter_mut().for_each(|x| *x -= mean);
    }
    let lap = op.potential(&s)?.laplacian();
    Ok(s.max_abs_diff(&lap))
}

/// `int |s(z)| |ln|z|| dz`, the extra integrability the planar kernel needs.
pub fn log_moment(s: &ScalarField) -> f64 {
    let g = s.grid;
    let d = g.dim();
    let h = g.spacing();
    s.values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let r = norm(&g.point(i)[..d]).max(h / 2.0);
            v.abs() * r.ln().abs()
        })
        .sum::<f64>()
        * g.cell_volume()
}
