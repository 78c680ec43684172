//! Closed-form reference solutions used as oracles and as initial data.

use std::f64::consts::PI;

use crate::grid::{Grid, ScalarField, VectorField};

/// 2D Taylor-Green vortex `e^{-2 nu t} (sin x cos y, -cos x sin y)`.
pub fn taylor_green(grid: Grid, nu: f64, t: f64) -> VectorField {
    let a = (-2.0 * nu * t).exp();
    VectorField::from_fn(grid, |x, c| if c == 0 { a * x[0].sin() * x[1].cos() } else { -a * x[0].cos() * x[1].sin() })
}

/// Pressure of the 2D Taylor-Green vortex, `e^{-4 nu t} (cos 2x + cos 2y) / 4`.
pub fn taylor_green_pressure(grid: Grid, nu: f64, t: f64) -> ScalarField {
    let a = (-4.0 * nu * t).exp() / 4.0;
    ScalarField::from_fn(grid, |x| a * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos()))
}

/// 3D Taylor-Green initial field `(sin x cos y cos z, -cos x sin y cos z, 0)`.
pub fn taylor_green_3d(grid: Grid) -> VectorField {
    VectorField::from_fn(grid, |x, c| match c {
        0 => x[0].sin() * x[1].cos() * x[2].cos(),
        1 => -x[0].cos() * x[1].sin() * x[2].cos(),
        _ => 0.0,
    })
}

/// Viscous Burgers `u_t + u u_x = nu u_xx` on the `2 pi`-periodic line with `u(0) = sin x`,
/// through the Cole-Hopf transform `u = -2 nu phi_x / phi`.
#[derive(Clone, Debug)]
pub struct ColeHopfSine {
    nu: f64,
    coeffs: Vec<f64>,
}

impl ColeHopfSine {
    pub fn new(nu: f64) -> Self {
        // phi_0 = exp((cos x - 1)/(2 nu)) is even; cosine coefficients by the periodic trapezoid rule
        let q = 4096;
        let modes = 200;
        let phi0: Vec<f64> = (0..q).map(|j| ((2.0 * PI * j as f64 / q as f64).cos() - 1.0) / (2.0 * nu)).map(f64::exp).collect();
        let coeffs = (0..modes)
            .map(|m| {
                let s: f64 = phi0.iter().enumerate().map(|(j, p)| p * (2.0 * PI * (m * j) as f64 / q as f64).cos()).sum();
                let a = s / q as f64;
                if m == 0 { a } else { 2.0 * a }
            })
            .take_while(|a| a.abs() > 1e-300)
            .collect();
        ColeHopfSine { nu, coeffs }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let (mut phi, mut dphi) = (0.0, 0.0);
        for (m, a) in self.coeffs.iter().enumerate() {
            let mf = m as f64;
            let decay = a * (-self.nu * mf * mf * t).exp();
            phi += decay * (mf * x).cos();
            dphi -= decay * mf * (mf * x).sin();
        }
        -2.0 * self.nu * dphi / phi
    }

    pub fn field(&self, grid: Grid, t: f64) -> VectorField {
        VectorField::from_fn(grid, |x, _| self.eval(t, x[0]))
    }
}
