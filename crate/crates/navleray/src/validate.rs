//! Oracle and property suites at small grids, one per module.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{ColeHopfSine, taylor_green};
use crate::boundary::{HeatGamma, k_gamma, robin_heat_benchmark};
use crate::control::{build_partition, build_phi};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Topology, VectorField, decay_check, divergence, norms};
use crate::kernels::{
    Engine, GaussianKernelSpec, KernelSpectrum, LerayOperator, SampledKernel, convolve, convolve_checked, omega,
    poisson_kernel_grad, pressure_identity_residual,
};
use crate::linparab::{LinearProblem, TimeData, cross_validate};
use crate::parametrix::{DkExpansion, DriftSpec, LevySeries};
use crate::scheme::{MarchConfig, global_march, harmonic_lower_bound, schedule_partial_sum, steps_to_exceed};

pub const SUITES: [&str; 7] = ["grid_fields", "kernels", "parametrix", "linparab", "control", "scheme", "boundary"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

struct Suite {
    name: &'static str,
    out: Vec<CheckResult>,
}

impl Suite {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Result<(bool, String)>) {
        let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        self.out.push(CheckResult { suite: self.name.into(), name: name.into(), passed, detail });
    }
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn tg(n: usize) -> Result<VectorField> {
    Ok(taylor_green(Grid::new(2, PI, n, Topology::Torus)?, 0.0, 0.0))
}

fn grid_fields(s: &mut Suite) {
    s.check("make_grid_bounds", || {
        let g = Grid::new(1, PI, 16, Topology::Torus)?;
        let ok = (g.spacing() - 2.0 * PI / 16.0).abs() < 1e-15 && matches!(Grid::new(4, 1.0, 8, Topology::Torus), Err(Error::InvalidGrid(_)));
        Ok((ok, format!("spacing {:e}", g.spacing())))
    });
    s.check("divergence_second_order", || {
        // a non-solenoidal field with known divergence 2 cos x cos y
        let f = |n| -> Result<f64> {
            let g = Grid::new(2, PI, n, Topology::Torus)?;
            let v = VectorField::from_fn(g, |x, c| if c == 0 { x[0].sin() * x[1].cos() } else { x[0].cos() * x[1].sin() });
            let exact = ScalarField::from_fn(g, |x| 2.0 * x[0].cos() * x[1].cos());
            Ok(divergence(&v)?.max_abs_diff(&exact))
        };
        let p = order(f(16)?, f(32)?);
        Ok((p >= 1.9, format!("observed order {p:.3}")))
    });
    s.check("sine_l2", || {
        let g = Grid::new(1, PI, 256, Topology::Torus)?;
        let l2 = norms(&VectorField::from_fn(g, |x, _| x[0].sin()))?.l2;
        Ok(((l2 - PI.sqrt()).abs() < 1e-6, format!("l2 {l2:e}")))
    });
    s.check("norm_monotonicity", || {
        let r = norms(&tg(32)?)?;
        Ok((r.sup0 <= r.sup01 && r.sup01 <= r.sup12, format!("{:e} <= {:e} <= {:e}", r.sup0, r.sup01, r.sup12)))
    });
    s.check("gaussian_decay_k5", || {
        let g = Grid::new(2, 8.0, 64, Topology::FreeSpaceTruncated)?;
        let gauss = VectorField::from_fn(g, |x, _| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp());
        let ok = decay_check(&gauss, 5)?.passes && !decay_check(&VectorField::from_fn(g, |_, _| 1.0), 1)?.passes;
        Ok((ok, "gaussian passes, constant fails".into()))
    });
}

fn kernels(s: &mut Suite, seed: u64) {
    s.check("poisson_gradient_bound", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for n in [2usize, 3] {
            let bound = 1.0 / omega(n);
            for _ in 0..10_000 {
                let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-3);
                let r = rng.random_range(1.0..10.0);
                let x: Vec<f64> = dir.iter().map(|d| d / norm * r).collect();
                let g = poisson_kernel_grad(n, &x)?;
                let m = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                worst = worst.max(m / bound);
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                let gn = poisson_kernel_grad(n, &neg)?;
                if g.iter().zip(&gn).any(|(a, b)| *a != -*b) {
                    return Ok((false, "antisymmetry violated".into()));
                }
            }
        }
        Ok((worst <= 1.0, format!("max |grad K| omega_n = {worst:.6}")))
    });
    s.check("engine_equivalence", || {
        let g = Grid::new(2, 4.0, 16, Topology::FreeSpaceTruncated)?;
        let f = ScalarField::from_fn(g, |x| (-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp());
        let k = SampledKernel::heat(g, GaussianKernelSpec { diffusion: 1.0, elapsed: 0.3 })?;
        convolve_checked(&f, &k, 1e-10)?;
        Ok((true, "direct and fast agree to 1e-10".into()))
    });
    s.check("induced_engine_bug_caught", || {
        // a stale transform of a corrupted kernel plays the role of a broken fast engine
        let g = Grid::new(1, 4.0, 32, Topology::FreeSpaceTruncated)?;
        let f = ScalarField::from_fn(g, |x| (-x[0] * x[0]).exp());
        let mut k = SampledKernel::heat(g, GaussianKernelSpec { diffusion: 1.0, elapsed: 0.3 })?;
        let stale = KernelSpectrum::new(&k);
        k.values[5] += 1e-3;
        let a = convolve(&f, &k, Engine::Direct)?;
        let diff = a.max_abs_diff(&stale.apply(&f)?) / a.sup().max(1.0);
        let caught = matches!(
            if diff > 1e-10 { Err(Error::EngineMismatch { diff, tol: 1e-10 }) } else { Ok(()) },
            Err(Error::EngineMismatch { .. })
        );
        Ok((caught, format!("discrepancy {diff:e}")))
    });
    s.check("rhs_is_minus_pressure_gradient", || {
        let v = tg(64)?;
        let op = LerayOperator::new(v.grid)?;
        let rhs = op.rhs(&v)?;
        let gp = op.pressure(&v)?.gradient();
        let err = (0..2).map(|a| rhs.comps[a].lincomb(1.0, &gp.comps[a], 1.0).sup()).fold(0.0, f64::max);
        Ok((err <= 4.0 * v.grid.spacing().powi(2), format!("{err:e}")))
    });
    s.check("pressure_identity_second_order", || {
        let p = order(pressure_identity_residual(&tg(32)?)?, pressure_identity_residual(&tg(64)?)?);
        Ok((p >= 2.0 - 0.1, format!("observed order {p:.3}")))
    });
}

fn shifted_gaussian(d: f64, b: f64, t: f64, x: f64) -> f64 {
    let u = x + b * t;
    (-u * u / (4.0 * d * t)).exp() / (4.0 * PI * d * t).sqrt()
}

fn parametrix(s: &mut Suite) {
    s.check("levy_m2_constant_drift", || {
        let (d, b, t) = (0.5, 0.05, 0.5);
        let series = LevySeries::new(DriftSpec::constant(&[b]), d, 2);
        let sd = (2.0 * d * t).sqrt();
        let mut worst: f64 = 0.0;
        for k in -6..=6 {
            let x = 0.5 * k as f64 * sd;
            let exact = shifted_gaussian(d, b, t, x);
            worst = worst.max(((series.gamma(t, &[x], 0.0, &[0.0])?.value - exact) / exact).abs());
        }
        Ok((worst <= 1e-3, format!("relative {worst:e}")))
    });
    s.check("dk_k2_short_time", || {
        let (d, b, t) = (0.5, 0.3, 0.05);
        let e = DkExpansion::new(DriftSpec::constant(&[b]), d, 2);
        let mut worst: f64 = 0.0;
        for x in [-0.4, -0.1, 0.0, 0.2, 0.5] {
            let exact = shifted_gaussian(d, b, t, x);
            worst = worst.max(((e.fundamental(t, &[x], &[0.0])?.value - exact) / exact).abs());
        }
        Ok((worst <= 1e-4, format!("relative {worst:e}")))
    });
    s.check("zero_drift_collapse", || {
        let v = LevySeries::new(DriftSpec::zero(2), 0.7, 3).gamma(1.3, &[0.2, -0.1], 0.4, &[0.5, 0.3])?;
        let n = crate::kernels::heat_kernel(GaussianKernelSpec { diffusion: 0.7, elapsed: 0.9 }, &[0.2, -0.1], &[0.5, 0.3])?;
        Ok((v.value == n, format!("{:e} vs {n:e}", v.value)))
    });
    s.check("levy_mass", || {
        let (d, b, t) = (0.5, 0.1, 0.5);
        let series = LevySeries::new(DriftSpec::constant(&[b]), d, 2).with_resolution(12, 12);
        let lim = 8.0 * (2.0 * d * t).sqrt();
        let n = 161;
        let dy = 2.0 * lim / (n - 1) as f64;
        let mut mass = 0.0;
        for i in 0..n {
            mass += series.gamma(t, &[0.0], 0.0, &[-lim + i as f64 * dy])?.value * dy;
        }
        Ok(((mass - 1.0).abs() < 2e-3, format!("mass {mass:.6}")))
    });
}

fn linparab(s: &mut Suite) {
    s.check("backends_agree", || {
        let g = Grid::new(1, 8.0, 48, Topology::Torus)?;
        let mut p = LinearProblem::heat(VectorField::from_fn(g, |x, _| (-x[0] * x[0] / 4.0).exp() / (4.0 * PI).sqrt()), 0.2);
        p.drift = TimeData::Const(VectorField::from_fn(g, |_, _| 0.5));
        let d = cross_validate(&p, 64)?;
        Ok((d <= 5e-3, format!("discrepancy {d:e}")))
    });
}

fn control(s: &mut Suite) {
    s.check("partition_of_unity", || {
        let g = Grid::new(2, 3.0, 16, Topology::Torus)?;
        let p = build_partition(&[g.ravel([1, 1, 0])], &[g.ravel([9, 9, 0])], g)?;
        let worst = (0..200)
            .map(|k| {
                let x = [-3.0 + 0.03 * k as f64, 2.9 - 0.029 * k as f64];
                (p.partition.partition_sum(&x) - 1.0).abs()
            })
            .fold(0.0, f64::max);
        Ok((worst < 1e-12, format!("{worst:e}")))
    });
    s.check("phi_on_bands", || {
        let g = Grid::new(1, 6.0, 96, Topology::FreeSpaceTruncated)?;
        let c = 4.0;
        let v = VectorField::from_fn(g, |x, _| c * (-(x[0] - 2.0).powi(2)).exp() - c * (-(x[0] + 2.0).powi(2)).exp());
        let cf = build_phi(&v, &VectorField::zeros(g), c)?;
        let cs = &cf.sets.comps[0];
        let phi = &cf.total.comps[0].values;
        let ok = !cs.v_plus.is_empty()
            && !cs.v_minus.is_empty()
            && cs.v_plus.iter().all(|&i| phi[i] == -1.0)
            && cs.v_minus.iter().all(|&i| phi[i] == 1.0);
        Ok((ok, format!("{} + / {} - band points", cs.v_plus.len(), cs.v_minus.len())))
    });
}

fn scheme(s: &mut Suite) {
    s.check("harmonic_divergence", || {
        let c = 0.5;
        let ok = schedule_partial_sum(c, 1_000_000) > harmonic_lower_bound(c, 1_000_000)
            && schedule_partial_sum(c, steps_to_exceed(c, 5.0).ceil() as u64) > 5.0;
        Ok((ok, format!("sum to 1e6 = {:.4}", schedule_partial_sum(c, 1_000_000))))
    });
    s.check("taylor_green_short_run", || {
        let h = taylor_green(Grid::new(2, PI, 32, Topology::Torus)?, 0.1, 0.0);
        let out = global_march(&h, &MarchConfig { horizon: 0.05, ..Default::default() })?;
        let t = out.final_time();
        let err = out.final_v.max_abs_diff(&taylor_green(h.grid, 0.1, t));
        let ratio = out.reports.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
        Ok((err <= 0.02 * h.sup() && ratio <= 0.27 && out.breach.is_none(), format!("error {err:e}, max ratio {ratio:e}, {} steps", out.reports.len())))
    });
    s.check("burgers_short_run", || {
        let g = Grid::new(1, PI, 128, Topology::Torus)?;
        let h = VectorField::from_fn(g, |x, _| x[0].sin());
        let out = crate::scheme::burgers_march(&h, &MarchConfig { horizon: 0.1, ..Default::default() })?;
        let ch = ColeHopfSine::new(0.1);
        let err = out.final_v.max_abs_diff(&ch.field(g, out.final_time()));
        Ok((err <= 1e-3, format!("error {err:e}")))
    });
}

fn boundary(s: &mut Suite) {
    s.check("k_gamma_closed_form", || {
        let g = HeatGamma { dim: 1, diffusion: 0.5, drift: [0.0; 2] };
        let e = 0.2;
        let gv = (-0.36f64 / (4.0 * 0.5 * e)).exp() / (4.0 * PI * 0.5 * e).sqrt();
        let want = -0.6 / (2.0 * 0.5 * e) * gv + 2.0 * gv;
        let got = k_gamma(&g, 2.0, 0.3, [1.0, 0.0], [1.0, 0.0], 0.1, [0.4, 0.0])?;
        Ok(((got - want).abs() < 1e-12, format!("{got:e}")))
    });
    s.check("robin_benchmark", || {
        let b = robin_heat_benchmark(32, 40, 32)?;
        let ratio = b.ratios.iter().skip(1).copied().fold(0.0, f64::max);
        let ok = b.max_error <= 1e-3 && b.residual <= 1e-6 && ratio < 0.9;
        Ok((ok, format!("error {:e}, residual {:e}, ratio {ratio:.3}", b.max_error, b.residual)))
    });
}

/// Runs every suite, or only `filter` when given (unknown names are an error).
pub fn validate(filter: Option<&str>, seed: u64) -> Result<Vec<CheckResult>> {
    if let Some(f) = filter {
        if !SUITES.contains(&f) {
            return Err(Error::Validation(vec![format!("unknown suite `{f}`; expected one of {}", SUITES.join(", "))]));
        }
    }
    let mut out = Vec::new();
    for name in SUITES {
        if filter.is_some_and(|f| f != name) {
            continue;
        }
        let mut s = Suite { name, out: Vec::new() };
        match name {
            "grid_fields" => grid_fields(&mut s),
            "kernels" => kernels(&mut s, seed),
            "parametrix" => parametrix(&mut s),
            "linparab" => linparab(&mut s),
            "control" => control(&mut s),
            "scheme" => scheme(&mut s),
            _ => boundary(&mut s),
        }
        out.extend(s.out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_selects_one_suite() {
        let r = validate(Some("control"), 0).unwrap();
        assert!(r.iter().all(|c| c.suite == "control" && c.passed), "{r:?}");
        assert!(validate(Some("nope"), 0).is_err());
    }
}
