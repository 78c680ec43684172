//! Browser demo: each export returns a JSON string for `www/index.html`.

use std::f64::consts::PI;

use navleray::analytic::taylor_green;
use navleray::boundary::robin_heat_benchmark;
use navleray::io::field_svgs;
use navleray::kernels::{GaussianKernelSpec, heat_kernel, poisson_kernel};
use navleray::parametrix::constant_drift_gamma;
use navleray::scheme::{MarchConfig, global_march};
use navleray::{Grid, Topology};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Taylor-Green march on an `n x n` torus up to `horizon`, with speed and divergence heatmaps.
pub fn vortex_json(n: usize, horizon: f64, controls: bool) -> Result<String, String> {
    if !(8..=64).contains(&n) {
        return Err(format!("grid size {n} outside 8..=64"));
    }
    let g = Grid::new(2, PI, n, Topology::Torus).map_err(|e| e.to_string())?;
    let h = taylor_green(g, 0.1, 0.0);
    let cfg = MarchConfig { nu: 0.1, horizon, controls, max_steps: Some(2000), ..Default::default() };
    let out = global_march(&h, &cfg).map_err(|e| e.to_string())?;
    let t = out.final_time();
    let exact = taylor_green(g, 0.1, t);
    let (speed, div) = field_svgs(&out.final_v, t).map_err(|e| e.to_string())?;
    Ok(json!({
        "steps": out.reports.len(),
        "t": t,
        "rho": out.reports.first().map(|r| r.rho),
        "relative_error": out.final_v.max_abs_diff(&exact) / exact.sup(),
        "max_ratio": out.reports.iter().map(|r| r.max_ratio).fold(0.0, f64::max),
        "max_divergence": out.reports.iter().map(|r| r.div_max).fold(0.0, f64::max),
        "breach": out.breach,
        "speed_svg": speed,
        "divergence_svg": div,
    })
    .to_string())
}

/// Samples a 2D kernel along the first axis, `x in [-3, 3]`.
pub fn kernel_json(kind: &str, diffusion: f64, elapsed: f64, drift: f64, samples: usize) -> Result<String, String> {
    let samples = samples.clamp(2, 2000);
    let mut xs = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for i in 0..samples {
        let x = -3.0 + 6.0 * i as f64 / (samples - 1) as f64;
        let p = [x, 0.0];
        let v = match kind {
            "poisson" => poisson_kernel(2, &p),
            "heat" => heat_kernel(GaussianKernelSpec { diffusion, elapsed }, &p, &[0.0, 0.0]),
            "drift-gamma" => constant_drift_gamma(diffusion, &[drift, 0.0], elapsed, &p, &[0.0, 0.0]),
            other => return Err(format!("unknown kernel `{other}`")),
        };
        // the Poisson kernel is singular at the origin; skip that sample
        if let Ok(v) = v {
            xs.push(x);
            ys.push(v);
        }
    }
    Ok(json!({ "x": xs, "y": ys }).to_string())
}

/// Robin heat benchmark of the boundary-integral solver.
pub fn robin_json(nx: usize, nt: usize) -> Result<String, String> {
    if nx > 128 || nt > 400 {
        return Err("nx <= 128 and nt <= 400 in the browser".into());
    }
    let b = robin_heat_benchmark(nx, nt, 32).map_err(|e| e.to_string())?;
    Ok(json!({
        "nx": b.nx,
        "nt": b.nt,
        "max_error": b.max_error,
        "residual": b.residual,
        "ratios": b.ratios,
        "terms": b.terms.len(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn vortex(n: usize, horizon: f64, controls: bool) -> Result<String, JsError> {
    vortex_json(n, horizon, controls).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn kernel(kind: &str, diffusion: f64, elapsed: f64, drift: f64, samples: usize) -> Result<String, JsError> {
    kernel_json(kind, diffusion, elapsed, drift, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn robin(nx: usize, nt: usize) -> Result<String, JsError> {
    robin_json(nx, nt).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vortex_short_run() {
        let v: serde_json::Value = serde_json::from_str(&vortex_json(16, 0.01, false).unwrap()).unwrap();
        assert!(v["steps"].as_u64().unwrap() > 0);
        assert!(v["relative_error"].as_f64().unwrap() < 0.02);
        assert!(v["speed_svg"].as_str().unwrap().starts_with("<svg"));
        assert!(vortex_json(4, 0.01, false).is_err());
    }

    #[test]
    fn kernel_profile_skips_singular_point() {
        let v: serde_json::Value = serde_json::from_str(&kernel_json("poisson", 1.0, 1.0, 0.0, 3).unwrap()).unwrap();
        assert_eq!(v["x"].as_array().unwrap().len(), 2);
        let h: serde_json::Value = serde_json::from_str(&kernel_json("heat", 1.0, 0.5, 0.0, 201).unwrap()).unwrap();
        let peak = h["y"][100].as_f64().unwrap();
        assert!((peak - 1.0 / (4.0 * PI * 0.5)).abs() < 1e-12);
        assert!(kernel_json("nope", 1.0, 1.0, 0.0, 3).is_err());
    }

    #[test]
    fn robin_small() {
        let v: serde_json::Value = serde_json::from_str(&robin_json(16, 20).unwrap()).unwrap();
        assert!(v["residual"].as_f64().unwrap() < 1e-6);
    }
}
