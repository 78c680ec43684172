//! Run configuration: a flat `key = value` file (a TOML subset), validated into [`RunConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::Modulation;
use crate::error::{Error, Result};
use crate::grid::{Grid, Topology};
use crate::linparab::{Advection, Backend, BackendKind};
use crate::scheme::{MarchConfig, ScheduleMode, StepSchedule};

/// Environment variable overriding the output directory of a run.
pub const OUT_ENV: &str = "NAVLERAY_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    NavierStokesControlsOn,
    NavierStokesControlsOff,
    Burgers,
    BoundaryBench,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 2D vortex on the `2 pi` torus.
    TaylorGreen,
    /// 3D Taylor-Green initial field on the `2 pi` torus (no closed-form evolution).
    TaylorGreen3d,
    /// Divergence-free Gaussian swirl (`exp(-|x|^2/2)` in 1D).
    GaussianBump,
    /// `sin x` on the `2 pi`-periodic line.
    ColeHopf1d,
    /// A field dump given by `file`.
    File,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Uniform,
    Decreasing,
}

/// Boundary benchmark sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub nx: usize,
    pub nt: usize,
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
    pub topology: Topology,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.extent, self.points, self.topology)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: RunMode,
    pub preset: Preset,
    pub grid: GridSpec,
    pub amplitude: f64,
    pub file: Option<PathBuf>,
    pub march: MarchConfig,
    pub dump_times: Vec<f64>,
    pub dump_format: DumpFormat,
    pub output: PathBuf,
    pub seed: u64,
    pub bench: BenchSpec,
    /// Defaults that were filled in, one message per key.
    #[serde(skip)]
    pub defaults_applied: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<RunMode>,
    preset: Option<Preset>,
    dim: Option<usize>,
    extent: Option<f64>,
    points: Option<usize>,
    topology: Option<Topology>,
    amplitude: Option<f64>,
    file: Option<PathBuf>,
    nu: Option<f64>,
    horizon: Option<f64>,
    schedule: Option<ScheduleName>,
    schedule_c: Option<f64>,
    rho: Option<f64>,
    backend: Option<BackendKind>,
    substeps: Option<usize>,
    advection: Option<Advection>,
    tol: Option<f64>,
    kmax: Option<usize>,
    min_corrections: Option<usize>,
    max_steps: Option<usize>,
    max_retries: Option<usize>,
    c_star: Option<f64>,
    modulation: Option<Modulation>,
    zero_first_control: Option<bool>,
    abort_on_breach: Option<bool>,
    dump_times: Option<Vec<f64>>,
    dump_format: Option<DumpFormat>,
    output: Option<PathBuf>,
    seed: Option<u64>,
    bench_nx: Option<usize>,
    bench_nt: Option<usize>,
    bench_depth: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Defaults are shown as they would be written in the config.
fn take<T>(v: Option<T>, default: T, key: &str, shown: impl Serialize, notes: &mut Vec<String>) -> T {
    v.unwrap_or_else(|| {
        let shown = toml::Value::try_from(&shown).map(|v| v.to_string()).unwrap_or_default();
        notes.push(format!("{key} not set, using {shown}"));
        default
    })
}

/// Parses and validates configuration text; every invalid field is reported.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        msg: e.message().to_string(),
    })?;
    let mut notes = Vec::new();
    let mut bad = Vec::new();
    let n = &mut notes;

    let mode = take(raw.mode, RunMode::NavierStokesControlsOff, "mode", "navier_stokes_controls_off", n);
    let preset_default = match mode {
        RunMode::Burgers => Preset::ColeHopf1d,
        _ => Preset::TaylorGreen,
    };
    let preset = take(raw.preset, preset_default, "preset", preset_default, n);
    let (dim_d, topo_d) = match preset {
        Preset::ColeHopf1d => (1, Topology::Torus),
        Preset::TaylorGreen3d => (3, Topology::Torus),
        Preset::GaussianBump => (2, Topology::FreeSpaceTruncated),
        _ => (2, Topology::Torus),
    };
    let extent_d = if preset == Preset::GaussianBump { 8.0 } else { std::f64::consts::PI };
    let grid = GridSpec {
        dim: take(raw.dim, dim_d, "dim", dim_d, n),
        extent: take(raw.extent, extent_d, "extent", extent_d, n),
        points: take(raw.points, 64, "points", 64, n),
        topology: take(raw.topology, topo_d, "topology", topo_d, n),
    };
    if mode != RunMode::BoundaryBench {
        if let Err(e) = grid.grid() {
            bad.push(format!("grid: {e}"));
        }
    }
    let needs = |want_dim: usize, name: &str, bad: &mut Vec<String>| {
        if grid.dim != want_dim || grid.topology != Topology::Torus || (grid.extent - std::f64::consts::PI).abs() > 1e-12 {
            bad.push(format!("preset {name} needs dim={want_dim}, topology=torus, extent=pi"));
        }
    };
    match (mode, preset) {
        (RunMode::BoundaryBench, _) => {}
        (_, Preset::TaylorGreen) => needs(2, "taylor_green", &mut bad),
        (_, Preset::TaylorGreen3d) => needs(3, "taylor_green_3d", &mut bad),
        (_, Preset::ColeHopf1d) => {
            needs(1, "cole_hopf_1d", &mut bad);
            if mode != RunMode::Burgers {
                bad.push("preset cole_hopf_1d needs mode=burgers".into());
            }
        }
        (_, Preset::File) if raw.file.is_none() => bad.push("preset file needs file=<path>".into()),
        _ => {}
    }
    if mode != RunMode::Burgers && mode != RunMode::BoundaryBench && grid.dim < 2 {
        bad.push("Navier-Stokes modes need dim >= 2".into());
    }

    let mut march = MarchConfig::default();
    march.nu = take(raw.nu, 0.1, "nu", 0.1, n);
    let horizon_d = if mode == RunMode::Burgers { 0.5 } else { 1.0 };
    march.horizon = take(raw.horizon, horizon_d, "horizon", horizon_d, n);
    let sched = take(raw.schedule, ScheduleName::Uniform, "schedule", "uniform", n);
    march.schedule = StepSchedule {
        mode: match sched {
            ScheduleName::Uniform => ScheduleMode::Uniform,
            ScheduleName::Decreasing => ScheduleMode::Decreasing,
        },
        c: raw.schedule_c.unwrap_or(march.schedule.c),
        rho: raw.rho,
    };
    march.controls = mode == RunMode::NavierStokesControlsOn;
    march.leray = mode != RunMode::Burgers;
    march.max_principle = mode == RunMode::Burgers;
    march.backend = Backend {
        kind: raw.backend.unwrap_or(march.backend.kind),
        substeps: raw.substeps.unwrap_or(march.backend.substeps),
        advection: raw.advection.unwrap_or(march.backend.advection),
    };
    march.tol = raw.tol;
    march.kmax = raw.kmax.unwrap_or(march.kmax);
    march.min_corrections = raw.min_corrections.unwrap_or(march.min_corrections);
    march.max_steps = raw.max_steps;
    march.max_retries = raw.max_retries.unwrap_or(march.max_retries);
    march.c_star = raw.c_star;
    march.modulation = raw.modulation.unwrap_or_default();
    march.zero_first_control = raw.zero_first_control.unwrap_or(march.zero_first_control);
    march.abort_on_breach = raw.abort_on_breach.unwrap_or(march.abort_on_breach);

    let positive = |v: f64, key: &str, bad: &mut Vec<String>| {
        if !(v.is_finite() && v > 0.0) {
            bad.push(format!("{key} must be positive, got {v}"));
        }
    };
    positive(march.nu, "nu", &mut bad);
    positive(march.horizon, "horizon", &mut bad);
    positive(march.schedule.c, "schedule_c", &mut bad);
    for (v, key) in [(march.schedule.rho, "rho"), (march.tol, "tol"), (march.c_star, "c_star")] {
        if let Some(v) = v {
            positive(v, key, &mut bad);
        }
    }
    if march.backend.substeps == 0 {
        bad.push("substeps must be at least 1".into());
    }
    if march.kmax < 2 {
        bad.push("kmax must be at least 2".into());
    }
    if march.min_corrections == 0 || march.min_corrections > march.kmax {
        bad.push("min_corrections must lie in 1..=kmax".into());
    }
    let amplitude = raw.amplitude.unwrap_or(1.0);
    if !amplitude.is_finite() {
        bad.push("amplitude must be finite".into());
    }
    let dump_times = raw.dump_times.unwrap_or_default();
    for t in &dump_times {
        if !(t.is_finite() && *t >= 0.0 && *t <= march.horizon) {
            bad.push(format!("dump time {t} outside [0, horizon]"));
        }
    }
    let bench = BenchSpec { nx: raw.bench_nx.unwrap_or(64), nt: raw.bench_nt.unwrap_or(200), depth: raw.bench_depth.unwrap_or(32) };
    if bench.nx < 4 || bench.nt < 1 || bench.depth < 1 {
        bad.push("bench_nx >= 4, bench_nt >= 1 and bench_depth >= 1 required".into());
    }
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let output = take(raw.output, PathBuf::from("out"), "output", "out", n);
    Ok(RunConfig {
        mode,
        preset,
        grid,
        amplitude,
        file: raw.file,
        march,
        dump_times,
        dump_format: raw.dump_format.unwrap_or_default(),
        output,
        seed: raw.seed.unwrap_or(0),
        bench,
        defaults_applied: notes,
    })
}

/// Reads `path`; a relative `file` entry is resolved against the config's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config_str(&text)?;
    if let (Some(f), Some(dir)) = (&cfg.file, path.parent()) {
        if f.is_relative() {
            cfg.file = Some(dir.join(f));
        }
    }
    Ok(cfg)
}

/// `NAVLERAY_OUT` when set, otherwise the configured directory.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_taylor_green() {
        let c = parse_config_str("preset = \"taylor_green\"\n").unwrap();
        assert_eq!(c.grid.dim, 2);
        assert_eq!(c.march.nu, 0.1);
        assert!(c.defaults_applied.iter().any(|m| m.starts_with("nu not set")));
        assert!(!c.march.controls);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let e = parse_config_str("preset = \"taylor_green\"\ndim = 3\nnu = -1.0\n").unwrap_err();
        match e {
            Error::Validation(v) => assert_eq!(v.len(), 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_lines() {
        let e = parse_config_str("nu = 0.1\n\nbogus = 3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let e = parse_config_str("nu = \n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e:?}");
    }
}
