//! Run orchestration: initial data, the march, oracles and artifact files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytic::{ColeHopfSine, taylor_green, taylor_green_3d};
use crate::boundary::{RobinBenchmark, robin_heat_benchmark};
use crate::config::{BenchSpec, DumpFormat, Preset, RunConfig, RunMode};
use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::io::{field_svgs, read_field, write_field, write_ledger, write_steps};
use crate::scheme::{CONTRACTION_SLACK, CONTRACTION_TARGET, MarchOutput, StepReport, global_march_observed};

/// Initial field of a preset, scaled by the configured amplitude.
pub fn initial_field(cfg: &RunConfig) -> Result<VectorField> {
    let g = cfg.grid.grid()?;
    let v = match cfg.preset {
        Preset::TaylorGreen => taylor_green(g, cfg.march.nu, 0.0),
        Preset::TaylorGreen3d => taylor_green_3d(g),
        Preset::ColeHopf1d => VectorField::from_fn(g, |x, _| x[0].sin()),
        Preset::GaussianBump => {
            // v = (d_2 psi, -d_1 psi, 0) with psi = exp(-|x|^2 / 2), divergence free
            VectorField::from_fn(g, |x, c| {
                let e = (-0.5 * x.iter().map(|a| a * a).sum::<f64>()).exp();
                match (g.dim(), c) {
                    (1, _) => e,
                    (_, 0) => -x[1] * e,
                    (_, 1) => x[0] * e,
                    _ => 0.0,
                }
            })
        }
        Preset::File => {
            let path = cfg.file.as_ref().ok_or_else(|| Error::Validation(vec!["preset file needs file=<path>".into()]))?;
            let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let (v, _) = read_field(&mut BufReader::new(f))?;
            if !v.grid.same_shape(&g) {
                return Err(Error::ShapeMismatch(format!("{} does not match the configured grid", path.display())));
            }
            v
        }
    };
    Ok(v.scaled(cfg.amplitude))
}

/// Closed-form solution at time `t`, where one is known.
pub fn oracle(cfg: &RunConfig) -> Option<Box<dyn Fn(f64) -> VectorField>> {
    let g = cfg.grid.grid().ok()?;
    let (a, nu) = (cfg.amplitude, cfg.march.nu);
    match cfg.preset {
        // the vortex solves the equation for any amplitude
        Preset::TaylorGreen if cfg.mode != RunMode::Burgers => Some(Box::new(move |t| taylor_green(g, nu, t).scaled(a))),
        Preset::ColeHopf1d if a == 1.0 => {
            let ch = ColeHopfSine::new(nu);
            Some(Box::new(move |t| ch.field(g, t)))
        }
        _ if a == 0.0 => Some(Box::new(move |_| VectorField::zeros(g))),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Assertion { name: name.into(), passed, detail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub requested: f64,
    pub t: f64,
    pub file: String,
    pub oracle_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: RunMode,
    pub preset: Preset,
    /// `ok`, `breach` or `error`.
    pub status: String,
    pub error: Option<String>,
    /// Snake_case error kind when `status` is not `ok`.
    pub error_code: Option<String>,
    pub steps: usize,
    pub final_time: f64,
    pub final_oracle_error: Option<f64>,
    pub max_ratio: f64,
    pub initial_divergence: f64,
    pub max_divergence: f64,
    pub assertions: Vec<Assertion>,
    pub dumps: Vec<DumpRecord>,
    pub bench: Vec<RobinBenchmark>,
    pub defaults_applied: Vec<String>,
    pub config: RunConfig,
}

impl RunSummary {
    /// Exit criterion: the march finished without errors or ledger breaches.
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

struct Recorder<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    oracle: Option<Box<dyn Fn(f64) -> VectorField>>,
    reports: Vec<StepReport>,
    errors: Vec<Option<f64>>,
    dumps: Vec<DumpRecord>,
    pending: Vec<f64>,
    last: Option<(VectorField, f64)>,
    failure: Option<Error>,
}

impl Recorder<'_> {
    fn dump(&mut self, v: &VectorField, t: f64, err: Option<f64>) -> Result<()> {
        let ext = match self.cfg.dump_format {
            DumpFormat::Csv => "csv",
            DumpFormat::Binary => "bin",
        };
        let name = format!("field_{:03}.{ext}", self.dumps.len());
        let mut w = create(&self.dir.join(&name))?;
        write_field(&mut w, v, t, self.cfg.dump_format)?;
        w.flush()?;
        while self.pending.first().is_some_and(|&r| r <= t + 1e-12) {
            let requested = self.pending.remove(0);
            self.dumps.push(DumpRecord { requested, t, file: name.clone(), oracle_error: err });
        }
        Ok(())
    }

    fn observe(&mut self, r: &StepReport, v: &VectorField) {
        let err = self.oracle.as_ref().map(|f| f(r.t).max_abs_diff(v));
        self.reports.push(r.clone());
        self.errors.push(err);
        if self.failure.is_none() && self.pending.first().is_some_and(|&q| q <= r.t + 1e-12) {
            if let Err(e) = self.dump(v, r.t, err) {
                self.failure = Some(e);
            }
        }
        self.last = Some((v.clone(), r.t));
    }
}

fn assertions(cfg: &RunConfig, out: &MarchOutput) -> Vec<Assertion> {
    let reps = &out.reports;
    let max_ratio = reps.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let worst_sum = reps.iter().map(|r| r.delta_sum).fold(0.0, f64::max);
    let c12 = out.ledger.c12;
    let mut a = vec![
        Assertion::new("contraction", max_ratio <= CONTRACTION_TARGET + CONTRACTION_SLACK, format!("max ratio {max_ratio:e}")),
        Assertion::new("correction_sum", worst_sum <= CONTRACTION_TARGET * c12, format!("max sum {worst_sum:e} vs {:e}", CONTRACTION_TARGET * c12)),
        Assertion::new("ledger", out.breach.is_none(), out.breach.clone().unwrap_or_else(|| "no breach".into())),
    ];
    if cfg.grid.dim >= 2 {
        let max_div = reps.iter().map(|r| r.div_max).fold(0.0, f64::max);
        let bound = 10.0 * out.initial_divergence;
        a.push(Assertion::new("divergence_control", max_div <= bound, format!("max {max_div:e} vs 10 x initial {bound:e}")));
    }
    if cfg.march.controls {
        let psi = reps.iter().map(|r| r.psi_gap).fold(0.0, f64::max);
        a.push(Assertion::new("psi_gap", psi <= 0.25, format!("max {psi:e}")));
        let bad = reps.iter().filter(|r| !r.consumption_ok).count();
        a.push(Assertion::new("consumption", bad == 0, format!("{bad} failing steps")));
    }
    if cfg.march.max_principle {
        a.push(Assertion::new("max_principle", true, "asserted on every sample".into()));
    }
    a
}

/// The Robin benchmark at two coarse sizes and the configured one, which comes last.
pub fn boundary_suite(spec: BenchSpec) -> Result<Vec<RobinBenchmark>> {
    let coarse = [BenchSpec { nx: 16, nt: 20, depth: spec.depth }, BenchSpec { nx: 32, nt: 50, depth: spec.depth }];
    coarse
        .iter()
        .filter(|b| (b.nx, b.nt) != (spec.nx, spec.nt))
        .chain(std::iter::once(&spec))
        .map(|b| robin_heat_benchmark(b.nx, b.nt, b.depth))
        .collect()
}

/// `l_inf error <= 1e-3`, residual `<= 1e-6`, ratios past `m = 1` below 0.9.
pub fn bench_assertions(b: &RobinBenchmark) -> Vec<Assertion> {
    let worst = b.ratios.iter().skip(1).copied().fold(0.0, f64::max);
    vec![
        Assertion::new("robin_error", b.max_error <= 1e-3, format!("{:e} at nx={} nt={}", b.max_error, b.nx, b.nt)),
        Assertion::new("density_residual", b.residual <= 1e-6, format!("{:e}", b.residual)),
        Assertion::new("neumann_decay", worst < 0.9, format!("max ratio past m=1: {worst:e}")),
    ]
}

pub fn write_bench_csv(w: &mut impl Write, suite: &[RobinBenchmark]) -> Result<()> {
    writeln!(w, "nx,nt,depth,terms,max_error,residual,max_ratio")?;
    for b in suite {
        let r = b.ratios.iter().copied().fold(0.0, f64::max);
        writeln!(w, "{},{},{},{},{:e},{:e},{:e}", b.nx, b.nt, b.depth, b.terms.len(), b.max_error, b.residual, r)?;
    }
    Ok(())
}

fn run_bench(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let suite = boundary_suite(cfg.bench)?;
    write_bench_csv(&mut create(&dir.join("boundary.csv"))?, &suite)?;
    let assertions = bench_assertions(suite.last().expect("suite is not empty"));
    let ok = assertions.iter().all(|a| a.passed);
    let s = RunSummary {
        mode: cfg.mode,
        preset: cfg.preset,
        status: if ok { "ok" } else { "error" }.into(),
        error: (!ok).then(|| "boundary benchmark failed".into()),
        error_code: (!ok).then(|| "benchmark_failed".into()),
        steps: 0,
        final_time: 0.0,
        final_oracle_error: None,
        max_ratio: 0.0,
        initial_divergence: 0.0,
        max_divergence: 0.0,
        assertions,
        dumps: Vec::new(),
        bench: suite,
        defaults_applied: cfg.defaults_applied.clone(),
        config: cfg.clone(),
    };
    write_summary(dir, &s)?;
    Ok(s)
}

fn write_summary(dir: &Path, s: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(s).map_err(|e| Error::Io(e.to_string()))?;
    write_text(&dir.join("summary.json"), &(text + "\n"))
}

/// Runs `cfg`, writing `steps.csv`, `ledger.csv`, field dumps, `speed.svg`, `divergence.svg`
/// and `summary.json` into `dir`. Scheme failures are recorded in the summary; only
/// configuration and I/O problems are returned as errors.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    if cfg.mode == RunMode::BoundaryBench {
        return run_bench(cfg, dir);
    }
    let h = initial_field(cfg)?;
    let mut pending = cfg.dump_times.clone();
    pending.sort_by(f64::total_cmp);
    let mut rec = Recorder { cfg, dir, oracle: oracle(cfg), reports: Vec::new(), errors: Vec::new(), dumps: Vec::new(), pending, last: None, failure: None };
    if rec.pending.first().is_some_and(|&t| t <= 1e-12) {
        let err = rec.oracle.as_ref().map(|f| f(0.0).max_abs_diff(&h));
        rec.dump(&h, 0.0, err)?;
    }
    let result = global_march_observed(&h, &cfg.march, &mut |r, v| rec.observe(r, v));
    if let Some(e) = rec.failure.take() {
        return Err(e);
    }
    write_steps(&mut create(&dir.join("steps.csv"))?, &rec.reports, &rec.errors)?;
    let (v_end, t_end) = rec.last.clone().unwrap_or((h.clone(), 0.0));
    let (speed, div) = field_svgs(&v_end, t_end)?;
    write_text(&dir.join("speed.svg"), &speed)?;
    if let Some(div) = div {
        write_text(&dir.join("divergence.svg"), &div)?;
    }
    let max_ratio = rec.reports.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let max_divergence = rec.reports.iter().map(|r| r.div_max).fold(0.0, f64::max);
    let (status, error, error_code, assertions, initial_divergence) = match &result {
        Ok(out) => {
            write_ledger(&mut create(&dir.join("ledger.csv"))?, &out.ledger)?;
            let status = if out.breach.is_some() { "breach" } else { "ok" };
            let code = out.breach.as_ref().map(|_| "ledger_breach".to_string());
            (status, out.breach.clone(), code, assertions(cfg, out), out.initial_divergence)
        }
        Err(e) => ("error", Some(e.to_string()), Some(e.code().to_string()), Vec::new(), 0.0),
    };
    let s = RunSummary {
        mode: cfg.mode,
        preset: cfg.preset,
        status: status.into(),
        error,
        error_code,
        steps: rec.reports.len(),
        final_time: t_end,
        final_oracle_error: rec.errors.last().copied().flatten(),
        max_ratio,
        initial_divergence,
        max_divergence,
        assertions,
        dumps: rec.dumps.clone(),
        bench: Vec::new(),
        defaults_applied: cfg.defaults_applied.clone(),
        config: cfg.clone(),
    };
    write_summary(dir, &s)?;
    Ok(s)
}

/// Paths of the CSV artifacts a run may produce, for comparisons between runs.
pub fn csv_artifacts(dir: &Path) -> Vec<PathBuf> {
    ["steps.csv", "ledger.csv", "boundary.csv"].iter().map(|f| dir.join(f)).filter(|p| p.exists()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    #[test]
    fn zero_data_run_is_all_zero() {
        let dir = std::env::temp_dir().join(format!("navleray-zero-{}", std::process::id()));
        let cfg = parse_config_str("preset = \"gaussian_bump\"\namplitude = 0.0\npoints = 16\nmax_steps = 3\ndump_times = [0.0]\n").unwrap();
        let s = run(&cfg, &dir).unwrap();
        assert!(s.ok(), "{s:?}");
        assert_eq!(s.final_oracle_error, Some(0.0));
        let steps = fs::read_to_string(dir.join("steps.csv")).unwrap();
        // zero norms leave the cap unbounded, so one step covers the horizon
        let row = steps.lines().nth(1).unwrap();
        assert!(row.starts_with("1,1e0,1e0,"), "{row}");
        assert!(dir.join("field_000.csv").exists() && dir.join("summary.json").exists());
        fs::remove_dir_all(&dir).unwrap();
    }
}
