use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use navleray::config::{BenchSpec, DumpFormat, output_dir, parse_config};
use navleray::kernels::{GaussianKernelSpec, heat_kernel, heat_kernel_grad, poisson_kernel, poisson_kernel_grad};
use navleray::parametrix::constant_drift_gamma;
use navleray::run::{bench_assertions, boundary_suite, run, write_bench_csv};
use navleray::validate::validate;
use navleray::{Error, Result};

#[derive(Parser)]
#[command(name = "navleray", version, about = "Time-discretised Navier-Stokes scheme in Leray form")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    /// Poisson kernel K_n(x)
    Poisson,
    /// Gradient of K_n
    PoissonGrad,
    /// Gaussian heat kernel N(x - center)
    Heat,
    /// Gradient in x of the heat kernel
    HeatGrad,
    /// Constant-drift fundamental solution with drift --drift
    DriftGamma,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration, writing CSVs, field dumps, SVGs and summary.json
    Run {
        config: PathBuf,
        /// Output directory (overrides the config; NAVLERAY_OUT overrides both)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Field dump payload
        #[arg(long, value_enum)]
        dump_format: Option<Format>,
    },
    /// Run the oracle and property suites
    Validate {
        /// Only this suite (grid_fields, kernels, parametrix, linparab, control, scheme, boundary)
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print a JSON array instead of tab-separated lines
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a kernel at points read from stdin (one point per line), CSV on stdout
    Kernel {
        #[arg(value_enum)]
        kind: KernelKind,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        diffusion: f64,
        #[arg(long, default_value_t = 1.0)]
        elapsed: f64,
        /// Comma-separated drift vector (drift-gamma)
        #[arg(long, value_delimiter = ',')]
        drift: Vec<f64>,
        /// Comma-separated source point y (heat kernels)
        #[arg(long, value_delimiter = ',')]
        center: Vec<f64>,
    },
    /// Robin heat benchmark suite for the boundary-integral solver
    BoundaryBench {
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 200)]
        nt: usize,
        #[arg(long, default_value_t = 32)]
        depth: usize,
        /// Also write boundary.csv into this directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(code: &str, msg: &str) -> ExitCode {
    eprintln!("navleray: error: {code}: {}", msg.replace('\n', " "));
    ExitCode::FAILURE
}

fn parse_point(line: &str, dim: usize, line_no: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(str::parse).collect();
    let vals = vals.map_err(|_| Error::Parse { line: line_no, msg: format!("bad number in `{line}`") })?;
    if vals.len() != dim {
        return Err(Error::Parse { line: line_no, msg: format!("expected {dim} coordinates, got {}", vals.len()) });
    }
    Ok(vals)
}

fn kernel_cmd(kind: KernelKind, dim: usize, diffusion: f64, elapsed: f64, drift: &[f64], center: &[f64]) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Validation(vec![format!("dim {dim} not in 1..=3")]));
    }
    let y = if center.is_empty() { vec![0.0; dim] } else { center.to_vec() };
    let b = if drift.is_empty() { vec![0.0; dim] } else { drift.to_vec() };
    if y.len() != dim || b.len() != dim {
        return Err(Error::Validation(vec!["--center and --drift need dim entries".into()]));
    }
    let spec = GaussianKernelSpec { diffusion, elapsed };
    let out = std::io::stdout();
    let mut w = std::io::BufWriter::new(out.lock());
    let coords: Vec<String> = (0..dim).map(|a| format!("x{a}")).collect();
    let values: Vec<String> = match kind {
        KernelKind::PoissonGrad | KernelKind::HeatGrad => (0..dim).map(|a| format!("g{a}")).collect(),
        _ => vec!["value".into()],
    };
    writeln!(w, "{},{}", coords.join(","), values.join(","))?;
    for (i, line) in std::io::stdin().lock().lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let x = parse_point(&line, dim, i + 1)?;
        let v = match kind {
            KernelKind::Poisson => vec![poisson_kernel(dim, &x)?],
            KernelKind::PoissonGrad => poisson_kernel_grad(dim, &x)?,
            KernelKind::Heat => vec![heat_kernel(spec, &x, &y)?],
            KernelKind::HeatGrad => heat_kernel_grad(spec, &x, &y)?,
            KernelKind::DriftGamma => vec![constant_drift_gamma(diffusion, &b, elapsed, &x, &y)?],
        };
        let xs: Vec<String> = x.iter().map(|c| format!("{c:e}")).collect();
        let vs: Vec<String> = v.iter().map(|c| format!("{c:e}")).collect();
        writeln!(w, "{},{}", xs.join(","), vs.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            return fail("usage", text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
        }
    };
    match cli.cmd {
        Cmd::Run { config, out, dump_format } => {
            let mut cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(e.code(), &e.to_string()),
            };
            for note in &cfg.defaults_applied {
                eprintln!("navleray: note: {note}");
            }
            if let Some(f) = dump_format {
                cfg.dump_format = match f {
                    Format::Csv => DumpFormat::Csv,
                    Format::Binary => DumpFormat::Binary,
                };
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            let dir = output_dir(&cfg);
            match run(&cfg, &dir) {
                Ok(s) => {
                    println!("status {} steps {} t {:e} output {}", s.status, s.steps, s.final_time, dir.display());
                    for a in &s.assertions {
                        println!("{}\t{}\t{}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
                    }
                    if s.ok() {
                        ExitCode::SUCCESS
                    } else {
                        fail(s.error_code.as_deref().unwrap_or("run_failed"), s.error.as_deref().unwrap_or(""))
                    }
                }
                Err(e) => fail(e.code(), &e.to_string()),
            }
        }
        Cmd::Validate { filter, seed, json } => match validate(filter.as_deref(), seed) {
            Ok(checks) => {
                if json {
                    println!("{}", serde_json::to_string_pretty(&checks).expect("plain data serialises"));
                } else {
                    for c in &checks {
                        println!("{}\t{}\t{}\t{}", if c.passed { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
                    }
                }
                let failed = checks.iter().filter(|c| !c.passed).count();
                if failed == 0 { ExitCode::SUCCESS } else { fail("validation_failed", &format!("{failed} of {} checks failed", checks.len())) }
            }
            Err(e) => fail(e.code(), &e.to_string()),
        },
        Cmd::Kernel { kind, dim, diffusion, elapsed, drift, center } => match kernel_cmd(kind, dim, diffusion, elapsed, &drift, &center) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e.code(), &e.to_string()),
        },
        Cmd::BoundaryBench { nx, nt, depth, out } => {
            let suite = match boundary_suite(BenchSpec { nx, nt, depth }) {
                Ok(s) => s,
                Err(e) => return fail(e.code(), &e.to_string()),
            };
            let mut stdout = std::io::stdout();
            if let Err(e) = write_bench_csv(&mut stdout, &suite) {
                return fail(e.code(), &e.to_string());
            }
            if let Some(dir) = out {
                let res = std::fs::create_dir_all(&dir)
                    .map_err(Error::from)
                    .and_then(|_| std::fs::File::create(dir.join("boundary.csv")).map_err(Error::from))
                    .and_then(|mut f| write_bench_csv(&mut f, &suite));
                if let Err(e) = res {
                    return fail(e.code(), &e.to_string());
                }
            }
            let checks = bench_assertions(suite.last().expect("suite is not empty"));
            for a in &checks {
                println!("{}\t{}\t{}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            if checks.iter().all(|a| a.passed) { ExitCode::SUCCESS } else { fail("benchmark_failed", "Robin benchmark outside tolerance") }
        }
    }
}
