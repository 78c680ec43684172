//! Artifact formats: field dumps, step and ledger CSVs, SVG heatmaps.
//!
//! All floats are written with Rust's shortest round-trip `{:e}` formatting, so
//! identical runs give byte-identical files.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::config::DumpFormat;
use crate::control::BoundsLedger;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Topology, VectorField, divergence};
use crate::scheme::StepReport;

pub const FIELD_MAGIC: &str = "navleray-field 1";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Writes a header of `key value` lines ending in `end`, then the payload:
/// one CSV line of components per sample, or little-endian `f64` per component per sample.
/// Samples are in row-major order (last axis fastest).
pub fn write_field(w: &mut impl Write, v: &VectorField, time: f64, format: DumpFormat) -> Result<()> {
    let g = v.grid;
    let payload = match format {
        DumpFormat::Csv => "csv",
        DumpFormat::Binary => "f64le",
    };
    write!(
        w,
        "{FIELD_MAGIC}\ndim {}\ntopology {}\nextent {:e}\npoints {}\ncomponents {}\ntime {:e}\npayload {payload}\nend\n",
        g.dim(),
        g.topology().as_str(),
        g.extent(),
        g.points_per_axis(),
        v.dim(),
        time
    )?;
    match format {
        DumpFormat::Csv => {
            let mut line = String::new();
            for p in 0..g.len() {
                line.clear();
                for (c, comp) in v.comps.iter().enumerate() {
                    if c > 0 {
                        line.push(',');
                    }
                    write!(line, "{:e}", comp.values[p]).expect("string write");
                }
                line.push('\n');
                w.write_all(line.as_bytes())?;
            }
        }
        DumpFormat::Binary => {
            let mut buf = Vec::with_capacity(g.len() * v.dim() * 8);
            for p in 0..g.len() {
                for comp in &v.comps {
                    buf.extend_from_slice(&comp.values[p].to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

fn header_line(r: &mut impl BufRead, line_no: usize) -> Result<String> {
    let mut s = String::new();
    if r.read_line(&mut s)? == 0 {
        return Err(parse_err(line_no, "unexpected end of header"));
    }
    Ok(s.trim_end().to_string())
}

/// Reads a dump written by [`write_field`]; returns the field and its time stamp.
pub fn read_field(r: &mut impl BufRead) -> Result<(VectorField, f64)> {
    let mut line_no = 1;
    if header_line(r, line_no)? != FIELD_MAGIC {
        return Err(parse_err(1, "missing field-dump magic line"));
    }
    let (mut dim, mut topo, mut extent, mut points, mut comps, mut time, mut payload) = (None, None, None, None, None, 0.0, None);
    loop {
        line_no += 1;
        let line = header_line(r, line_no)?;
        if line == "end" {
            break;
        }
        let (k, v) = line.split_once(' ').ok_or_else(|| parse_err(line_no, format!("expected `key value`, got `{line}`")))?;
        let num = |v: &str| v.parse::<f64>().map_err(|_| parse_err(line_no, format!("bad number `{v}`")));
        let int = |v: &str| v.parse::<usize>().map_err(|_| parse_err(line_no, format!("bad integer `{v}`")));
        match k {
            "dim" => dim = Some(int(v)?),
            "topology" => {
                topo = Some(match v {
                    "torus" => Topology::Torus,
                    "free_space_truncated" => Topology::FreeSpaceTruncated,
                    _ => return Err(parse_err(line_no, format!("unknown topology `{v}`"))),
                })
            }
            "extent" => extent = Some(num(v)?),
            "points" => points = Some(int(v)?),
            "components" => comps = Some(int(v)?),
            "time" => time = num(v)?,
            "payload" => payload = Some(v.to_string()),
            _ => return Err(parse_err(line_no, format!("unknown header key `{k}`"))),
        }
    }
    let missing = |what: &str| parse_err(line_no, format!("header lacks `{what}`"));
    let grid = Grid::new(dim.ok_or_else(|| missing("dim"))?, extent.ok_or_else(|| missing("extent"))?, points.ok_or_else(|| missing("points"))?, topo.ok_or_else(|| missing("topology"))?)?;
    let nc = comps.ok_or_else(|| missing("components"))?;
    if nc != grid.dim() {
        return Err(parse_err(line_no, format!("{nc} components on a {}-dimensional grid", grid.dim())));
    }
    let mut data = vec![vec![0.0; grid.len()]; nc];
    match payload.as_deref() {
        Some("csv") => {
            for p in 0..grid.len() {
                let mut s = String::new();
                line_no += 1;
                if r.read_line(&mut s)? == 0 {
                    return Err(parse_err(line_no, "payload too short"));
                }
                let vals: Vec<&str> = s.trim_end().split(',').collect();
                if vals.len() != nc {
                    return Err(parse_err(line_no, format!("expected {nc} values")));
                }
                for (c, v) in vals.iter().enumerate() {
                    data[c][p] = v.parse().map_err(|_| parse_err(line_no, format!("bad number `{v}`")))?;
                }
            }
        }
        Some("f64le") => {
            let mut buf = vec![0u8; grid.len() * nc * 8];
            r.read_exact(&mut buf).map_err(|_| parse_err(line_no + 1, "binary payload too short"))?;
            for (i, chunk) in buf.chunks_exact(8).enumerate() {
                data[i % nc][i / nc] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
        _ => return Err(missing("payload csv|f64le")),
    }
    let comps = data.into_iter().map(|values| ScalarField { grid, values }).collect();
    let v = VectorField::from_comps(comps)?;
    v.check_finite()?;
    Ok((v, time))
}

pub const STEP_HEADER: &str = "l,rho,t,iterations,retries,final_ratio,max_ratio,delta_sum,sup_vr,h2_vr,sup_r,h2_r,sup_v,h2_v,div_max,integral_magnitude,psi_gap,consumption_ok,oracle_error";

/// One CSV row per step; `oracle_error` is empty when no closed form is known.
pub fn write_steps(w: &mut impl Write, reports: &[StepReport], oracle: &[Option<f64>]) -> Result<()> {
    writeln!(w, "{STEP_HEADER}")?;
    for (i, r) in reports.iter().enumerate() {
        let o = oracle.get(i).copied().flatten().map(|e| format!("{e:e}")).unwrap_or_default();
        writeln!(
            w,
            "{},{:e},{:e},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            r.l,
            r.rho,
            r.t,
            r.iterations,
            r.retries,
            r.final_ratio,
            r.max_ratio,
            r.delta_sum,
            r.sup_vr,
            r.h2_vr,
            r.sup_r,
            r.h2_r,
            r.sup_v,
            r.h2_v,
            r.div_max,
            r.integral_magnitude,
            r.psi_gap,
            u8::from(r.consumption_ok),
            o
        )?;
    }
    Ok(())
}

/// Breach flags written as 0/1 columns, in this order.
pub const BREACH_KINDS: [&str; 7] = ["c12", "sup_v", "h2_vr", "sup_r", "h2_r", "psi_gap", "consumption"];

pub fn write_ledger(w: &mut impl Write, ledger: &BoundsLedger) -> Result<()> {
    write!(w, "l,rho,c12_l,h2_budget,h2_vr,h2_r,sup_vr,sup_v,sup_r")?;
    for k in BREACH_KINDS {
        write!(w, ",breach_{k}")?;
    }
    writeln!(w)?;
    for row in &ledger.rows {
        write!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            row.l, row.rho, row.c12_l, row.h2_budget, row.h2_vr, row.h2_r, row.sup_vr, row.sup_v, row.sup_r
        )?;
        for k in BREACH_KINDS {
            write!(w, ",{}", u8::from(row.breaches.iter().any(|b| b == k)))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Values on the midplane: the whole field in 2D, the `x_3 = 0` slice in 3D, one row in 1D.
pub fn midplane(f: &ScalarField) -> (usize, usize, Vec<f64>) {
    let g = f.grid;
    let n = g.points_per_axis();
    match g.dim() {
        1 => (n, 1, f.values.clone()),
        2 => (n, n, f.values.clone()),
        _ => {
            let k = n / 2;
            let vals = (0..n * n).map(|p| f.values[g.ravel([p / n, p % n, k])]).collect();
            (n, n, vals)
        }
    }
}

fn color(t: f64) -> (u8, u8, u8) {
    // dark blue -> teal -> yellow
    const STOPS: [(f64, f64, f64); 4] = [(0.05, 0.03, 0.35), (0.13, 0.45, 0.56), (0.4, 0.75, 0.4), (0.99, 0.9, 0.15)];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * 3.0;
    let i = (t.floor() as usize).min(2);
    let w = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |x: f64, y: f64| ((x + (y - x) * w) * 255.0).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap with one rect per sample (axis 0 left to right, axis 1 bottom to top) and a min/max legend.
pub fn heatmap_svg(f: &ScalarField, title: &str) -> String {
    let (nx, ny, vals) = midplane(f);
    let cell = (512 / nx.max(ny)).max(2);
    let (w, h) = (nx * cell, ny * cell.max(if ny == 1 { 24 } else { 1 }));
    let ch = h / ny;
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" shape-rendering=\"crispEdges\">", w, h + 40).unwrap();
    writeln!(s, "<text x=\"4\" y=\"14\" font-family=\"monospace\" font-size=\"12\">{title}</text>").unwrap();
    for j in 0..ny {
        for i in 0..nx {
            // row-major sample (i, j) has index i * ny + j
            let v = vals[i * ny + j];
            let (r, g, b) = color((v - lo) / span);
            writeln!(s, "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{ch}\" fill=\"#{r:02x}{g:02x}{b:02x}\"/>", i * cell, 20 + (ny - 1 - j) * ch).unwrap();
        }
    }
    writeln!(s, "<text x=\"4\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">min {lo:e}  max {hi:e}</text>", h + 36).unwrap();
    s.push_str("</svg>\n");
    s
}

/// Pointwise Euclidean magnitude `|v|`.
pub fn magnitude(v: &VectorField) -> ScalarField {
    let values = (0..v.grid.len()).map(|p| v.comps.iter().map(|c| c.values[p] * c.values[p]).sum::<f64>().sqrt()).collect();
    ScalarField { grid: v.grid, values }
}

/// `(|v| heatmap, divergence heatmap)`; the latter only for `dim >= 2`.
pub fn field_svgs(v: &VectorField, t: f64) -> Result<(String, Option<String>)> {
    let mag = heatmap_svg(&magnitude(v), &format!("|v| at t = {t:.4}"));
    let div = if v.grid.dim() >= 2 { Some(heatmap_svg(&divergence(v)?, &format!("div v at t = {t:.4}"))) } else { None };
    Ok((mag, div))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::LedgerRow;

    fn sample() -> VectorField {
        let g = Grid::new(2, 1.0, 8, Topology::Torus).unwrap();
        VectorField::from_fn(g, |x, c| x[0] * 0.1 + c as f64 - x[1] / 3.0)
    }

    #[test]
    fn dumps_round_trip() {
        let v = sample();
        for fmt in [DumpFormat::Csv, DumpFormat::Binary] {
            let mut buf = Vec::new();
            write_field(&mut buf, &v, 0.25, fmt).unwrap();
            let (w, t) = read_field(&mut buf.as_slice()).unwrap();
            assert_eq!(t, 0.25);
            assert_eq!(w, v);
        }
    }

    #[test]
    fn header_errors_name_the_line() {
        let e = read_field(&mut "navleray-field 1\ndim 2\nbogus 1\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn ledger_csv_flags() {
        let mut l = BoundsLedger::new(10.0);
        l.rows.push(LedgerRow { l: 1, rho: 0.5, breaches: vec!["sup_r".into()], ..Default::default() });
        let mut buf = Vec::new();
        write_ledger(&mut buf, &l).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "1,5e-1,0e0,0e0,0e0,0e0,0e0,0e0,0e0,0,0,0,1,0,0,0");
    }

    #[test]
    fn svg_has_one_rect_per_sample() {
        let (mag, div) = field_svgs(&sample(), 0.0).unwrap();
        assert_eq!(mag.matches("<rect").count(), 64);
        assert!(div.unwrap().starts_with("<svg"));
    }
}
