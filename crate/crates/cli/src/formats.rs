//! Text file formats.
//!
//! Numbers are written in Rust's shortest round-trip decimal form, so every
//! finite value reads back bit-for-bit.
//!
//! * Driver CSV: `t,w_1,…,w_d`, one row per grid point, plus a companion
//!   `*_w2.csv` with `s,t,w2_11,…,w2_dd` for every grid pair `s ≤ t` (ordered by
//!   `t`, then `s`). The Hölder exponent is not part of the CSV pair.
//! * Driver JSON: `{grid: {t0, t1, n_points}, gamma, dim, w, w2}` where `w` has
//!   one row per grid point and `w2` one flattened `d × d` matrix per pair in
//!   the CSV order.
//! * Trajectory CSV `t,y_1,…,y_N`; controlled path CSV `t,y_…,yp_…`; graph CSV
//!   `xi_u_…,h_u_…,converged,iterations`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use roughflow_core::controlled::ControlledPath;
use roughflow_core::manifold::GraphSample;
use roughflow_core::rough_driver::{RoughPath, TimeGrid, DEFAULT_CHEN_TOL};
use serde::{Deserialize, Serialize};

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn parse_num(s: &str, file: &Path, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| anyhow!("{}:{line}: `{s}` is not a number", file.display()))
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&num(v));
    }
    out.push('\n');
}

fn header(out: &mut String, cols: impl IntoIterator<Item = String>) {
    out.push_str(&cols.into_iter().collect::<Vec<_>>().join(","));
    out.push('\n');
}

/// Companion second-level path of a first-level driver CSV.
pub fn w2_companion(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_w2.csv"))
}

pub fn driver_csv(p: &RoughPath) -> (String, String) {
    let (grid, d, _, w, w2) = p.to_parts();
    let n = grid.len();
    let mut a = String::new();
    header(
        &mut a,
        std::iter::once("t".into()).chain((1..=d).map(|i| format!("w_{i}"))),
    );
    for i in 0..n {
        push_row(
            &mut a,
            std::iter::once(grid.time(i)).chain(w[i * d..(i + 1) * d].iter().copied()),
        );
    }
    let mut b = String::new();
    header(
        &mut b,
        ["s".to_string(), "t".to_string()]
            .into_iter()
            .chain((1..=d).flat_map(|i| (1..=d).map(move |j| format!("w2_{i}{j}")))),
    );
    let dd = d * d;
    let mut at = 0;
    for t in 0..n {
        for s in 0..=t {
            push_row(
                &mut b,
                [grid.time(s), grid.time(t)]
                    .into_iter()
                    .chain(w2[at..at + dd].iter().copied()),
            );
            at += dd;
        }
    }
    (a, b)
}

/// Raw parts of a driver file: `(grid, dim, gamma, values, packed second level)`.
pub type DriverParts = (TimeGrid, usize, f64, Vec<f64>, Vec<f64>);

fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
}

pub fn parse_driver_csv(
    w_text: &str,
    w2_text: &str,
    gamma: f64,
    w_path: &Path,
    w2_path: &Path,
) -> Result<DriverParts> {
    let head = w_text
        .lines()
        .next()
        .ok_or_else(|| anyhow!("{}: empty file", w_path.display()))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    ensure!(
        cols.len() >= 2 && cols[0] == "t",
        "{}:1: header must be `t,w_1,…`",
        w_path.display()
    );
    let d = cols.len() - 1;
    let mut times = Vec::new();
    let mut w = Vec::new();
    for (line, row) in rows(w_text) {
        let f: Vec<&str> = row.split(',').collect();
        ensure!(
            f.len() == d + 1,
            "{}:{line}: expected {} fields, found {}",
            w_path.display(),
            d + 1,
            f.len()
        );
        times.push(parse_num(f[0], w_path, line)?);
        for v in &f[1..] {
            w.push(parse_num(v, w_path, line)?);
        }
    }
    ensure!(
        times.len() >= 2,
        "{}: need at least two grid points",
        w_path.display()
    );
    let n = times.len();
    let grid = TimeGrid::new(times[0], times[n - 1], n)?;
    for (i, t) in times.iter().enumerate() {
        ensure!(
            (grid.time(i) - t).abs() <= 1e-9 * grid.step(),
            "{}: time column is not uniform at row {}",
            w_path.display(),
            i + 2
        );
    }
    let dd = d * d;
    let mut w2 = Vec::with_capacity(n * (n + 1) / 2 * dd);
    let mut pair = (0usize, 0usize);
    for (line, row) in rows(w2_text) {
        let f: Vec<&str> = row.split(',').collect();
        ensure!(
            f.len() == dd + 2,
            "{}:{line}: expected {} fields, found {}",
            w2_path.display(),
            dd + 2,
            f.len()
        );
        let (s, t) = pair;
        ensure!(
            t < n,
            "{}:{line}: more pairs than the grid has",
            w2_path.display()
        );
        let (fs, ft) = (
            parse_num(f[0], w2_path, line)?,
            parse_num(f[1], w2_path, line)?,
        );
        ensure!(
            fs == grid.time(s) && ft == grid.time(t),
            "{}:{line}: expected pair ({}, {})",
            w2_path.display(),
            grid.time(s),
            grid.time(t)
        );
        for v in &f[2..] {
            w2.push(parse_num(v, w2_path, line)?);
        }
        pair = if s == t { (0, t + 1) } else { (s + 1, t) };
    }
    ensure!(
        pair == (0, n),
        "{}: second level is incomplete",
        w2_path.display()
    );
    Ok((grid, d, gamma, w, w2))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    t0: f64,
    t1: f64,
    n_points: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriverDoc {
    grid: GridDoc,
    gamma: f64,
    dim: usize,
    w: Vec<Vec<f64>>,
    w2: Vec<Vec<f64>>,
}

pub fn driver_json(p: &RoughPath) -> String {
    let (grid, d, gamma, w, w2) = p.to_parts();
    let doc = DriverDoc {
        grid: GridDoc {
            t0: grid.t0(),
            t1: grid.t1(),
            n_points: grid.len(),
        },
        gamma,
        dim: d,
        w: w.chunks(d).map(<[f64]>::to_vec).collect(),
        w2: w2.chunks(d * d).map(<[f64]>::to_vec).collect(),
    };
    let mut s = serde_json::to_string(&doc).expect("driver document serialises");
    s.push('\n');
    s
}

pub fn parse_driver_json(text: &str, path: &Path) -> Result<DriverParts> {
    let doc: DriverDoc = serde_json::from_str(text)
        .with_context(|| format!("{}: malformed driver document", path.display()))?;
    let grid = TimeGrid::new(doc.grid.t0, doc.grid.t1, doc.grid.n_points)?;
    let d = doc.dim;
    ensure!(
        doc.w.iter().all(|r| r.len() == d),
        "{}: every `w` row must have {d} entries",
        path.display()
    );
    ensure!(
        doc.w2.iter().all(|r| r.len() == d * d),
        "{}: every `w2` row must have {} entries",
        path.display(),
        d * d
    );
    Ok((grid, d, doc.gamma, doc.w.concat(), doc.w2.concat()))
}

/// Read a driver without auditing it. CSV files take their Hölder exponent
/// from `gamma`; JSON files carry their own.
pub fn read_driver_parts(path: &Path, gamma: Option<f64>) -> Result<DriverParts> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_driver_json(&text, path),
        Some("csv") => {
            let companion = w2_companion(path);
            let w2 = fs::read_to_string(&companion)
                .with_context(|| format!("cannot read {}", companion.display()))?;
            let gamma = gamma.ok_or_else(|| {
                anyhow!(
                    "{}: CSV drivers need an explicit Hölder exponent",
                    path.display()
                )
            })?;
            parse_driver_csv(&text, &w2, gamma, path, &companion)
        }
        _ => bail!("{}: driver files must end in .json or .csv", path.display()),
    }
}

/// Read and audit a driver (shapes, diagonal, Chen relation).
pub fn read_driver(path: &Path, gamma: Option<f64>) -> Result<RoughPath> {
    let (grid, d, g, w, w2) = read_driver_parts(path, gamma)?;
    RoughPath::from_parts(grid, d, g, w, w2, DEFAULT_CHEN_TOL)
        .with_context(|| format!("{}", path.display()))
}

pub fn read_driver_unchecked(path: &Path, gamma: Option<f64>) -> Result<RoughPath> {
    let (grid, d, g, w, w2) = read_driver_parts(path, gamma)?;
    Ok(RoughPath::from_parts_unchecked(grid, d, g, w, w2)?)
}

pub fn trajectory_csv(samples: &[(f64, Vec<f64>)]) -> String {
    let n = samples.first().map_or(0, |s| s.1.len());
    let mut out = String::new();
    header(
        &mut out,
        std::iter::once("t".into()).chain((1..=n).map(|k| format!("y_{k}"))),
    );
    for (t, y) in samples {
        push_row(&mut out, std::iter::once(*t).chain(y.iter().copied()));
    }
    out
}

#[derive(Debug, Serialize)]
struct TrajectoryDoc<'a> {
    t: Vec<f64>,
    y: Vec<&'a [f64]>,
}

pub fn trajectory_json(samples: &[(f64, Vec<f64>)]) -> String {
    let doc = TrajectoryDoc {
        t: samples.iter().map(|s| s.0).collect(),
        y: samples.iter().map(|s| s.1.as_slice()).collect(),
    };
    let mut s = serde_json::to_string(&doc).expect("trajectory serialises");
    s.push('\n');
    s
}

/// `t, y_1..y_N, yp_{1,1}..yp_{N,d}` for a single-column controlled path.
pub fn controlled_csv(cp: &ControlledPath) -> Result<String> {
    ensure!(
        cp.cols() == 1,
        "controlled path CSV needs a single column, found {}",
        cp.cols()
    );
    let (m, d) = (cp.modes(), cp.dim());
    let mut out = String::new();
    header(
        &mut out,
        std::iter::once("t".into())
            .chain((1..=m).map(|k| format!("y_{k}")))
            .chain((1..=m).flat_map(|k| (1..=d).map(move |j| format!("yp_{k}_{j}")))),
    );
    for i in 0..cp.grid().len() {
        push_row(
            &mut out,
            std::iter::once(cp.grid().time(i))
                .chain(cp.value(i).iter().copied())
                .chain(cp.derivative(i).iter().copied()),
        );
    }
    Ok(out)
}

pub fn graph_csv(samples: &[GraphSample]) -> String {
    let (nu, ns) = samples
        .first()
        .map_or((0, 0), |s| (s.xi_u.len(), s.h_u.len()));
    let mut out = String::new();
    header(
        &mut out,
        (1..=nu)
            .map(|k| format!("xi_u_{k}"))
            .chain((1..=ns).map(|k| format!("h_u_{k}")))
            .chain(["converged".to_string(), "iterations".to_string()]),
    );
    for s in samples {
        let mut line = String::new();
        for v in s.xi_u.iter().chain(&s.h_u) {
            let _ = write!(line, "{},", num(*v));
        }
        let _ = writeln!(line, "{},{}", s.converged, s.iterations);
        out.push_str(&line);
    }
    out
}

#[derive(Debug, Serialize)]
struct GraphRow<'a> {
    xi_u: &'a [f64],
    h_u: &'a [f64],
    converged: bool,
    iterations: usize,
    max_rate: f64,
    series_gap: f64,
    tail_bound: f64,
    failure: Option<&'a str>,
}

pub fn graph_json(samples: &[GraphSample]) -> String {
    let rows: Vec<GraphRow> = samples
        .iter()
        .map(|s| GraphRow {
            xi_u: &s.xi_u,
            h_u: &s.h_u,
            converged: s.converged,
            iterations: s.iterations,
            max_rate: s.max_rate,
            series_gap: s.series_gap,
            tail_bound: s.tail_bound,
            failure: s.failure.as_deref(),
        })
        .collect();
    let mut s = serde_json::to_string(&rows).expect("graph serialises");
    s.push('\n');
    s
}
