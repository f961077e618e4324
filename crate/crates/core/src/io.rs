//! CSV forms of density tables and paths.
//!
//! Numbers are written in shortest round-trip form. Header lines
//! `# key = value` carry metadata; readers ignore keys they do not know.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::Error;
use crate::mc::fmt_f64;
use crate::model::{SamplingDesign, Theta};
use crate::simulator::{PathKind, PathSample};
use crate::student_levy::DensityTable;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

/// `x,pdf,cdf` rows (tail nodes included) with the table's provenance.
pub fn table_csv(table: &DensityTable) -> String {
    let g = table.grid();
    let d = table.diagnostics();
    let mut out = String::new();
    let _ = writeln!(out, "# nu = {}", fmt_f64(table.nu()));
    let _ = writeln!(out, "# h = {}", fmt_f64(table.h()));
    let _ = writeln!(out, "# x_min = {}", fmt_f64(g.x_min));
    let _ = writeln!(out, "# x_max = {}", fmt_f64(g.x_max));
    let _ = writeln!(out, "# points = {}", g.points);
    let _ = writeln!(out, "# u_max = {}", fmt_f64(g.u_max));
    let _ = writeln!(out, "# u_points = {}", g.u_points);
    let _ = writeln!(out, "# tails = {}", g.tails.is_some());
    let _ = writeln!(
        out,
        "# total_mass = {}",
        fmt_f64(d.grid_mass + d.outside_mass)
    );
    let _ = writeln!(out, "# clipped_mass = {}", fmt_f64(d.clipped_mass));
    let _ = writeln!(out, "# unreachable_mass = {}", fmt_f64(d.unreachable_mass));
    out.push_str("x,pdf,cdf\n");
    for (x, p, c) in table.rows() {
        let _ = writeln!(out, "{},{},{}", fmt_f64(x), fmt_f64(p), fmt_f64(c));
    }
    out
}

/// Path as `t,X_1..X_q,Y` with design, kind and truth in the header.
/// `extra` adds provenance lines (e.g. the seed).
pub fn path_csv(path: &PathSample, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let d = &path.design;
    let _ = writeln!(out, "# n = {}", d.n);
    let _ = writeln!(out, "# T = {}", fmt_f64(d.t_n));
    let _ = writeln!(out, "# B = {}", fmt_f64(d.b_n));
    let kind = match path.kind {
        PathKind::Levels => "levels",
        PathKind::Drift => "drift",
    };
    let _ = writeln!(out, "# kind = {kind}");
    if let Some(t) = &path.truth {
        let _ = writeln!(out, "# truth_mu = {}", join(&t.mu));
        let _ = writeln!(out, "# truth_sigma = {}", fmt_f64(t.sigma));
        let _ = writeln!(out, "# truth_nu = {}", fmt_f64(t.nu));
    }
    for (k, v) in extra {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for w in &path.warnings {
        let _ = writeln!(out, "# warning = {w}");
    }
    out.push('t');
    for k in 1..=path.q() {
        let _ = write!(out, ",X_{k}");
    }
    out.push_str(",Y\n");
    for j in 0..path.responses.len() {
        out.push_str(&fmt_f64(path.times[j]));
        for v in &path.covariates[j] {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push(',');
        out.push_str(&fmt_f64(path.responses[j]));
        out.push('\n');
    }
    out
}

fn io_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Io(format!("line {line}: {msg}"))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

/// Parse a path CSV. Missing `n` is inferred from the time spacing, missing
/// `T` from the last time, missing `B` defaults to `T`.
pub fn read_path_csv(text: &str) -> Result<PathSample, Error> {
    let mut meta = BTreeMap::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                if k.trim() != "warning" {
                    meta.insert(k.trim().to_string(), (line_no, v.trim().to_string()));
                }
            }
            continue;
        }
        match &header {
            None => header = Some(line.split(',').map(|s| s.trim().to_string()).collect()),
            Some(h) => {
                let row = parse_list(line).map_err(|e| io_err(line_no, e))?;
                if row.len() != h.len() {
                    return Err(io_err(
                        line_no,
                        format!("expected {} fields, found {}", h.len(), row.len()),
                    ));
                }
                rows.push(row);
            }
        }
    }
    let header = header.ok_or_else(|| Error::Io("missing header row".into()))?;
    let width = header.len();
    if width < 3 || header[0] != "t" || header[width - 1] != "Y" {
        return Err(Error::Io(format!(
            "header must be t,X_1..X_q,Y, found {}",
            header.join(",")
        )));
    }
    if rows.len() < 2 {
        return Err(Error::Io("a path needs at least two rows".into()));
    }
    let get = |k: &str| -> Result<Option<f64>, Error> {
        match meta.get(k) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|e| io_err(*line, format!("{k}: {e}"))),
        }
    };
    let n = match get("n")? {
        Some(n) if n >= 1.0 && n.fract() == 0.0 => n as usize,
        Some(n) => return Err(Error::Io(format!("n = {n} must be a positive integer"))),
        None => (1.0 / (rows[1][0] - rows[0][0])).round() as usize,
    };
    let t_n = get("T")?.unwrap_or(rows[rows.len() - 1][0]);
    let b_n = get("B")?.unwrap_or(t_n);
    let kind = match meta.get("kind").map(|(_, v)| v.as_str()) {
        None | Some("levels") => PathKind::Levels,
        Some("drift") => PathKind::Drift,
        Some(other) => return Err(Error::Io(format!("unknown path kind {other:?}"))),
    };
    let truth = match (meta.get("truth_mu"), get("truth_sigma")?, get("truth_nu")?) {
        (Some((line, mu)), Some(sigma), Some(nu)) => Some(Theta::new(
            parse_list(mu).map_err(|e| io_err(*line, e))?,
            sigma,
            nu,
        )),
        _ => None,
    };
    let path = PathSample {
        design: SamplingDesign::new(n, t_n, b_n),
        kind,
        times: rows.iter().map(|r| r[0]).collect(),
        covariates: rows.iter().map(|r| r[1..width - 1].to_vec()).collect(),
        responses: rows.iter().map(|r| r[width - 1]).collect(),
        truth,
        warnings: Vec::new(),
    };
    if path.steps() < path.design.steps() {
        return Err(Error::Io(format!(
            "path has {} steps but n = {n}, T = {t_n} needs {}",
            path.steps(),
            path.design.steps()
        )));
    }
    if let Some(p) = path.problems().into_iter().next() {
        return Err(Error::Io(p.to_string()));
    }
    Ok(path)
}
