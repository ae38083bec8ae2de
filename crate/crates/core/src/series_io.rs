//! Columnar text files for series and result tables, plus JSON manifests.
//!
//! Floats are written with 17 significant digits so every file round-trips
//! exactly and reruns are byte-comparable.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{EinsteinResult, SweepRow};
use crate::observables::{MsdSeries, SeriesManifest, WindowedPoint};
use crate::thouless::ThoulessRow;
use crate::units::HBAR;

pub const SERIES_HEADER: &str = "time_fs,msd_nm2,xbar_nm,ybar_nm,norm,ipr,boundary_mass";
pub const SWEEP_HEADER: &str = "param,D_nm2_fs,alpha,stderr,n_seeds,flags";
pub const THOULESS_HEADER: &str = "A,D_analytic,D_empirical,stderr,n_walkers";
pub const WINDOWED_HEADER: &str = "time_fs,D_nm2_fs,alpha";
pub const RESISTIVITY_HEADER: &str = "T_K,inv_tau_per_fs,D_nm2_fs";

/// Full-precision float formatting used by every table.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn series_to_csv(s: &MsdSeries) -> String {
    let mut out = String::with_capacity(64 * (s.len() + 1));
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for i in 0..s.len() {
        let cols = [
            s.times[i],
            s.msd[i],
            s.mean_pos[i][0],
            s.mean_pos[i][1],
            s.norm[i],
            s.ipr[i],
            s.boundary_mass[i],
        ];
        let row: Vec<String> = cols.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a series file. Either the full seven-column layout or a bare
/// `time_fs,msd_nm2` pair is accepted.
pub fn series_from_csv(text: &str, path: &Path) -> Result<MsdSeries> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let full = cols == SERIES_HEADER.split(',').collect::<Vec<_>>();
    if !full && cols != ["time_fs", "msd_nm2"] {
        return Err(err(hline, format!("unexpected header `{header}`")));
    }
    let mut s = MsdSeries::default();
    for (no, line) in lines {
        let vals = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| err(no, format!("bad number `{}`: {e}", f.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != cols.len() {
            return Err(err(
                no,
                format!("expected {} columns, found {}", cols.len(), vals.len()),
            ));
        }
        if let Some(&last) = s.times.last() {
            if vals[0] <= last {
                return Err(err(no, "times must be strictly increasing".into()));
            }
        }
        s.times.push(vals[0]);
        s.msd.push(vals[1]);
        if full {
            s.mean_pos.push([vals[2], vals[3]]);
            s.norm.push(vals[4]);
            s.ipr.push(vals[5]);
            s.boundary_mass.push(vals[6]);
        } else {
            s.mean_pos.push([0.0, 0.0]);
            s.norm.push(1.0);
            s.ipr.push(0.0);
            s.boundary_mass.push(0.0);
        }
    }
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_series(path: &Path) -> Result<MsdSeries> {
    let mut s = series_from_csv(&read_text(path)?, path)?;
    let sidecar = manifest_path(path);
    if sidecar.exists() {
        s.manifest = serde_json::from_str(&read_text(&sidecar)?).map_err(|e| Error::Parse {
            path: sidecar.clone(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    }
    Ok(s)
}

/// `msd_seed3.csv` → `msd_seed3.manifest.json`.
pub fn manifest_path(series: &Path) -> std::path::PathBuf {
    series.with_extension("manifest.json")
}

pub fn manifest_to_json(m: &SeriesManifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serializes");
    s.push('\n');
    s
}

/// Writes the series and its sidecar manifest.
pub fn write_series(path: &Path, s: &MsdSeries) -> Result<()> {
    write_text(path, &series_to_csv(s))?;
    write_text(&manifest_path(path), &manifest_to_json(&s.manifest))
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let (d, alpha, se) = match &r.estimate {
            Some(e) => (fmt_f64(e.d), fmt_f64(e.alpha), fmt_f64(e.stderr)),
            None => ("nan".into(), "nan".into(), "nan".into()),
        };
        let flags = r
            .flags
            .iter()
            .map(|f| f.replace([',', '\n'], " "))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(out, "{},{d},{alpha},{se},{},{flags}", fmt_f64(r.value), r.n_seeds).unwrap();
    }
    out
}

pub fn thouless_table_csv(rows: &[ThoulessRow]) -> String {
    let mut out = format!("{THOULESS_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.area),
            fmt_f64(r.d_analytic),
            fmt_f64(r.d_empirical),
            fmt_f64(r.stderr),
            r.n_walkers
        )
        .unwrap();
    }
    out
}

pub fn windowed_csv(points: &[WindowedPoint], mass: f64) -> String {
    let mut out = format!("{WINDOWED_HEADER}\n");
    for p in points {
        writeln!(
            out,
            "{},{},{}",
            fmt_f64(p.time),
            fmt_f64(p.d),
            fmt_f64(p.d * mass / HBAR)
        )
        .unwrap();
    }
    out
}

pub fn resistivity_csv(r: &EinsteinResult) -> String {
    let mut out = format!("{RESISTIVITY_HEADER}\n");
    for i in 0..r.temperatures.len() {
        writeln!(
            out,
            "{},{},{}",
            fmt_f64(r.temperatures[i]),
            fmt_f64(r.inv_tau[i]),
            fmt_f64(r.d_used[i])
        )
        .unwrap();
    }
    out
}
