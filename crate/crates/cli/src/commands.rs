use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use planckdiff::experiments::{
    resistivity_table, run_scenario, sweep, Scenario, ScenarioOutcome, SweepParameter,
};
use planckdiff::observables::{
    ensemble_mean, fit_diffusion, windowed_diffusion, DiffusionEstimate, FitWindow, MsdSeries, DIM,
};
use planckdiff::series_io::{
    read_series, resistivity_csv, sweep_table, thouless_table_csv, windowed_csv, write_series,
    write_text,
};
use planckdiff::thouless::thouless_table;
use planckdiff::units::M_E;
use planckdiff::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::Config;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_text(path, &s)
}

#[derive(Serialize)]
struct SeedRecord {
    seed: u64,
    dt_fs: f64,
    samples: usize,
    boundary_contaminated: bool,
    truncated_at_fs: Option<f64>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'a str,
    master_seed: Option<u64>,
    config: &'a Scenario,
    config_hash: String,
    wall_clock_s: f64,
    flags: &'a [String],
    seeds: Vec<SeedRecord>,
}

fn summary(outcome: &ScenarioOutcome) -> serde_json::Value {
    match &outcome.estimate {
        Ok(e) => json!({
            "D_nm2_fs": e.d,
            "alpha": e.alpha,
            "stderr": e.stderr,
            "alpha_stderr": e.alpha_stderr(),
            "window_fs": [e.window.0, e.window.1],
            "n_samples": e.n_samples,
            "n_seeds": outcome.series.len(),
            "flags": outcome.flags,
        }),
        Err(msg) => json!({
            "estimation_error": msg,
            "n_seeds": outcome.series.len(),
            "flags": outcome.flags,
        }),
    }
}

/// Writes every artifact of one scenario run into `dir`.
fn write_outcome(dir: &Path, outcome: &ScenarioOutcome, master_seed: Option<u64>, wall: f64) -> Result<()> {
    ensure_dir(dir)?;
    for s in &outcome.series {
        write_series(&dir.join(format!("msd_seed{}.csv", s.manifest.seed)), s)?;
    }
    write_series(&dir.join("msd_ensemble.csv"), &outcome.ensemble)?;
    let mass = outcome.scenario.carrier_mass();
    write_text(&dir.join("windowed_D.csv"), &windowed_csv(&outcome.windowed, mass))?;
    write_json(&dir.join("summary.json"), &summary(outcome))?;
    let manifest = RunManifest {
        tool_version: TOOL_VERSION,
        master_seed,
        config: &outcome.scenario,
        config_hash: outcome.scenario.config_hash(),
        wall_clock_s: wall,
        flags: &outcome.flags,
        seeds: outcome
            .series
            .iter()
            .map(|s| SeedRecord {
                seed: s.manifest.seed,
                dt_fs: s.manifest.dt_fs,
                samples: s.len(),
                boundary_contaminated: s.manifest.boundary_contaminated,
                truncated_at_fs: s.manifest.truncated_at_fs,
            })
            .collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn report(e: &DiffusionEstimate) -> String {
    format!(
        "D = {:.6} ± {:.6} nm²/fs, alpha = {:.4} ± {:.4} over [{:.0}, {:.0}] fs",
        e.d,
        e.stderr,
        e.alpha,
        e.alpha_stderr(),
        e.window.0,
        e.window.1
    )
}

pub fn cmd_run(cfg: &Config, out: &Path, master_seed: Option<u64>) -> Result<()> {
    let start = Instant::now();
    let outcome = run_scenario(&cfg.scenario)?;
    write_outcome(out, &outcome, master_seed, start.elapsed().as_secs_f64())?;
    match &outcome.estimate {
        Ok(e) => {
            println!("{}", report(e));
            Ok(())
        }
        Err(msg) => Err(Error::estimation(msg.clone())),
    }
}

pub fn cmd_sweep(
    cfg: &Config,
    out: &Path,
    master_seed: Option<u64>,
    param: Option<&str>,
    values: Option<&[f64]>,
) -> Result<()> {
    let mut section = cfg.sweep.clone().unwrap_or(crate::config::SweepSection {
        parameter: String::new(),
        values: vec![],
        cross_section_locked: false,
    });
    if let Some(p) = param {
        section.parameter = p.to_string();
    }
    if let Some(v) = values {
        section.values = v.to_vec();
    }
    if section.parameter.is_empty() {
        return Err(Error::config("sweep.parameter", "no sweep parameter given"));
    }
    let axis = section.axis()?;
    let start = Instant::now();
    let rows = sweep(&cfg.scenario, &axis)?;
    ensure_dir(out)?;
    for (i, row) in rows.iter().enumerate() {
        if let Some(outcome) = &row.outcome {
            write_outcome(&out.join(format!("point_{i:02}")), outcome, master_seed, 0.0)?;
        }
    }
    write_text(&out.join("sweep.csv"), &sweep_table(&rows))?;
    write_json(
        &out.join("manifest.json"),
        &json!({
            "tool_version": TOOL_VERSION,
            "master_seed": master_seed,
            "config": cfg.scenario,
            "sweep": section,
            "wall_clock_s": start.elapsed().as_secs_f64(),
        }),
    )?;
    for row in &rows {
        match &row.estimate {
            Some(e) => println!("{} = {}: {}", axis.parameter.name(), row.value, report(e)),
            None => println!("{} = {}: {}", axis.parameter.name(), row.value, row.flags.join("; ")),
        }
    }
    if axis.parameter == SweepParameter::Temperature {
        let table: Vec<_> = rows
            .iter()
            .filter_map(|r| r.estimate.map(|e| (r.value, e)))
            .collect();
        match resistivity_table(&table, cfg.scenario.carrier_mass()) {
            Ok(r) => {
                write_text(&out.join("resistivity.csv"), &resistivity_csv(&r))?;
                println!("1/tau vs T: R² = {:.6}", r.r_squared);
            }
            Err(e) => log::warn!("no resistivity table: {e}"),
        }
    }
    if rows.iter().all(|r| r.estimate.is_none()) {
        return Err(Error::estimation("every sweep point failed"));
    }
    Ok(())
}

pub fn cmd_thouless(cfg: &Config, out: &Path) -> Result<()> {
    let base = cfg.thouless.base();
    let rows = thouless_table(&base, &cfg.thouless.areas)?;
    ensure_dir(out)?;
    let table = thouless_table_csv(&rows);
    write_text(&out.join("thouless.csv"), &table)?;
    print!("{table}");
    Ok(())
}

pub struct AnalyzeArgs<'a> {
    pub files: &'a [PathBuf],
    pub window: FitWindow,
    pub width: f64,
    pub mass: f64,
    pub out: Option<&'a Path>,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<DiffusionEstimate> {
    if args.files.is_empty() {
        return Err(Error::config("files", "no series files given"));
    }
    let series: Vec<MsdSeries> = args.files.iter().map(|p| read_series(p)).collect::<Result<_>>()?;
    let mass = args.mass * M_E;
    let ensemble = if series.len() == 1 {
        series[0].clone()
    } else {
        ensemble_mean(&series)?
    };
    let est = fit_diffusion(&ensemble, args.window, DIM, mass)?;
    let windowed = match windowed_diffusion(&ensemble, args.width, DIM) {
        Ok(w) => w,
        Err(e) => {
            log::warn!("no windowed D(t): {e}");
            vec![]
        }
    };
    println!("{}", report(&est));
    if let Some(dir) = args.out {
        ensure_dir(dir)?;
        write_text(&dir.join("windowed_D.csv"), &windowed_csv(&windowed, mass))?;
        write_json(
            &dir.join("analyze.json"),
            &json!({
                "files": args.files,
                "D_nm2_fs": est.d,
                "alpha": est.alpha,
                "stderr": est.stderr,
                "window_fs": [est.window.0, est.window.1],
                "n_samples": est.n_samples,
            }),
        )?;
    }
    Ok(est)
}

/// Parses `last:0.5` or `start:end` (fs).
pub fn parse_window(spec: &str) -> Result<FitWindow> {
    let bad = || Error::config("--window", format!("expected last:<fraction> or <start>:<end>, got `{spec}`"));
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if a.trim() == "last" {
        return Ok(FitWindow::LastFraction(b));
    }
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    Ok(FitWindow::Span { start: a, end: b })
}
