//! Subcommand drivers. Each writes its tables into the output directory and
//! fills the metadata; the caller writes `metadata.json` afterwards.

use std::io;

use parafermion_otoc::analysis::{
    butterfly_fit, saturation_time, wavefront_times, zero_mode_profile, Arrival, ButterflyFit, LightConeGrid,
};
use parafermion_otoc::ed::{level_statistics, zero_mode_scrambling_time, ExactDynamics, DEFAULT_SPIN_CAP};
use parafermion_otoc::otoc::{lightcone_scan, run, Method, OtocSeries};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::output::{self, num, Metadata, Table};

pub enum Failure {
    Config(String),
    Numerical(String),
    Io(io::Error),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

fn config(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

pub fn dispatch(command: Command, cfg: &RunConfig, meta: &mut Metadata) -> Result<(), Failure> {
    match command {
        Command::Otoc => cmd_otoc(cfg, meta),
        Command::Lightcone => cmd_lightcone(cfg, meta),
        Command::Butterfly => cmd_butterfly(cfg, meta),
        Command::Levels => cmd_levels(cfg, meta),
        Command::Zeromode => cmd_zeromode(cfg, meta),
        Command::BenchEd => cmd_bench_ed(cfg, meta),
    }
}

fn truncation_json(s: &OtocSeries) -> serde_json::Value {
    let last = s.truncation.last().copied().unwrap_or_default();
    json!({
        "k": s.k,
        "budget": s.budget,
        "budget_exceeded_at": s.budget_exceeded_at(),
        "trusted_records": s.trusted_len(),
        "final_cumulative_weight": last.cumulative,
        "max_bond_weight": last.max_bond,
        "max_bond_dim": last.max_bond_dim,
        "final_norm_proxy": last.norm_proxy,
    })
}

pub fn cmd_otoc(cfg: &RunConfig, meta: &mut Metadata) -> Result<(), Failure> {
    let req = cfg.request(Command::Otoc, cfg.j, cfg.k).map_err(config)?;
    let s = run(&req).map_err(numerical)?;
    let mut t = Table::create(&cfg.out, "otoc.csv", &["t", "re_f", "im_f", "c", "trunc_weight"])?;
    for n in 0..s.len() {
        t.row([num(s.times[n]), num(s.f[n].re), num(s.f[n].im), num(s.c[n]), num(s.truncation[n].cumulative)])?;
    }
    meta.outputs.push(t.finish()?);
    meta.outputs.push(output::write_script(&cfg.out, "plot_otoc.py", &output::otoc_script())?);
    meta.insert("method", req.method);
    meta.insert("truncation", truncation_json(&s));
    Ok(())
}

fn write_grid(cfg: &RunConfig, name: &str, grid: &LightConeGrid) -> io::Result<std::path::PathBuf> {
    let mut t = Table::create(&cfg.out, name, &["t", "k", "re_f", "c"])?;
    for (n, &time) in grid.times.iter().enumerate() {
        for (i, &k) in grid.ks.iter().enumerate() {
            t.row([num(time), k.to_string(), num(grid.re_f[i][n]), num(grid.c[i][n])])?;
        }
    }
    t.finish()
}

fn arrivals_json(arrivals: &[Arrival]) -> serde_json::Value {
    arrivals.iter().map(|a| json!({"k": a.k, "distance": a.distance, "time": a.time})).collect()
}

/// Arrivals restricted to the configured fit distances.
fn fit_subset(cfg: &RunConfig, arrivals: &[Arrival]) -> Vec<Arrival> {
    arrivals.iter().copied().filter(|a| cfg.fit_distances.contains(&(a.distance.unsigned_abs() as usize))).collect()
}

pub fn cmd_lightcone(cfg: &RunConfig, meta: &mut Metadata) -> Result<(), Failure> {
    let ks = cfg.targets();
    let req = cfg.request(Command::Lightcone, cfg.j, ks[0]).map_err(config)?;
    let series = lightcone_scan(&req, &ks).map_err(numerical)?;
    let grid = LightConeGrid::from_series(&series, Some(&req.model)).map_err(numerical)?;
    meta.outputs.push(write_grid(cfg, "lightcone.csv", &grid)?);
    meta.outputs.push(output::write_script(
        &cfg.out,
        "plot_lightcone.py",
        &output::lightcone_script("lightcone.csv", "lightcone.png"),
    )?);
    let arrivals = wavefront_times(&grid, cfg.threshold_fraction).map_err(numerical)?;
    meta.insert("arrivals", arrivals_json(&arrivals));
    match butterfly_fit(&fit_subset(cfg, &arrivals)) {
        Ok(f) => meta.insert("butterfly", f),
        Err(e) => meta.insert("butterfly_error", e.to_string()),
    }
    meta.insert("truncation", series.iter().map(truncation_json).collect::<Vec<_>>());
    Ok(())
}

fn sweep_point(cfg: &RunConfig, value: f64) -> Result<(ButterflyFit, Vec<Arrival>), String> {
    let mut c = cfg.clone();
    c.set_sweep(value);
    let mut ks: Vec<usize> = Vec::new();
    for &d in &cfg.fit_distances {
        ks.push(cfg.j - d);
        ks.push(cfg.j + d);
    }
    ks.sort_unstable();
    let req = c.request(Command::Butterfly, c.j, ks[0]).map_err(|e| e.to_string())?;
    let series = lightcone_scan(&req, &ks).map_err(|e| e.to_string())?;
    let grid = LightConeGrid::from_series(&series, Some(&req.model)).map_err(|e| e.to_string())?;
    let arrivals = wavefront_times(&grid, cfg.threshold_fraction).map_err(|e| e.to_string())?;
    let fit = butterfly_fit(&arrivals).map_err(|e| e.to_string())?;
    Ok((fit, arrivals))
}

pub fn cmd_butterfly(cfg: &RunConfig, meta: &mut Metadata) -> Result<(), Failure> {
    let results: Vec<Result<(ButterflyFit, Vec<Arrival>), String>> =
        cfg.sweep_values.par_iter().map(|&v| sweep_point(cfg, v)).collect();
    let mut t = Table::create(&cfg.out, "butterfly.csv", &["sweep_value", "v_left", "v_right", "ratio", "stderr_l", "stderr_r"])?;
    let mut points = Vec::new();
    for (&v, r) in cfg.sweep_values.iter().zip(&results) {
        match r {
            Ok((f, arrivals)) => {
                t.row([
                    num(v),
                    num(f.left.velocity),
                    num(f.right.velocity),
                    num(f.ratio),
                    num(f.left.stderr),
                    num(f.right.stderr),
                ])?;
                points.push(json!({"sweep_value": v, "fit": f, "arrivals": arrivals_json(arrivals)}));
            }
            Err(e) => {
                t.row([num(v), num(f64::NAN), num(f64::NAN), num(f64::NAN), num(f64::NAN), num(f64::NAN)])?;
                points.push(json!({"sweep_value": v, "error": e}));
            }
        }
    }
    meta.outputs.push(t.finish()?);
    let sweep = serde_json::to_value(cfg.sweep).unwrap();
    meta.outputs.push(output::write_script(
        &cfg.out,
        "plot_butterfly.py",
        &output::butterfly_script(sweep.as_str().unwrap_or("sweep")),
    )?);
    meta.insert("points", points);
    if results.iter().all(Result::is_err) {
        return Err(Failure::Numerical("every sweep point failed".into()));
    }
    Ok(())
}

pub fn cmd_levels(cfg: &RunConfig, meta: &mut Metadata) -> Result<(), Failure> {
    let ed = ExactDynamics::from_params(&cfg.model_params(), DEFAULT_SPIN_CAP).map_err(numerical)?;
    let sector = ed.spectrum(false).into_iter().nth(cfg.sector).ok_or_else(|| config("no such sector"))?;
    let stats = level_statistics(&sector).map_err(numerical)?;
    let mut t = Table::create(&cfg.out, "spacings.csv", &["s"])?;
    for &s in &stats.spacings {
        t.row([num(s)])?;
    }
    meta.outputs.push(t.finish()?);
    let mut h = Table::create(&cfg.out, "histogram.csv", &["bin_lo", "bin_hi", "density"])?;
    for (i, &d) in stats.densities.iter().enumerate() {
        h.row([num(stats.bin_edges[i]), num(stats.bin_edges[i + 1]), num(d)])?;
    }
    meta.outputs.push(h.finish()?);
    meta.outputs.push(output::write_script(&cfg.out, "plot_levels.py", &output::levels_script())?);
    meta.insert("sector", cfg.sector);
    meta.insert("n_levels", sector.eigenvalues.len());
    meta.insert("mean_gap_ratio", stats.mean_ratio);
    Ok(())
}

pub fn cmd_zeromode(cfg: &RunConfig, meta: &mut Metadata) -> Result<(), Failure> {
    let couplings = cfg.zero_mode_couplings();
    let grid = cfg.grid().map_err(config)?;
    let profiles: Vec<_> = couplings
        .par_iter()
        .map(|&g| {
            let mut p = cfg.alternating();
            p.j2 = g;
            zero_mode_profile(&p, cfg.length, &grid, cfg.chi, cfg.boundary_budget)
        })
        .collect();
    let mut cone = Table::create(&cfg.out, "zeromode_grid.csv", &["j2", "t", "k", "re_f", "c"])?;
    let mut boundary = Table::create(&cfg.out, "boundary.csv", &["j2", "t", "re_f", "c", "trunc_weight"])?;
    let mut peaks = Table::create(&cfg.out, "peaks.csv", &["j2", "peak_metric", "trusted_until", "saturation_time"])?;
    let mut failed = Vec::new();
    let mut summaries = Vec::new();
    for (&g, prof) in couplings.iter().zip(&profiles) {
        let prof = match prof {
            Ok(p) => p,
            Err(e) => {
                failed.push(format!("J2 = {g}: {e}"));
                continue;
            }
        };
        let gr = &prof.grid;
        for (n, &time) in gr.times.iter().enumerate() {
            for (i, &k) in gr.ks.iter().enumerate() {
                cone.row([num(g), num(time), k.to_string(), num(gr.re_f[i][n]), num(gr.c[i][n])])?;
            }
        }
        let b = &prof.boundary;
        for (n, &time) in b.times.iter().enumerate() {
            boundary.row([num(g), num(time), num(b.re_f[n]), num(b.c[n]), num(b.truncation[n])])?;
        }
        let sat = saturation_time(&b.times, &b.c, 0.9);
        peaks.row([num(g), num(b.peak_metric), num(b.trusted_until), num(sat.unwrap_or(f64::NAN))])?;
        summaries.push(json!({
            "j2": g,
            "peak_metric": b.peak_metric,
            "trusted_until": b.trusted_until,
            "saturation_time": sat,
        }));
    }
    meta.outputs.push(cone.finish()?);
    meta.outputs.push(boundary.finish()?);
    meta.outputs.push(peaks.finish()?);
    meta.outputs.push(output::write_script(
        &cfg.out,
        "plot_zeromode.py",
        &output::lightcone_script("zeromode_grid.csv", "zeromode.png"),
    )?);
    meta.outputs.push(output::write_script(&cfg.out, "plot_boundary.py", &output::zeromode_script())?);
    meta.insert("profiles", summaries);

    if !cfg.ed_lengths.is_empty() {
        let mut table = Table::create(&cfg.out, "scrambling_times.csv", &["j2", "L", "t_star", "reached"])?;
        for &g in &couplings {
            let mut p = cfg.alternating();
            p.j2 = g;
            match zero_mode_scrambling_time(&p, &cfg.ed_lengths, cfg.scrambling_threshold, cfg.horizon) {
                Ok(rows) => {
                    for r in rows {
                        table.row([num(g), r.n_parafermions.to_string(), num(r.t_star), r.reached.to_string()])?;
                    }
                }
                Err(e) => failed.push(format!("scrambling times at J2 = {g}: {e}")),
            }
        }
        meta.outputs.push(table.finish()?);
    }
    if !failed.is_empty() {
        return Err(Failure::Numerical(failed.join("; ")));
    }
    Ok(())
}

/// Relative sup-norm error `max_t |x − y| / max_t |y|`.
pub fn relative_sup_error(x: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = x.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / scale
}

pub fn cmd_bench_ed(cfg: &RunConfig, meta: &mut Metadata) -> Result<(), Failure> {
    let method = cfg.method_for(Command::BenchEd);
    let pairs = cfg.bench_pairs();
    let results: Vec<Result<(OtocSeries, OtocSeries), String>> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let mpo = cfg.request(Command::BenchEd, j, k).map_err(|e| e.to_string())?;
            let mut exact = mpo.clone();
            exact.method = Method::ExactEd;
            let a = run(&mpo).map_err(|e| e.to_string())?;
            let b = run(&exact).map_err(|e| e.to_string())?;
            Ok((a, b))
        })
        .collect();
    let mut summary =
        Table::create(&cfg.out, "bench.csv", &["j", "k", "method", "max_abs_err_re_f", "rel_err_re_f", "max_abs_err_c", "pass"])?;
    let mut series = Table::create(&cfg.out, "bench_series.csv", &["j", "k", "t", "re_f_ed", "re_f_mpo", "c_ed", "c_mpo"])?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (&(j, k), r) in pairs.iter().zip(&results) {
        let (a, b) = match r {
            Ok(x) => x,
            Err(e) => {
                failures.push(format!("({j}, {k}): {e}"));
                continue;
            }
        };
        let (ra, rb) = (a.re_f(), b.re_f());
        let abs = ra.iter().zip(&rb).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let rel = relative_sup_error(&ra, &rb);
        let dc = a.c.iter().zip(&b.c).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let pass = rel <= cfg.tolerance;
        if !pass {
            failures.push(format!("({j}, {k}): relative error {rel:.3e} above {}", cfg.tolerance));
        }
        summary.row([j.to_string(), k.to_string(), method.to_string(), num(abs), num(rel), num(dc), pass.to_string()])?;
        for n in 0..a.len() {
            series.row([j.to_string(), k.to_string(), num(a.times[n]), num(rb[n]), num(ra[n]), num(b.c[n]), num(a.c[n])])?;
        }
        rows.push(json!({"j": j, "k": k, "rel_err_re_f": rel, "max_abs_err_re_f": abs, "pass": pass,
                         "truncation": truncation_json(a)}));
    }
    meta.outputs.push(summary.finish()?);
    meta.outputs.push(series.finish()?);
    meta.insert("comparisons", rows);
    if !failures.is_empty() {
        return Err(Failure::Numerical(failures.join("; ")));
    }
    Ok(())
}
