//! Concurrent runs over a coupling list with an aggregate summary.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dicke_core::ModelParams;
use serde::Serialize;

use crate::config::{gamma_dir, sector_dir, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{csv, float, Emitter};
use crate::pipeline::{run_point, PointResult};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub gamma: f64,
    pub gamma_over_gc: f64,
    pub status: String,
    pub ground_e_over_j: Option<f64>,
    /// Converged states per sector, in sector order.
    pub converged: Vec<(String, usize)>,
    pub dynamic_marker: Option<f64>,
    pub static_marker: Option<f64>,
    /// Mean gap ratio per `(sector, window)`, first successful sector only
    /// when the run covers the whole space.
    pub ratios: Vec<(String, String, Option<f64>)>,
}

pub struct SweepOutcome {
    pub points: Vec<CliResult<PointResult>>,
    pub rows: Vec<SummaryRow>,
}

fn window_name(lo: Option<f64>, hi: Option<f64>) -> String {
    let edge = |x: Option<f64>, inf: &str| x.map_or(inf.to_string(), |v| v.to_string());
    format!("{}..{}", edge(lo, "-inf"), edge(hi, "inf"))
}

fn summarize(params: &ModelParams, point: &CliResult<PointResult>) -> SummaryRow {
    let mut row = SummaryRow {
        gamma: params.gamma,
        gamma_over_gc: params.gamma / params.gamma_c(),
        status: "failed".into(),
        ground_e_over_j: None,
        converged: Vec::new(),
        dynamic_marker: None,
        static_marker: None,
        ratios: Vec::new(),
    };
    let p = match point {
        Ok(p) => p,
        Err(e) => {
            row.status = format!("failed: {e}");
            return row;
        }
    };
    row.status = match p.first_error() {
        Some(e) => format!("failed: {e}"),
        None => "ok".into(),
    };
    row.ground_e_over_j = p.ground_energy().map(|e| e / params.j());
    for s in p.successes() {
        row.converged.push((sector_dir(s.sector).to_string(), s.converged_count));
        for w in &s.stats {
            let sign = if w.parity > 0 { "+" } else { "-" };
            row.ratios.push((sign.to_string(), window_name(w.lo, w.hi), w.mean_ratio));
        }
    }
    if let Some(Ok(m)) = p.markers() {
        row.dynamic_marker = Some(m.dynamic_marker);
        row.static_marker = Some(m.static_marker);
    }
    row
}

/// Runs every coupling of `cfg` on up to `cfg.workers` threads. Failing
/// points are recorded and do not stop the others.
pub fn sweep(cfg: &RunConfig) -> CliResult<SweepOutcome> {
    let points = cfg.points()?;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<CliResult<PointResult>>>> = points.iter().map(|_| Mutex::new(None)).collect();
    let workers = cfg.workers.min(points.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let result = run_point(cfg, &points[i]);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    let results: Vec<CliResult<PointResult>> =
        slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every point ran")).collect();
    let rows: Vec<SummaryRow> = points.iter().zip(&results).map(|(p, r)| summarize(p, r)).collect();

    let mut out = Emitter::new(&cfg.out)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), float);
    let mut windows: Vec<(String, String)> =
        rows.iter().flat_map(|r| r.ratios.iter().map(|(s, w, _)| (s.clone(), w.clone()))).collect();
    windows.sort();
    windows.dedup();
    let mut header = vec!["gamma", "gamma_over_gc", "status", "ground_E_over_j", "converged", "dynamic_marker", "static_marker"];
    let ratio_names: Vec<String> = windows.iter().map(|(s, w)| format!("ratio{s}{w}")).collect();
    header.extend(ratio_names.iter().map(String::as_str));
    let lines = rows.iter().map(|r| {
        let mut cells = vec![
            float(r.gamma),
            float(r.gamma_over_gc),
            r.status.replace(',', ";"),
            opt(r.ground_e_over_j),
            r.converged.iter().map(|(s, n)| format!("{s}:{n}")).collect::<Vec<_>>().join(" "),
            opt(r.dynamic_marker),
            opt(r.static_marker),
        ];
        for key in &windows {
            let v = r.ratios.iter().find(|(s, w, _)| (s, w) == (&key.0, &key.1)).and_then(|x| x.2);
            cells.push(opt(v));
        }
        cells
    });
    out.write("summary.csv", csv(&header, lines).as_bytes())?;
    out.write_json("summary.json", &rows)?;
    for (p, r) in points.iter().zip(&results) {
        if let Ok(point) = r {
            for f in &point.files {
                out.adopt(&gamma_dir(p.gamma), f);
            }
        }
    }
    let files = out.files().to_vec();
    out.write_json("manifest.json", &serde_json::json!({ "points": points.len(), "files": files }))?;
    Ok(SweepOutcome { points: results, rows })
}

/// Plain-text table of the summary rows.
pub fn table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:>10} {:>8} {:>10} {:>16} {:>9} {:>9} {:>9}  {}\n",
        "gamma", "g/gc", "E0/j", "converged", "dyn", "static", "ratio", "status"
    );
    let cell = |x: Option<f64>, prec: usize| x.map_or("-".to_string(), |v| format!("{v:.prec$}"));
    for r in rows {
        let conv = r.converged.iter().map(|(s, n)| format!("{}{n}", &s[..1])).collect::<Vec<_>>().join("/");
        let mid = r.ratios.iter().find(|(_, w, _)| w == "-1..1").and_then(|x| x.2);
        out.push_str(&format!(
            "{:>10.6} {:>8.3} {:>10} {:>16} {:>9} {:>9} {:>9}  {}\n",
            r.gamma,
            r.gamma_over_gc,
            cell(r.ground_e_over_j, 5),
            conv,
            cell(r.dynamic_marker, 3),
            cell(r.static_marker, 3),
            cell(mid, 3),
            r.status
        ));
    }
    out
}

/// Error for a sweep in which some points failed.
pub fn partial_failure(outcome: &SweepOutcome) -> Option<CliError> {
    let failed = outcome.rows.iter().filter(|r| r.status != "ok").count();
    (failed > 0).then(|| CliError::PartialSweep { failed, total: outcome.rows.len() })
}
