//! enumerate -> build -> eigh -> observables -> analysis, per coupling and
//! parity sector, with everything persisted under `<out>/<gamma>/<sector>/`.

use std::time::Instant;

use dicke_core::analysis::{
    density_of_states, drop_degenerate, esqpt_markers, lattice, spacing_stats, unfold, EsqptMarkers, Histogram,
    PeresLattice, SpacingStats,
};
use dicke_core::hamiltonian::{build, dense_bytes};
use dicke_core::observables::{delta_p, expectation, parity_expectation, peres_matrix, PeresOperator};
use dicke_core::{eigh, BasisIndex, BasisSpec, DickeError, ModelParams, Parity, ResidualReport};
use serde::Serialize;

use crate::config::{gamma_dir, sector_dir, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{csv, float, Emitter, FileRecord};

/// Dense matrices alive at the peak of one diagonalization: the Hamiltonian,
/// the eigenvectors, solver workspace and the residual product.
const WORKING_MATRICES: u64 = 4;

/// Levels closer than this (in E/j) are treated as degenerate by the
/// spacing statistics.
const STATS_DEGENERACY_TOL: f64 = 1e-9;

/// Energy windows (E/j) for the spacing statistics, split at the ESQPTs.
pub const STATS_WINDOWS: [(Option<f64>, Option<f64>); 3] = [(None, Some(-1.0)), (Some(-1.0), Some(1.0)), (Some(1.0), None)];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Timings {
    pub build_s: f64,
    pub solve_s: f64,
    pub observables_s: f64,
    pub analysis_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowStats {
    pub parity: i8,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub levels: usize,
    /// Mean consecutive-gap ratio of the raw levels.
    pub mean_ratio: Option<f64>,
    /// Spacing statistics after polynomial unfolding.
    pub unfolded: Option<SpacingStats>,
    pub error: Option<String>,
}

/// Outcome of a single sector diagonalization.
#[derive(Clone, Debug)]
pub struct SectorResult {
    pub sector: Option<Parity>,
    pub params: ModelParams,
    pub dim: usize,
    pub energies: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub parities: Vec<i8>,
    pub converged_count: usize,
    pub report: ResidualReport,
    /// Converged states only.
    pub lattices: Vec<PeresLattice>,
    pub dos: Option<Histogram>,
    pub markers: Option<Result<EsqptMarkers, String>>,
    pub stats: Vec<WindowStats>,
    pub timings: Timings,
    pub files: Vec<FileRecord>,
}

impl SectorResult {
    pub fn lattice(&self, op: PeresOperator) -> Option<&PeresLattice> {
        self.lattices.iter().find(|l| l.operator == op)
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }
}

#[derive(Debug)]
pub struct PointResult {
    pub params: ModelParams,
    pub sectors: Vec<(Option<Parity>, CliResult<SectorResult>)>,
    /// Markers of the merged Jz lattice when more than one sector ran.
    pub combined_markers: Option<Result<EsqptMarkers, String>>,
    pub files: Vec<FileRecord>,
}

impl PointResult {
    pub fn first_error(&self) -> Option<&CliError> {
        self.sectors.iter().find_map(|(_, r)| r.as_ref().err())
    }

    pub fn successes(&self) -> impl Iterator<Item = &SectorResult> {
        self.sectors.iter().filter_map(|(_, r)| r.as_ref().ok())
    }

    pub fn ground_energy(&self) -> Option<f64> {
        self.successes().map(SectorResult::ground_energy).min_by(f64::total_cmp)
    }

    /// Markers from the merged lattice, or from the only sector.
    pub fn markers(&self) -> Option<&Result<EsqptMarkers, String>> {
        self.combined_markers.as_ref().or_else(|| self.successes().next().and_then(|s| s.markers.as_ref()))
    }
}

#[derive(Serialize)]
struct SectorManifest<'a> {
    status: &'a str,
    error: Option<String>,
    params: &'a ModelParams,
    basis: Option<BasisSpec>,
    dim: Option<usize>,
    residual_report: Option<ResidualReport>,
    converged_count: Option<usize>,
    tol_dp: f64,
    wall_time: Timings,
    files: &'a [FileRecord],
}

#[derive(Serialize)]
struct PointManifest<'a> {
    status: &'a str,
    params: &'a ModelParams,
    gamma_over_gc: f64,
    sectors: Vec<PointSector<'a>>,
    files: &'a [FileRecord],
}

#[derive(Serialize)]
struct PointSector<'a> {
    sector: &'a str,
    status: &'a str,
    error: Option<String>,
    converged_count: Option<usize>,
    ground_energy: Option<f64>,
}

pub fn check_working_set(dim: usize, budget_mb: u64) -> CliResult<()> {
    let budget = budget_mb.saturating_mul(1 << 20);
    match dense_bytes(dim).and_then(|b| b.checked_mul(WORKING_MATRICES)) {
        Some(bytes) if bytes <= budget => Ok(()),
        other => Err(DickeError::Capacity { dim, required_mb: other.map_or(u64::MAX, |b| b >> 20), budget_mb }.into()),
    }
}

fn basis_spec(cfg: &RunConfig, sector: Option<Parity>) -> BasisSpec {
    let spin = cfg.spin();
    match sector {
        Some(s) => BasisSpec::parity(spin, cfg.n_max, s),
        None if cfg.basis == dicke_core::BasisKind::Fock => BasisSpec::fock(spin, cfg.n_max),
        None => BasisSpec::coherent(spin, cfg.n_max),
    }
}

fn opt_json<T: Serialize>(value: &Option<Result<T, String>>) -> serde_json::Value {
    match value {
        Some(Ok(v)) => serde_json::to_value(v).expect("serializable"),
        Some(Err(e)) => serde_json::json!({ "error": e }),
        None => serde_json::Value::Null,
    }
}

/// Runs one sector and writes its files; on failure the files written so
/// far are kept and the manifest records the error.
pub fn run_sector(cfg: &RunConfig, params: &ModelParams, sector: Option<Parity>, out: &mut Emitter) -> CliResult<SectorResult> {
    let spec = basis_spec(cfg, sector);
    let mut timings = Timings::default();
    let mut partial: Option<(usize, ResidualReport, usize)> = None;
    let result = sector_body(cfg, params, spec, sector, out, &mut timings, &mut partial);
    let (status, error) = match &result {
        Ok(_) => ("ok", None),
        Err(e) => ("failed", Some(e.to_string())),
    };
    let files = out.files().to_vec();
    let manifest = SectorManifest {
        status,
        error,
        params,
        basis: Some(spec),
        dim: partial.map(|p| p.0),
        residual_report: partial.map(|p| p.1),
        converged_count: partial.map(|p| p.2),
        tol_dp: cfg.tol_dp,
        wall_time: timings,
        files: &files,
    };
    out.write_json("manifest.json", &manifest)?;
    result.map(|mut r| {
        r.files = out.files().to_vec();
        r
    })
}

fn sector_body(
    cfg: &RunConfig,
    params: &ModelParams,
    spec: BasisSpec,
    sector: Option<Parity>,
    out: &mut Emitter,
    timings: &mut Timings,
    partial: &mut Option<(usize, ResidualReport, usize)>,
) -> CliResult<SectorResult> {
    let j = params.j();
    let clock = Instant::now();
    let basis = BasisIndex::enumerate(spec);
    check_working_set(basis.size(), cfg.budget_mb)?;
    let h = build(params, &spec)?;
    timings.build_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let spectrum = eigh(&h)?;
    drop(h);
    timings.solve_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let certificate = delta_p(&spectrum, &basis, cfg.tol_dp)?;
    *partial = Some((spectrum.dim(), *spectrum.residual_report(), certificate.converged_count));
    let parities = parity_expectation(&spectrum, params)?.signs;
    let energies = spectrum.energies().to_vec();
    let rows = (0..energies.len()).map(|k| {
        vec![
            k.to_string(),
            float(energies[k]),
            float(energies[k] / j),
            float(certificate.delta_p[k]),
            u8::from(certificate.is_converged(k)).to_string(),
            parities[k].to_string(),
        ]
    });
    out.write("energies.csv", csv(&["index", "energy", "E_over_j", "delta_p", "converged", "parity"], rows).as_bytes())?;

    let mut wanted: Vec<PeresOperator> = if cfg.analyses.lattices { cfg.ops.clone() } else { Vec::new() };
    if cfg.analyses.markers && !wanted.contains(&PeresOperator::Jz) {
        wanted.push(PeresOperator::Jz);
    }
    let mut lattices = Vec::new();
    for op in wanted {
        let values = expectation(&spectrum, &peres_matrix(op, &basis, params)?)?;
        let lat = lattice(op, &spectrum, &values, &parities, &certificate, params, true)?;
        if cfg.analyses.lattices && cfg.ops.contains(&op) {
            let rows = lat.points.iter().map(|p| {
                vec![float(p.energy_over_j), float(p.expectation), p.parity.to_string(), float(p.delta_p)]
            });
            let text = csv(&["E_over_j", "expval", "parity", "delta_p"], rows);
            out.write(&format!("lattice_{}.csv", op.name()), text.as_bytes())?;
        }
        lattices.push(lat);
    }
    let dim = spectrum.dim();
    let report = *spectrum.residual_report();
    drop(spectrum);
    timings.observables_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let converged: Vec<(f64, i8)> = (0..dim)
        .filter(|&k| certificate.is_converged(k))
        .map(|k| (energies[k] / j, parities[k]))
        .collect();
    let dos = if cfg.analyses.dos {
        let scaled: Vec<f64> = converged.iter().map(|c| c.0 * j).collect();
        let hist = density_of_states(&scaled, j, cfg.bin_width)?;
        let rows = hist.centers().zip(&hist.counts).map(|(c, n)| {
            vec![float(c), n.to_string(), float(*n as f64 / cfg.bin_width)]
        });
        out.write("dos.csv", csv(&["E_over_j", "count", "density"], rows).as_bytes())?;
        Some(hist)
    } else {
        None
    };
    let markers = if cfg.analyses.markers {
        let jz = lattices.iter().find(|l| l.operator == PeresOperator::Jz).expect("Jz lattice computed");
        let m = esqpt_markers(jz, cfg.bin_width).map_err(|e| e.to_string());
        out.write_json("markers.json", &opt_json(&Some(m.clone())))?;
        Some(m)
    } else {
        None
    };
    let stats = if cfg.analyses.stats {
        let stats = window_stats(&converged, cfg.unfold_degree);
        out.write_json("stats.json", &stats)?;
        stats
    } else {
        Vec::new()
    };
    lattices.retain(|l| cfg.ops.contains(&l.operator) && cfg.analyses.lattices || l.operator == PeresOperator::Jz);
    timings.analysis_s = clock.elapsed().as_secs_f64();

    Ok(SectorResult {
        sector,
        params: *params,
        dim,
        energies,
        delta_p: certificate.delta_p,
        parities,
        converged_count: certificate.converged_count,
        report,
        lattices,
        dos,
        markers,
        stats,
        timings: *timings,
        files: Vec::new(),
    })
}

/// Spacing statistics per parity and energy window over `(E/j, parity)`
/// pairs of converged states.
pub fn window_stats(levels: &[(f64, i8)], unfold_degree: usize) -> Vec<WindowStats> {
    let mut signs: Vec<i8> = levels.iter().map(|l| l.1).collect();
    signs.sort_unstable();
    signs.dedup();
    signs.reverse();
    let mut out = Vec::new();
    for parity in signs {
        for (lo, hi) in STATS_WINDOWS {
            let mut window: Vec<f64> = levels
                .iter()
                .filter(|l| l.1 == parity && lo.is_none_or(|x| l.0 > x) && hi.is_none_or(|x| l.0 < x))
                .map(|l| l.0)
                .collect();
            window.sort_by(f64::total_cmp);
            let window = drop_degenerate(&window, STATS_DEGENERACY_TOL);
            let mut entry =
                WindowStats { parity, lo, hi, levels: window.len(), mean_ratio: None, unfolded: None, error: None };
            match spacing_stats(&window) {
                Ok(s) => entry.mean_ratio = Some(s.mean_ratio),
                Err(e) => entry.error = Some(e.to_string()),
            }
            if entry.error.is_none() {
                match unfold(&window, unfold_degree).and_then(|u| spacing_stats(&u)) {
                    Ok(s) => entry.unfolded = Some(s),
                    Err(e) => entry.error = Some(format!("unfolding: {e}")),
                }
            }
            out.push(entry);
        }
    }
    out
}

/// Runs every sector of one coupling and writes the coupling-level files.
pub fn run_point(cfg: &RunConfig, params: &ModelParams) -> CliResult<PointResult> {
    let dir = cfg.out.join(gamma_dir(params.gamma));
    let mut top = Emitter::new(&dir)?;
    let mut sectors = Vec::new();
    for sector in cfg.sector_list() {
        let name = sector_dir(sector);
        let mut em = Emitter::new(dir.join(name))?;
        let result = run_sector(cfg, params, sector, &mut em);
        for f in em.files() {
            top.adopt(name, f);
        }
        sectors.push((sector, result));
    }
    let ok: Vec<&SectorResult> = sectors.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let combined_markers = if cfg.analyses.markers && ok.len() > 1 {
        let parts: Vec<PeresLattice> =
            ok.iter().filter_map(|s| s.lattice(PeresOperator::Jz).cloned()).collect();
        let m = PeresLattice::merge(&parts)
            .and_then(|merged| esqpt_markers(&merged, cfg.bin_width))
            .map_err(|e| e.to_string());
        top.write_json("markers.json", &opt_json(&Some(m.clone())))?;
        Some(m)
    } else {
        None
    };
    let failed = sectors.iter().any(|(_, r)| r.is_err());
    let summary = sectors
        .iter()
        .map(|(s, r)| PointSector {
            sector: sector_dir(*s),
            status: if r.is_ok() { "ok" } else { "failed" },
            error: r.as_ref().err().map(ToString::to_string),
            converged_count: r.as_ref().ok().map(|x| x.converged_count),
            ground_energy: r.as_ref().ok().map(SectorResult::ground_energy),
        })
        .collect();
    let files = top.files().to_vec();
    let manifest = PointManifest {
        status: if failed { "failed" } else { "ok" },
        params,
        gamma_over_gc: params.gamma / params.gamma_c(),
        sectors: summary,
        files: &files,
    };
    top.write_json("manifest.json", &manifest)?;
    Ok(PointResult { params: *params, sectors, combined_markers, files: top.files().to_vec() })
}

/// A single-coupling run; the first sector failure becomes the error.
pub fn run(cfg: &RunConfig) -> CliResult<PointResult> {
    let points = cfg.points()?;
    if points.len() != 1 {
        return Err(CliError::Config(format!("{} couplings given; use the sweep subcommand", points.len())));
    }
    let result = run_point(cfg, &points[0])?;
    match result.sectors.iter().position(|(_, r)| r.is_err()) {
        Some(i) => {
            let mut result = result;
            let (_, err) = result.sectors.swap_remove(i);
            Err(err.expect_err("position found an error"))
        }
        None => Ok(result),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Analyses, Settings};

    fn config(dir: &std::path::Path, extra: &[(&str, &str)]) -> RunConfig {
        let mut s = Settings::new();
        for (k, v) in [("n_atoms", "4"), ("n_max", "30"), ("gamma_over_gc", "1.5")] {
            s.set(k, v).unwrap();
        }
        s.set("out", dir.to_str().unwrap()).unwrap();
        for (k, v) in extra {
            s.set(k, *v).unwrap();
        }
        RunConfig::from_settings(&s, Analyses { lattices: true, markers: false, dos: true, stats: true }).unwrap()
    }

    #[test]
    fn writes_layout_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &[]);
        let r = run(&cfg).unwrap();
        assert_eq!(r.sectors.len(), 2);
        let plus = dir.path().join("0.75/plus");
        for f in ["energies.csv", "lattice_Jz.csv", "lattice_Jx2.csv", "lattice_n.csv", "dos.csv", "stats.json", "manifest.json"] {
            assert!(plus.join(f).exists(), "{f}");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(plus.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["status"], "ok");
        let listed = manifest["files"].as_array().unwrap();
        assert_eq!(listed.len(), 6);
        let energies = std::fs::read(plus.join("energies.csv")).unwrap();
        let entry = listed.iter().find(|f| f["path"] == "energies.csv").unwrap();
        assert_eq!(entry["sha256"], crate::output::sha256_hex(&energies));
        let text = String::from_utf8(energies).unwrap();
        assert!(text.starts_with("index,energy,E_over_j,delta_p,converged,parity\n"));
        assert_eq!(text.lines().count(), r.successes().next().unwrap().dim + 1);
        let top: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("0.75/manifest.json")).unwrap()).unwrap();
        assert_eq!(top["files"].as_array().unwrap().len(), 14);
    }

    #[test]
    fn capacity_error_leaves_failure_marker() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &[("budget_mb", "0"), ("sector", "+")]);
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let manifest = std::fs::read_to_string(dir.path().join("0.75/plus/manifest.json")).unwrap();
        assert!(manifest.contains("\"status\": \"failed\""));
    }

    #[test]
    fn stats_windows_split_by_parity() {
        let levels: Vec<(f64, i8)> = (0..400).map(|i| (-3.0 + 0.015 * i as f64, if i % 2 == 0 { 1 } else { -1 })).collect();
        let stats = window_stats(&levels, 3);
        assert_eq!(stats.len(), 6);
        assert!(stats.iter().all(|s| s.mean_ratio.is_some_and(|r| (r - 1.0).abs() < 1e-6)));
        assert_eq!(stats[0].parity, 1);
        assert_eq!(stats[3].parity, -1);
    }

    #[test]
    fn fock_and_parity_runs_agree_on_converged_levels() {
        let dir = tempfile::tempdir().unwrap();
        let a = run(&config(dir.path(), &[("basis", "parity"), ("n_max", "60")])).unwrap();
        let b = run(&config(&dir.path().join("fock"), &[("basis", "fock"), ("n_max", "150")])).unwrap();
        // below the first unconverged level of either sector
        let cut = a.successes().map(|s| s.energies[s.converged_count]).fold(f64::INFINITY, f64::min);
        let mut parity: Vec<(f64, i8)> = a
            .successes()
            .flat_map(|s| s.energies.iter().zip(&s.parities).map(|(e, p)| (*e, *p)))
            .filter(|x| x.0 < cut)
            .collect();
        parity.sort_by(|x, y| x.0.total_cmp(&y.0));
        assert!(parity.len() > 20);
        let fock = b.successes().next().unwrap();
        for (k, (e, p)) in parity.iter().enumerate() {
            assert!((e - fock.energies[k]).abs() < 1e-9, "{k}: {e} vs {} (dP {})", fock.energies[k], fock.delta_p[k]);
            assert_eq!(*p, fock.parities[k]);
        }
    }
}
