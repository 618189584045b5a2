//! Truncation study: how the ΔP certificate responds to `n_max`.

use dicke_core::hamiltonian::build;
use dicke_core::observables::delta_p;
use dicke_core::{eigh, BasisIndex, BasisSpec, ModelParams, Parity};
use serde::Serialize;

use crate::config::{gamma_dir, sector_dir, RunConfig};
use crate::error::CliResult;
use crate::output::{csv, float, Emitter};
use crate::pipeline::check_working_set;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileRow {
    pub n_max: u32,
    pub dim: usize,
    pub converged_count: usize,
    pub ground_e_over_j: f64,
    pub ground_delta_p: f64,
    /// Largest ΔP among states with `E/j <= 1`.
    pub max_delta_p_below_1: f64,
}

pub fn profile(cfg: &RunConfig, params: &ModelParams, sector: Option<Parity>) -> CliResult<Vec<ProfileRow>> {
    let mut rows = Vec::new();
    for &n_max in &cfg.n_max_list {
        let spec = match sector {
            Some(s) => BasisSpec::parity(params.spin, n_max, s),
            None if cfg.basis == dicke_core::BasisKind::Fock => BasisSpec::fock(params.spin, n_max),
            None => BasisSpec::coherent(params.spin, n_max),
        };
        let basis = BasisIndex::enumerate(spec);
        check_working_set(basis.size(), cfg.budget_mb)?;
        let spectrum = eigh(&build(params, &spec)?)?;
        let report = delta_p(&spectrum, &basis, cfg.tol_dp)?;
        let j = params.j();
        let max_below = spectrum
            .energies()
            .iter()
            .zip(&report.delta_p)
            .filter(|(e, _)| **e / j <= 1.0)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max);
        rows.push(ProfileRow {
            n_max,
            dim: basis.size(),
            converged_count: report.converged_count,
            ground_e_over_j: spectrum.energies()[0] / j,
            ground_delta_p: report.delta_p[0],
            max_delta_p_below_1: max_below,
        });
    }
    Ok(rows)
}

/// Profiles every sector of one coupling, writing `convergence.csv` and a
/// manifest per sector; returns printable text.
pub fn run_convergence(cfg: &RunConfig, params: &ModelParams) -> CliResult<String> {
    let mut text = String::new();
    for sector in cfg.sector_list() {
        let rows = profile(cfg, params, sector)?;
        let mut out = Emitter::new(cfg.out.join(gamma_dir(params.gamma)).join(sector_dir(sector)))?;
        let lines = rows.iter().map(|r| {
            vec![
                r.n_max.to_string(),
                r.dim.to_string(),
                r.converged_count.to_string(),
                float(r.ground_e_over_j),
                float(r.ground_delta_p),
                float(r.max_delta_p_below_1),
            ]
        });
        let header = ["n_max", "dim", "converged_count", "ground_E_over_j", "ground_delta_p", "max_delta_p_below_1"];
        out.write("convergence.csv", csv(&header, lines).as_bytes())?;
        let files = out.files().to_vec();
        out.write_json("convergence_manifest.json", &serde_json::json!({ "params": params, "rows": rows, "files": files }))?;

        text.push_str(&format!("gamma = {}  sector = {}\n", params.gamma, sector_dir(sector)));
        text.push_str(&format!("{:>6} {:>7} {:>9} {:>14} {:>11} {:>11}\n", "n_max", "dim", "converged", "E0/j", "dP(E0)", "max dP<=1"));
        for r in &rows {
            text.push_str(&format!(
                "{:>6} {:>7} {:>9} {:>14.10} {:>11.3e} {:>11.3e}\n",
                r.n_max, r.dim, r.converged_count, r.ground_e_over_j, r.ground_delta_p, r.max_delta_p_below_1
            ));
        }
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Analyses, Settings};

    #[test]
    fn certificate_shrinks_with_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Settings::new();
        for (k, v) in [("n_atoms", "4"), ("n_max", "40"), ("n_max_list", "10,20,40"), ("gamma_over_gc", "1.2"), ("sector", "+")] {
            s.set(k, v).unwrap();
        }
        s.set("out", dir.path().to_str().unwrap()).unwrap();
        let cfg = RunConfig::from_settings(&s, Analyses { lattices: false, markers: false, dos: false, stats: false }).unwrap();
        let params = cfg.points().unwrap()[0];
        let rows = profile(&cfg, &params, Some(Parity::Even)).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[1].converged_count > w[0].converged_count));
        assert!(rows.windows(2).all(|w| w[1].ground_delta_p <= w[0].ground_delta_p));
        let text = run_convergence(&cfg, &params).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(dir.path().join("0.6/plus/convergence.csv").exists());
    }
}
