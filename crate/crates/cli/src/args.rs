//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Analyses, RunConfig, Settings};
use crate::convergence::run_convergence;
use crate::error::{CliError, CliResult};
use crate::pipeline::{run, PointResult};
use crate::sweep::{partial_failure, sweep, table};

#[derive(Debug, Parser)]
#[command(name = "dicke", version, about = "Exact diagonalization of the Dicke model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energies, convergence certificate and density of states.
    Spectrum(Flags),
    /// Peres lattices and ESQPT markers on top of the spectrum.
    Lattice(Flags),
    /// Runs over a list or range of couplings with a summary table.
    Sweep(Flags),
    /// Lattices plus level-spacing statistics per parity sector.
    Stats(Flags),
    /// ΔP profile as the truncation grows.
    Convergence(Flags),
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Config file with a general section and one section per subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub omega: Option<String>,
    #[arg(long)]
    pub omega0: Option<String>,
    /// Coupling, a comma list, or start:stop:count.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    /// Coupling in units of the critical one.
    #[arg(long)]
    pub gamma_over_gc: Option<String>,
    /// Number of atoms; j is half of it.
    #[arg(long)]
    pub n_atoms: Option<String>,
    #[arg(long)]
    pub n_max: Option<String>,
    /// Truncations for the convergence profile.
    #[arg(long)]
    pub n_max_list: Option<String>,
    /// fock, coherent or parity.
    #[arg(long)]
    pub basis: Option<String>,
    /// +, - or both.
    #[arg(long, allow_hyphen_values = true)]
    pub sector: Option<String>,
    /// Comma list of Jz, Jx2, n.
    #[arg(long)]
    pub ops: Option<String>,
    #[arg(long)]
    pub tol_dp: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    /// Memory budget for dense matrices, in MiB.
    #[arg(long)]
    pub budget_mb: Option<String>,
    #[arg(long)]
    pub bin_width: Option<String>,
    #[arg(long)]
    pub unfold_degree: Option<String>,
}

impl Flags {
    fn settings(&self) -> CliResult<Settings> {
        let mut s = Settings::new();
        let pairs = [
            ("omega", &self.omega),
            ("omega0", &self.omega0),
            ("gamma", &self.gamma),
            ("gamma_over_gc", &self.gamma_over_gc),
            ("n_atoms", &self.n_atoms),
            ("n_max", &self.n_max),
            ("n_max_list", &self.n_max_list),
            ("basis", &self.basis),
            ("sector", &self.sector),
            ("ops", &self.ops),
            ("tol_dp", &self.tol_dp),
            ("out", &self.out),
            ("workers", &self.workers),
            ("budget_mb", &self.budget_mb),
            ("bin_width", &self.bin_width),
            ("unfold_degree", &self.unfold_degree),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                s.set(key, v.as_str())?;
            }
        }
        Ok(s)
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Lattice(_) => "lattice",
            Command::Sweep(_) => "sweep",
            Command::Stats(_) => "stats",
            Command::Convergence(_) => "convergence",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Spectrum(f) | Command::Lattice(f) | Command::Sweep(f) | Command::Stats(f) | Command::Convergence(f) => f,
        }
    }

    fn analyses(&self) -> Analyses {
        let (lattices, markers, stats) = match self {
            Command::Spectrum(_) | Command::Convergence(_) => (false, false, false),
            Command::Lattice(_) => (true, true, false),
            Command::Sweep(_) | Command::Stats(_) => (true, true, true),
        };
        Analyses { lattices, markers, dos: !matches!(self, Command::Convergence(_)), stats }
    }

    /// Merges the config file (if any) with the flags; flags win.
    pub fn config(&self) -> CliResult<RunConfig> {
        let flags = self.flags();
        let mut settings = match &flags.config {
            Some(path) => Settings::from_ini_file(path, self.name())?,
            None => Settings::new(),
        };
        settings.overlay(&flags.settings()?);
        RunConfig::from_settings(&settings, self.analyses())
    }
}

fn describe(point: &PointResult) -> String {
    let mut out = String::new();
    for s in point.successes() {
        let j = s.params.j();
        out.push_str(&format!(
            "gamma = {}  sector = {}  dim = {}  converged = {}  E0/j = {:.10}  residual = {:.2e}  build {:.1}s  solve {:.1}s\n",
            s.params.gamma,
            crate::config::sector_dir(s.sector),
            s.dim,
            s.converged_count,
            s.ground_energy() / j,
            s.report.relative_residual(),
            s.timings.build_s,
            s.timings.solve_s,
        ));
    }
    if let Some(Ok(m)) = point.markers() {
        out.push_str(&format!("markers: dynamic {:.3}  static {:.3}\n", m.dynamic_marker, m.static_marker));
    }
    out
}

/// Runs a parsed command, returning the text to print. A sweep with
/// failing points prints its table and then reports the partial failure.
pub fn execute(cli: &Cli) -> (String, Option<CliError>) {
    let cfg = match cli.command.config() {
        Ok(c) => c,
        Err(e) => return (String::new(), Some(e)),
    };
    match &cli.command {
        Command::Sweep(_) => match sweep(&cfg) {
            Ok(outcome) => (table(&outcome.rows), partial_failure(&outcome)),
            Err(e) => (String::new(), Some(e)),
        },
        Command::Convergence(_) => {
            let points = match cfg.points() {
                Ok(p) => p,
                Err(e) => return (String::new(), Some(e)),
            };
            let mut text = String::new();
            for p in &points {
                match run_convergence(&cfg, p) {
                    Ok(t) => text.push_str(&t),
                    Err(e) => return (text, Some(e)),
                }
            }
            (text, None)
        }
        _ => match run(&cfg) {
            Ok(point) => (describe(&point), None),
            Err(e) => (String::new(), Some(e)),
        },
    }
}
