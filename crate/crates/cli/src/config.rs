//! Run configuration: an INI-style file with one section per subcommand,
//! overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dicke_core::analysis::{DEFAULT_BIN_WIDTH, DEFAULT_UNFOLD_DEGREE};
use dicke_core::hamiltonian::DEFAULT_MATRIX_BUDGET_MB;
use dicke_core::observables::{PeresOperator, DEFAULT_DELTA_P_TOLERANCE};
use dicke_core::{BasisKind, ModelParams, Parity, Spin};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Keys accepted in a config file section and as flags.
pub const KEYS: [&str; 20] = [
    "omega",
    "omega0",
    "gamma",
    "gamma_over_gc",
    "n_atoms",
    "n_max",
    "n_max_list",
    "basis",
    "sector",
    "ops",
    "tol_dp",
    "out",
    "workers",
    "budget_mb",
    "bin_width",
    "unfold_degree",
    "lattices",
    "markers",
    "dos",
    "stats",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SectorChoice {
    Plus,
    Minus,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum GammaSpec {
    Absolute(Vec<f64>),
    OverCritical(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Analyses {
    pub lattices: bool,
    pub markers: bool,
    pub dos: bool,
    pub stats: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub omega: f64,
    pub omega0: f64,
    pub n_atoms: u32,
    pub gammas: GammaSpec,
    pub basis: BasisKind,
    pub n_max: u32,
    /// Truncations visited by the `convergence` subcommand.
    pub n_max_list: Vec<u32>,
    pub sectors: SectorChoice,
    pub ops: Vec<PeresOperator>,
    pub analyses: Analyses,
    pub out: PathBuf,
    pub tol_dp: f64,
    pub workers: usize,
    pub budget_mb: u64,
    pub bin_width: f64,
    pub unfold_degree: usize,
}

/// Flat key-value settings, later layers overriding earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn new() -> Self {
        Settings::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
        self.0.insert(key, value.into().trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn overlay(&mut self, other: &Settings) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    /// Reads the general section (keys before any header, or `[general]`)
    /// and then the section named after `command`.
    pub fn from_ini_str(text: &str, command: &str) -> CliResult<Settings> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))?;
        let mut out = Settings::new();
        for section in [None, Some("general"), Some(command)] {
            if let Some(props) = ini.section(section) {
                for (k, v) in props.iter() {
                    out.set(k, v)?;
                }
            }
        }
        Ok(out)
    }

    pub fn from_ini_file(path: &Path, command: &str) -> CliResult<Settings> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Settings::from_ini_str(&text, command)
    }
}

fn parse<T: std::str::FromStr>(key: &str, raw: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| CliError::Config(format!("{key} = '{raw}': {e}")))
}

fn parse_bool(key: &str, raw: &str) -> CliResult<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key} = '{raw}': expected a boolean"))),
    }
}

/// A comma-separated list, or `start:stop:count` for evenly spaced values.
pub fn parse_values(key: &str, raw: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = raw.split(':').collect();
    let values = if parts.len() == 3 {
        let start: f64 = parse(key, parts[0])?;
        let stop: f64 = parse(key, parts[1])?;
        let count: usize = parse(key, parts[2])?;
        match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect(),
        }
    } else if parts.len() == 1 {
        raw.split(',').map(|v| parse::<f64>(key, v.trim())).collect::<CliResult<_>>()?
    } else {
        return Err(CliError::Config(format!("{key} = '{raw}': expected a list or start:stop:count")));
    };
    if values.is_empty() {
        return Err(CliError::Config(format!("{key} lists no values")));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(CliError::Config(format!("{key}: {bad} is not a non-negative number")));
    }
    Ok(values)
}

pub fn parse_basis(raw: &str) -> CliResult<BasisKind> {
    match raw.to_ascii_lowercase().as_str() {
        "fock" => Ok(BasisKind::Fock),
        "coherent" => Ok(BasisKind::Coherent),
        "parity" => Ok(BasisKind::CoherentParity),
        _ => Err(CliError::Config(format!("basis '{raw}': expected fock, coherent or parity"))),
    }
}

pub fn parse_sector(raw: &str) -> CliResult<SectorChoice> {
    match raw.to_ascii_lowercase().as_str() {
        "+" | "plus" | "even" => Ok(SectorChoice::Plus),
        "-" | "minus" | "odd" => Ok(SectorChoice::Minus),
        "both" | "all" => Ok(SectorChoice::Both),
        _ => Err(CliError::Config(format!("sector '{raw}': expected +, - or both"))),
    }
}

impl RunConfig {
    /// Resolves settings into a validated configuration; `defaults` supplies
    /// the analysis toggles for the subcommand.
    pub fn from_settings(s: &Settings, defaults: Analyses) -> CliResult<RunConfig> {
        let num = |key: &str, fallback: f64| -> CliResult<f64> {
            s.get(key).map_or(Ok(fallback), |raw| parse::<f64>(key, raw))
        };
        let flag = |key: &str, fallback: bool| s.get(key).map_or(Ok(fallback), |raw| parse_bool(key, raw));
        let gammas = match (s.get("gamma"), s.get("gamma_over_gc")) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either gamma or gamma_over_gc, not both".into()))
            }
            (Some(raw), None) => GammaSpec::Absolute(parse_values("gamma", raw)?),
            (None, Some(raw)) => GammaSpec::OverCritical(parse_values("gamma_over_gc", raw)?),
            (None, None) => return Err(CliError::Config("no coupling given (gamma or gamma_over_gc)".into())),
        };
        let n_atoms: u32 = parse("n_atoms", s.get("n_atoms").ok_or_else(|| CliError::Config("n_atoms is required".into()))?)?;
        let n_max: u32 = parse("n_max", s.get("n_max").ok_or_else(|| CliError::Config("n_max is required".into()))?)?;
        let n_max_list = match s.get("n_max_list") {
            Some(raw) => raw.split(',').map(|v| parse::<u32>("n_max_list", v.trim())).collect::<CliResult<Vec<_>>>()?,
            None => {
                let mut l: Vec<u32> = [n_max / 2, 3 * n_max / 4, n_max].into_iter().filter(|n| *n > 0).collect();
                l.dedup();
                l
            }
        };
        let ops = match s.get("ops") {
            Some(raw) => raw
                .split(',')
                .map(|v| v.trim().parse::<PeresOperator>().map_err(|e| CliError::Config(format!("ops: {e}"))))
                .collect::<CliResult<Vec<_>>>()?,
            None => PeresOperator::ALL.to_vec(),
        };
        let cfg = RunConfig {
            omega: num("omega", 1.0)?,
            omega0: num("omega0", 1.0)?,
            n_atoms,
            gammas,
            basis: s.get("basis").map_or(Ok(BasisKind::CoherentParity), parse_basis)?,
            n_max,
            n_max_list,
            sectors: s.get("sector").map_or(Ok(SectorChoice::Both), parse_sector)?,
            ops,
            analyses: Analyses {
                lattices: flag("lattices", defaults.lattices)?,
                markers: flag("markers", defaults.markers)?,
                dos: flag("dos", defaults.dos)?,
                stats: flag("stats", defaults.stats)?,
            },
            out: PathBuf::from(s.get("out").unwrap_or("out")),
            tol_dp: num("tol_dp", DEFAULT_DELTA_P_TOLERANCE)?,
            workers: s.get("workers").map_or(Ok(1), |raw| parse("workers", raw))?,
            budget_mb: s.get("budget_mb").map_or(Ok(DEFAULT_MATRIX_BUDGET_MB), |raw| parse("budget_mb", raw))?,
            bin_width: num("bin_width", DEFAULT_BIN_WIDTH)?,
            unfold_degree: s.get("unfold_degree").map_or(Ok(DEFAULT_UNFOLD_DEGREE), |raw| parse("unfold_degree", raw))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.n_atoms == 0 {
            return Err(CliError::Config("n_atoms must be positive".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if !(self.tol_dp > 0.0 && self.tol_dp < 1.0) {
            return Err(CliError::Config(format!("tol_dp = {} must lie in (0, 1)", self.tol_dp)));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(CliError::Config("bin_width must be positive".into()));
        }
        if self.ops.is_empty() && self.analyses.lattices {
            return Err(CliError::Config("no Peres operators selected".into()));
        }
        if self.basis != BasisKind::CoherentParity && self.sectors != SectorChoice::Both {
            return Err(CliError::Config("a single sector needs the parity basis".into()));
        }
        let points = self.points()?;
        let mut names: Vec<String> = points.iter().map(|p| gamma_dir(p.gamma)).collect();
        names.sort();
        names.dedup();
        if names.len() != points.len() {
            return Err(CliError::Config("coupling list contains duplicates".into()));
        }
        Ok(())
    }

    pub fn spin(&self) -> Spin {
        Spin::from_atoms(self.n_atoms)
    }

    /// One parameter set per coupling.
    pub fn points(&self) -> CliResult<Vec<ModelParams>> {
        let gc = (self.omega * self.omega0).sqrt() / 2.0;
        let gammas: Vec<f64> = match &self.gammas {
            GammaSpec::Absolute(g) => g.clone(),
            GammaSpec::OverCritical(r) => r.iter().map(|x| x * gc).collect(),
        };
        gammas
            .into_iter()
            .map(|g| ModelParams::new(self.omega, self.omega0, g, self.spin()).map_err(CliError::from))
            .collect()
    }

    /// Sectors to diagonalize; `None` is the whole space.
    pub fn sector_list(&self) -> Vec<Option<Parity>> {
        match (self.basis, self.sectors) {
            (BasisKind::CoherentParity, SectorChoice::Plus) => vec![Some(Parity::Even)],
            (BasisKind::CoherentParity, SectorChoice::Minus) => vec![Some(Parity::Odd)],
            (BasisKind::CoherentParity, SectorChoice::Both) => vec![Some(Parity::Even), Some(Parity::Odd)],
            _ => vec![None],
        }
    }
}

/// Directory name of a coupling.
pub fn gamma_dir(gamma: f64) -> String {
    format!("{gamma}")
}

pub fn sector_dir(sector: Option<Parity>) -> &'static str {
    sector.map_or("all", Parity::label)
}
