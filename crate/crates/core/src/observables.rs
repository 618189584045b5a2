//! Peres operators, parity labels and the truncation certificate.

use std::fmt;
use std::str::FromStr;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use serde::{Deserialize, Serialize};

use crate::algebra::{jx_squared_matrix, OverlapTable};
use crate::basis::{BasisIndex, BasisKind, Label, Parity};
use crate::error::{DickeError, Result};
use crate::hamiltonian::{coherent_operator_matrix, CoherentTerms, ModelParams, Provenance, SymmetricMatrix};
use crate::solver::Spectrum;

/// Default ΔP threshold for calling a state converged.
pub const DEFAULT_DELTA_P_TOLERANCE: f64 = 1e-12;

/// Relative gap below which eigenvalues are treated as degenerate when
/// resolving parity.
pub const DEGENERACY_GAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeresOperator {
    Jz,
    Jx2,
    PhotonNumber,
}

impl PeresOperator {
    pub const ALL: [PeresOperator; 3] = [PeresOperator::Jz, PeresOperator::Jx2, PeresOperator::PhotonNumber];

    pub fn name(self) -> &'static str {
        match self {
            PeresOperator::Jz => "Jz",
            PeresOperator::Jx2 => "Jx2",
            PeresOperator::PhotonNumber => "n",
        }
    }
}

impl fmt::Display for PeresOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PeresOperator {
    type Err = DickeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jz" => Ok(PeresOperator::Jz),
            "jx2" | "jx^2" | "jx_squared" => Ok(PeresOperator::Jx2),
            "n" | "photon_n" | "photons" => Ok(PeresOperator::PhotonNumber),
            "jx" => Err(DickeError::InvalidInput(
                "Jx connects states of different parity and cannot serve as a Peres operator".into(),
            )),
            other => Err(DickeError::InvalidInput(format!("unknown Peres operator '{other}'"))),
        }
    }
}

/// Matrix of a Peres operator in `basis`.
pub fn peres_matrix(op: PeresOperator, basis: &BasisIndex, params: &ModelParams) -> Result<SymmetricMatrix> {
    let spec = *basis.spec();
    if spec.spin != params.spin {
        return Err(DickeError::InvalidInput("basis and parameters disagree on j".into()));
    }
    match spec.kind {
        BasisKind::Fock => {
            let mut m = SymmetricMatrix::zeros(basis.size(), Provenance::Basis(spec))?;
            let spin = spec.spin;
            let x2 = jx_squared_matrix(spin);
            let sd = spin.dim();
            for (i, l) in basis.labels().iter().enumerate() {
                match op {
                    PeresOperator::Jz => m.set(i, i, l.m()),
                    PeresOperator::PhotonNumber => m.set(i, i, l.excitations as f64),
                    PeresOperator::Jx2 => {
                        let row = spin.projection_index(l.two_m);
                        for dm in [-4, -2, 0] {
                            let other = Label { excitations: l.excitations, two_m: l.two_m + dm };
                            if let Some(k) = basis.index_of(other) {
                                let col = spin.projection_index(other.two_m);
                                m.set(i, k, x2[row * sd + col]);
                            }
                        }
                    }
                }
            }
            Ok(m)
        }
        BasisKind::Coherent | BasisKind::CoherentParity => {
            let g = params.displacement_scale();
            let terms = match op {
                PeresOperator::Jz => CoherentTerms { jz: 1.0, ..Default::default() },
                PeresOperator::Jx2 => CoherentTerms { m_squared: 1.0, ..Default::default() },
                // a = A - G Jx
                PeresOperator::PhotonNumber => CoherentTerms {
                    number: 1.0,
                    m_squared: g * g,
                    m_shift: -g,
                    jz: 0.0,
                },
            };
            let table = OverlapTable::new(spec.n_max, g)?;
            coherent_operator_matrix(basis, &terms, &table)
        }
    }
}

/// `v_k^T O v_k` for every eigenvector.
pub fn expectation(spectrum: &Spectrum, op: &SymmetricMatrix) -> Result<Vec<f64>> {
    if spectrum.dim() != op.dim() {
        return Err(DickeError::InvalidInput("operator and spectrum dimensions differ".into()));
    }
    if let (Some(a), Some(b)) = (spectrum.provenance().basis(), op.provenance().basis()) {
        if a != b {
            return Err(DickeError::InvalidInput(format!(
                "operator basis {b:?} differs from spectrum basis {a:?}"
            )));
        }
    }
    let n = spectrum.dim();
    let mut entries = Vec::new();
    for i in 0..n {
        for k in 0..=i {
            let x = op.get(i, k);
            if x != 0.0 {
                entries.push((i, k, if i == k { x } else { 2.0 * x }));
            }
        }
    }
    // a dense product wins once the operator fills more than ~1/8 of a triangle
    if entries.len() < n * n / 16 {
        return Ok((0..n)
            .map(|state| {
                let v = spectrum.vector(state);
                entries.iter().map(|&(i, k, x)| x * v[i] * v[k]).sum()
            })
            .collect());
    }
    let v = spectrum.vectors();
    let mut ov = Mat::<f64>::zeros(n, n);
    matmul(ov.as_mut(), Accum::Replace, op.as_faer(), v, 1.0, Par::Seq);
    Ok((0..n)
        .map(|k| (0..n).map(|i| v[(i, k)] * ov[(i, k)]).sum())
        .collect())
}

/// Parity eigenvalue of a Fock label, `(-1)^(n + m + j)`.
pub fn fock_parity(label: &Label, two_j: u32) -> f64 {
    let exponent = label.excitations as i64 + ((label.two_m + two_j as i32) / 2) as i64;
    if exponent % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Image of a coherent basis state under the parity operator:
/// `Pi |N; j, m> = (-1)^(N + 2j) |N; j, -m>`.
///
/// The `(-1)^(2j)` factor comes from the phase convention of the `Jx`
/// eigenstates (positive `Jz` ladder elements) and only matters for
/// half-integer `j`.
pub fn coherent_parity_image(label: Label, two_j: u32) -> (Label, f64) {
    let sign = if (label.excitations + two_j) % 2 == 0 { 1.0 } else { -1.0 };
    (Label { excitations: label.excitations, two_m: -label.two_m }, sign)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityLabels {
    pub signs: Vec<i8>,
    /// `<Pi>` after rotating degenerate clusters, before rounding.
    pub raw: Vec<f64>,
}

/// `<Pi>` for every eigenstate.
///
/// Inside clusters of numerically degenerate levels the solver may return
/// any mixture of parity states, so `Pi` is diagonalized within each
/// cluster first. Parity-block spectra carry their sector sign directly.
pub fn parity_expectation(spectrum: &Spectrum, params: &ModelParams) -> Result<ParityLabels> {
    let spec = *spectrum
        .provenance()
        .basis()
        .ok_or_else(|| DickeError::InvalidInput("parity labels need a Dicke-basis spectrum".into()))?;
    if spec.spin != params.spin {
        return Err(DickeError::InvalidInput("spectrum and parameters disagree on j".into()));
    }
    let two_j = spec.spin.two_j();
    let basis = BasisIndex::enumerate(spec);
    // Pi |i> = sign[i] |image[i]>
    let (image, sign): (Vec<usize>, Vec<f64>) = match spec.kind {
        BasisKind::CoherentParity => {
            let s = spec.sector.map_or(1, Parity::sign) as i8;
            return Ok(ParityLabels { signs: vec![s; spectrum.dim()], raw: vec![s as f64; spectrum.dim()] });
        }
        BasisKind::Fock => basis.labels().iter().enumerate().map(|(i, l)| (i, fock_parity(l, two_j))).unzip(),
        BasisKind::Coherent => basis
            .labels()
            .iter()
            .map(|l| {
                let (img, s) = coherent_parity_image(*l, two_j);
                (basis.index_of(img).expect("coherent basis is closed under parity"), s)
            })
            .unzip(),
    };
    let energies = spectrum.energies();
    let gap = DEGENERACY_GAP * spectrum.residual_report().frobenius_norm.max(1.0);
    let mut raw = vec![0.0; spectrum.dim()];
    let mut start = 0;
    while start < energies.len() {
        let mut end = start + 1;
        while end < energies.len() && energies[end] - energies[end - 1] < gap {
            end += 1;
        }
        let size = end - start;
        let mut block = Mat::<f64>::zeros(size, size);
        for a in 0..size {
            for b in 0..=a {
                let va = spectrum.vector(start + a);
                let vb = spectrum.vector(start + b);
                let x: f64 = (0..va.len()).map(|i| va[i] * sign[i] * vb[image[i]]).sum();
                block[(a, b)] = x;
                block[(b, a)] = x;
            }
        }
        let values = if size == 1 {
            vec![block[(0, 0)]]
        } else {
            let mut v = block
                .self_adjoint_eigenvalues(faer::Side::Lower)
                .map_err(|e| DickeError::Solver { dim: size, detail: format!("{e:?}") })?;
            v.reverse();
            v
        };
        raw[start..end].copy_from_slice(&values);
        start = end;
    }
    let mut signs = Vec::with_capacity(raw.len());
    for (state, &value) in raw.iter().enumerate() {
        if value.abs() < 1.0 - 1e-6 {
            return Err(DickeError::ParityResolution { state, value });
        }
        signs.push(if value > 0.0 { 1 } else { -1 });
    }
    Ok(ParityLabels { signs, raw })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Weight of each eigenstate in the top retained excitation shell.
    pub delta_p: Vec<f64>,
    pub tolerance: f64,
    /// Length of the leading run of states with `delta_p < tolerance`.
    pub converged_count: usize,
}

impl ConvergenceReport {
    pub fn is_converged(&self, state: usize) -> bool {
        self.delta_p[state] < self.tolerance
    }
}

/// Per-state probability `P_N = sum_m |C_{N,m}|^2` of finding `N`
/// excitations, for `N = 0..=n_max`.
///
/// In the parity basis each label carries the full weight of its `+-m`
/// pair, so summing squared components by shell gives the same `P_N`.
pub fn shell_probabilities(spectrum: &Spectrum, basis: &BasisIndex, state: usize) -> Vec<f64> {
    let mut p = vec![0.0; basis.spec().n_max as usize + 1];
    for (c, l) in spectrum.vector(state).iter().zip(basis.labels()) {
        p[l.excitations as usize] += c * c;
    }
    p
}

/// Top-shell weight `sum_m |C_{N_top, m}|^2` for every eigenstate.
pub fn delta_p(spectrum: &Spectrum, basis: &BasisIndex, tolerance: f64) -> Result<ConvergenceReport> {
    if spectrum.dim() != basis.size() {
        return Err(DickeError::InvalidInput("spectrum and basis sizes differ".into()));
    }
    if let Some(spec) = spectrum.provenance().basis() {
        if spec != basis.spec() {
            return Err(DickeError::InvalidInput("spectrum was computed in another basis".into()));
        }
    }
    let top = basis.spec().n_max;
    let shell: Vec<usize> = basis
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.excitations == top)
        .map(|(i, _)| i)
        .collect();
    let delta_p: Vec<f64> = (0..spectrum.dim())
        .map(|k| {
            let v = spectrum.vector(k);
            shell.iter().map(|&i| v[i] * v[i]).sum::<f64>().min(1.0)
        })
        .collect();
    let converged_count = delta_p.iter().take_while(|&&d| d < tolerance).count();
    Ok(ConvergenceReport { delta_p, tolerance, converged_count })
}
