//! Dense Dicke and Tavis-Cummings Hamiltonians.
//!
//! The Dicke Hamiltonian is
//! `H = omega a^dag a + omega0 Jz + (2 gamma / sqrt(N)) (a + a^dag) Jx`.
//! In the extended coherent basis it is rewritten as
//! `omega A^dag A - omega G^2 Jx^2 + omega0 Jz` with `A = a + G Jx` and
//! `G = 2 gamma / (omega sqrt(N))`; the only off-diagonal piece is `Jz`,
//! which flips the `Jx` projection by one and carries a displaced-oscillator
//! overlap between the two displaced vacua.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::algebra::{ladder_coefficient, OverlapTable, Spin};
use crate::basis::{BasisIndex, BasisKind, BasisSpec, Label, Parity};
use crate::error::{DickeError, Result};

/// Default ceiling on a single dense matrix, in MiB.
pub const DEFAULT_MATRIX_BUDGET_MB: u64 = 8 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub omega0: f64,
    pub gamma: f64,
    pub spin: Spin,
}

impl ModelParams {
    pub fn new(omega: f64, omega0: f64, gamma: f64, spin: Spin) -> Result<Self> {
        let p = ModelParams { omega, omega0, gamma, spin };
        p.validate()?;
        Ok(p)
    }

    /// Resonant parameters `omega = omega0 = 1` with `gamma = ratio * gamma_c`.
    pub fn resonant(gamma_over_gc: f64, spin: Spin) -> Result<Self> {
        ModelParams::new(1.0, 1.0, gamma_over_gc * 0.5, spin)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(DickeError::InvalidInput(what.to_string()));
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return bad("omega must be positive");
        }
        if !(self.omega0.is_finite() && self.omega0 >= 0.0) {
            return bad("omega0 must be non-negative");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if self.spin.two_j() == 0 {
            return bad("at least one atom is required");
        }
        Ok(())
    }

    /// Critical coupling `sqrt(omega0 omega) / 2`.
    pub fn gamma_c(&self) -> f64 {
        (self.omega0 * self.omega).sqrt() / 2.0
    }

    pub fn n_atoms(&self) -> u32 {
        self.spin.n_atoms()
    }

    pub fn j(&self) -> f64 {
        self.spin.j()
    }

    /// Displacement scale `G = 2 gamma / (omega sqrt(N))`.
    pub fn displacement_scale(&self) -> f64 {
        2.0 * self.gamma / (self.omega * (self.n_atoms() as f64).sqrt())
    }

    /// Dicke coupling prefactor `2 gamma / sqrt(N)` multiplying `(a + a^dag) Jx`.
    pub fn dicke_coupling(&self) -> f64 {
        2.0 * self.gamma / (self.n_atoms() as f64).sqrt()
    }
}

/// Where a matrix came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Basis(BasisSpec),
    /// A Tavis-Cummings block at fixed excitation number.
    TcBlock { spin: Spin, lambda: u32 },
    Unspecified,
}

impl Provenance {
    pub fn dump_code(&self) -> u32 {
        match self {
            Provenance::Basis(spec) => spec.dump_code(),
            Provenance::TcBlock { .. } => 4,
            Provenance::Unspecified => 255,
        }
    }

    pub fn basis(&self) -> Option<&BasisSpec> {
        match self {
            Provenance::Basis(spec) => Some(spec),
            _ => None,
        }
    }
}

/// Dense real symmetric matrix. Every write mirrors, so the stored array is
/// exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    entries: Vec<f64>,
    provenance: Provenance,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize, provenance: Provenance) -> Result<Self> {
        check_capacity(dim, DEFAULT_MATRIX_BUDGET_MB)?;
        Ok(SymmetricMatrix { dim, entries: vec![0.0; dim * dim], provenance })
    }

    /// Builds from a row-major array; the lower triangle is authoritative.
    pub fn from_row_major(dim: usize, data: &[f64], provenance: Provenance) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(DickeError::InvalidInput(format!(
                "expected {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        let mut m = SymmetricMatrix::zeros(dim, provenance)?;
        for i in 0..dim {
            for k in 0..=i {
                m.set(i, k, data[i * dim + k]);
            }
        }
        m.ensure_finite()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.entries[row * self.dim + col] = value;
        self.entries[col * self.dim + row] = value;
    }

    #[inline]
    fn add(&mut self, row: usize, col: usize, value: f64) {
        let v = self.entries[row * self.dim + col] + value;
        self.set(row, col, v);
    }

    /// Row-major (equivalently column-major) storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_faer(&self) -> faer::MatRef<'_, f64> {
        faer::MatRef::from_column_major_slice(&self.entries, self.dim, self.dim)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|k| i == k || self.get(i, k) == 0.0))
    }

    pub fn is_exactly_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|k| self.get(i, k).to_bits() == self.get(k, i).to_bits()))
    }

    /// `P^T M P` for the permutation sending old index `perm[i]` to new `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut out = SymmetricMatrix::zeros(self.dim, Provenance::Unspecified)?;
        for i in 0..self.dim {
            for k in 0..=i {
                out.set(i, k, self.get(perm[i], perm[k]));
            }
        }
        Ok(out)
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.entries.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(DickeError::NonFinite("matrix entries"))
        }
    }

    /// Binary dump: magic `DPH1`, `u32` dimension, `u32` basis code, then the
    /// lower triangle row by row as little-endian `f64`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"DPH1")?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&self.provenance.dump_code().to_le_bytes())?;
        out.write_all(&[0u8; 4])?;
        for i in 0..self.dim {
            for k in 0..=i {
                out.write_all(&self.get(i, k).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump; returns the matrix and its basis code.
    pub fn read_dump<R: Read>(mut input: R) -> Result<(Self, u32)> {
        let mut header = [0u8; 16];
        input.read_exact(&mut header)?;
        if &header[..4] != b"DPH1" {
            return Err(DickeError::InvalidInput("missing DPH1 magic".into()));
        }
        let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let code = u32::from_le_bytes(header[8..12].try_into().unwrap());
        let mut m = SymmetricMatrix::zeros(dim, Provenance::Unspecified)?;
        let mut buf = [0u8; 8];
        for i in 0..dim {
            for k in 0..=i {
                input.read_exact(&mut buf)?;
                m.set(i, k, f64::from_le_bytes(buf));
            }
        }
        Ok((m, code))
    }
}

/// Approximate bytes a dense `dim x dim` f64 matrix occupies.
pub fn dense_bytes(dim: usize) -> Option<u64> {
    (dim as u64).checked_mul(dim as u64)?.checked_mul(8)
}

pub fn check_capacity(dim: usize, budget_mb: u64) -> Result<()> {
    let budget = budget_mb.saturating_mul(1 << 20);
    match dense_bytes(dim) {
        Some(bytes) if bytes <= budget => Ok(()),
        other => Err(DickeError::Capacity {
            dim,
            required_mb: other.map_or(u64::MAX, |b| b >> 20),
            budget_mb,
        }),
    }
}

/// Coefficients of an operator that is diagonal in `N` and `m` up to the
/// three structures met in the coherent basis.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CoherentTerms {
    /// Coefficient of `N` on the diagonal.
    pub number: f64,
    /// Coefficient of `m^2` on the diagonal.
    pub m_squared: f64,
    /// Coefficient of `Jz`, which couples `m` to `m +- 1` through overlaps.
    pub jz: f64,
    /// Coefficient of `m (A + A^dag)`, coupling `N` to `N +- 1` at fixed `m`.
    pub m_shift: f64,
}

/// Single element `<N', m'| O |N, m>` of a [`CoherentTerms`] operator in
/// the full coherent basis.
#[inline]
pub(crate) fn coherent_element(
    terms: &CoherentTerms,
    spin: Spin,
    table: &OverlapTable,
    row: Label,
    col: Label,
) -> f64 {
    let dm = row.two_m - col.two_m;
    if dm == 0 {
        let m = row.m();
        if row.excitations == col.excitations {
            terms.number * row.excitations as f64 + terms.m_squared * m * m
        } else if row.excitations.abs_diff(col.excitations) == 1 && terms.m_shift != 0.0 {
            let upper = row.excitations.max(col.excitations) as f64;
            terms.m_shift * m * upper.sqrt()
        } else {
            0.0
        }
    } else if dm.abs() == 2 && terms.jz != 0.0 {
        let spin_part = 0.5 * ladder_coefficient(spin, row.two_m, col.two_m);
        terms.jz * spin_part * table.get(row.excitations, col.excitations, dm > 0)
    } else {
        0.0
    }
}

/// Components of a basis state over full coherent labels.
fn coherent_components(spec: &BasisSpec, label: Label) -> ([(Label, f64); 2], usize) {
    let single = ([(label, 1.0), (label, 0.0)], 1);
    match (spec.kind, spec.sector) {
        (BasisKind::CoherentParity, Some(sector)) if label.two_m != 0 => {
            let shell = if (label.excitations + spec.spin.two_j()) % 2 == 0 { 1.0 } else { -1.0 };
            let c = std::f64::consts::FRAC_1_SQRT_2;
            let mirror = Label { excitations: label.excitations, two_m: -label.two_m };
            ([(label, c), (mirror, sector.sign() as f64 * shell * c)], 2)
        }
        _ => single,
    }
}

/// Matrix of a [`CoherentTerms`] operator in a coherent or parity basis.
pub(crate) fn coherent_operator_matrix(
    basis: &BasisIndex,
    terms: &CoherentTerms,
    table: &OverlapTable,
) -> Result<SymmetricMatrix> {
    let spec = *basis.spec();
    debug_assert!(matches!(spec.kind, BasisKind::Coherent | BasisKind::CoherentParity));
    let mut h = SymmetricMatrix::zeros(basis.size(), Provenance::Basis(spec))?;
    let ms = basis.projections();
    let parity = spec.kind == BasisKind::CoherentParity;
    for (bi, &m_row) in ms.iter().enumerate() {
        for &m_col in &ms[..=bi] {
            let direct = (m_row - m_col).abs() <= 2;
            let mirrored = parity && m_row + m_col <= 2;
            if !direct && !mirrored {
                continue;
            }
            let rows = basis.m_range(m_row);
            let cols = basis.m_range(m_col);
            for r in rows.clone() {
                let row_label = basis.label_of(r);
                let (rc, nr) = coherent_components(&spec, row_label);
                for c in cols.clone() {
                    if c > r {
                        break;
                    }
                    let col_label = basis.label_of(c);
                    let (cc, nc) = coherent_components(&spec, col_label);
                    let mut v = 0.0;
                    for &(a, wa) in &rc[..nr] {
                        for &(b, wb) in &cc[..nc] {
                            let e = coherent_element(terms, spec.spin, table, a, b);
                            if e != 0.0 {
                                v += wa * wb * e;
                            }
                        }
                    }
                    if v != 0.0 {
                        h.set(r, c, v);
                    }
                }
            }
        }
    }
    h.ensure_finite()?;
    Ok(h)
}

/// Dicke Hamiltonian over `|n> (x) |j, m>` in the `Jz` eigenbasis.
pub fn build_fock(params: &ModelParams, n_max: u32) -> Result<SymmetricMatrix> {
    params.validate()?;
    let spec = BasisSpec::fock(params.spin, n_max);
    let basis = BasisIndex::enumerate(spec);
    let mut h = SymmetricMatrix::zeros(basis.size(), Provenance::Basis(spec))?;
    let coupling = params.dicke_coupling();
    for (i, l) in basis.labels().iter().enumerate() {
        h.set(i, i, params.omega * l.excitations as f64 + params.omega0 * l.m());
        if coupling == 0.0 || l.excitations == n_max {
            continue;
        }
        // (a + a^dag) Jx linking (n, m) with (n + 1, m +- 1)
        let bosonic = ((l.excitations + 1) as f64).sqrt();
        for dm in [-2, 2] {
            let target = Label { excitations: l.excitations + 1, two_m: l.two_m + dm };
            if let Some(k) = basis.index_of(target) {
                let spin_part = 0.5 * ladder_coefficient(params.spin, target.two_m, l.two_m);
                h.set(k, i, coupling * bosonic * spin_part);
            }
        }
    }
    h.ensure_finite()?;
    Ok(h)
}

fn hamiltonian_terms(params: &ModelParams) -> CoherentTerms {
    let g = params.displacement_scale();
    CoherentTerms {
        number: params.omega,
        m_squared: -params.omega * g * g,
        jz: params.omega0,
        m_shift: 0.0,
    }
}

/// Dicke Hamiltonian over the extended coherent basis `|N; j, m>`.
pub fn build_coherent(params: &ModelParams, n_max: u32) -> Result<SymmetricMatrix> {
    params.validate()?;
    let basis = BasisIndex::enumerate(BasisSpec::coherent(params.spin, n_max));
    let table = OverlapTable::new(n_max, params.displacement_scale())?;
    coherent_operator_matrix(&basis, &hamiltonian_terms(params), &table)
}

/// Dicke Hamiltonian restricted to one parity block of the coherent basis.
pub fn build_coherent_parity(
    params: &ModelParams,
    n_max: u32,
    sector: Parity,
) -> Result<SymmetricMatrix> {
    params.validate()?;
    let basis = BasisIndex::enumerate(BasisSpec::parity(params.spin, n_max, sector));
    let table = OverlapTable::new(n_max, params.displacement_scale())?;
    coherent_operator_matrix(&basis, &hamiltonian_terms(params), &table)
}

/// Builds a Hamiltonian for any [`BasisSpec`].
pub fn build(params: &ModelParams, spec: &BasisSpec) -> Result<SymmetricMatrix> {
    match (spec.kind, spec.sector) {
        (BasisKind::Fock, _) => build_fock(params, spec.n_max),
        (BasisKind::Coherent, _) => build_coherent(params, spec.n_max),
        (BasisKind::CoherentParity, Some(s)) => build_coherent_parity(params, spec.n_max, s),
        (BasisKind::CoherentParity, None) => {
            Err(DickeError::InvalidInput("parity basis requires a sector".into()))
        }
    }
}

/// Tavis-Cummings coupling prefactor `gamma / sqrt(N)`.
fn tc_coupling(params: &ModelParams) -> f64 {
    params.gamma / (params.n_atoms() as f64).sqrt()
}

/// Projections `2m` of the states `|lambda - j - m> (x) |j, m>`, ascending.
pub fn tc_block_projections(spin: Spin, lambda: u32) -> Vec<i32> {
    let two_j = spin.two_j() as i32;
    let top = (2 * lambda as i32 - two_j).min(two_j);
    spin.projections().filter(|&m| m <= top).collect()
}

/// Tavis-Cummings Hamiltonian
/// `omega a^dag a + omega0 Jz + (gamma / sqrt(N)) (a J+ + a^dag J-)` inside
/// the block with `a^dag a + Jz + j = lambda`.
pub fn build_tc_block(params: &ModelParams, lambda: u32) -> Result<SymmetricMatrix> {
    params.validate()?;
    let spin = params.spin;
    let ms = tc_block_projections(spin, lambda);
    let two_j = spin.two_j() as i32;
    let photons = |two_m: i32| (2 * lambda as i32 - two_j - two_m) / 2;
    let mut h = SymmetricMatrix::zeros(ms.len(), Provenance::TcBlock { spin, lambda })?;
    let g = tc_coupling(params);
    for (i, &m) in ms.iter().enumerate() {
        let n = photons(m) as f64;
        h.set(i, i, params.omega * n + params.omega0 * m as f64 / 2.0);
        if i > 0 {
            // a J+ takes (n, m - 1) to (n - 1, m)
            let lower = ms[i - 1];
            let v = g * (photons(lower) as f64).sqrt() * ladder_coefficient(spin, m, lower);
            h.set(i, i - 1, v);
        }
    }
    h.ensure_finite()?;
    Ok(h)
}

/// Tavis-Cummings Hamiltonian over the full truncated Fock basis.
pub fn build_tc_fock(params: &ModelParams, n_max: u32) -> Result<SymmetricMatrix> {
    params.validate()?;
    let spec = BasisSpec::fock(params.spin, n_max);
    let basis = BasisIndex::enumerate(spec);
    let mut h = SymmetricMatrix::zeros(basis.size(), Provenance::Basis(spec))?;
    let g = tc_coupling(params);
    for (i, l) in basis.labels().iter().enumerate() {
        h.set(i, i, params.omega * l.excitations as f64 + params.omega0 * l.m());
        // a^dag J- : (n, m) -> (n + 1, m - 1)
        let target = Label { excitations: l.excitations + 1, two_m: l.two_m - 2 };
        if let Some(k) = basis.index_of(target) {
            let v = g * ((l.excitations + 1) as f64).sqrt() * ladder_coefficient(params.spin, target.two_m, l.two_m);
            h.add(k, i, v);
        }
    }
    h.ensure_finite()?;
    Ok(h)
}
