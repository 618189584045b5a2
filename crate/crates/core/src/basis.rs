//! Product Fock, extended coherent and parity-adapted coherent bases.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::algebra::Spin;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `|n> (x) |j, m>` with `m` the `Jz` projection.
    Fock,
    /// `|N; j, m>`: displaced number states with `m` the `Jx` projection.
    Coherent,
    /// Parity-adapted combinations of coherent states.
    CoherentParity,
}

impl BasisKind {
    pub fn code(self) -> u32 {
        match self {
            BasisKind::Fock => 0,
            BasisKind::Coherent => 1,
            BasisKind::CoherentParity => 2,
        }
    }
}

/// Eigenvalue of the parity operator selecting a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> i32 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }

    pub fn from_sign(sign: i32) -> Option<Parity> {
        match sign {
            1 => Some(Parity::Even),
            -1 => Some(Parity::Odd),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Parity::Even => "plus",
            Parity::Odd => "minus",
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if *self == Parity::Even { "+" } else { "-" })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub spin: Spin,
    pub n_max: u32,
    /// Set exactly when `kind` is [`BasisKind::CoherentParity`].
    pub sector: Option<Parity>,
}

impl BasisSpec {
    pub fn fock(spin: Spin, n_max: u32) -> Self {
        BasisSpec { kind: BasisKind::Fock, spin, n_max, sector: None }
    }

    pub fn coherent(spin: Spin, n_max: u32) -> Self {
        BasisSpec { kind: BasisKind::Coherent, spin, n_max, sector: None }
    }

    pub fn parity(spin: Spin, n_max: u32, sector: Parity) -> Self {
        BasisSpec { kind: BasisKind::CoherentParity, spin, n_max, sector: Some(sector) }
    }

    /// Code used in binary matrix dumps: 0 Fock, 1 coherent, 2/3 parity +/-.
    pub fn dump_code(&self) -> u32 {
        match (self.kind, self.sector) {
            (BasisKind::CoherentParity, Some(Parity::Odd)) => 3,
            (kind, _) => kind.code(),
        }
    }

    /// Dimension of the untruncated-in-parity product space, `(n_max+1)(2j+1)`.
    pub fn full_dim(&self) -> usize {
        (self.n_max as usize + 1) * self.spin.dim()
    }
}

/// Excitation count (`n` or `N`) and twice the spin projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub excitations: u32,
    pub two_m: i32,
}

impl Label {
    pub fn m(&self) -> f64 {
        self.two_m as f64 / 2.0
    }
}

/// Bijection between basis labels and matrix indices.
///
/// Ordering is m-major, excitation-minor, so each `m` occupies a contiguous
/// index range. In the parity basis only `m >= 0` labels appear; `(N, m)`
/// with `m > 0` stands for the symmetric or antisymmetric combination of
/// `+m` and `-m`.
#[derive(Clone, Debug)]
pub struct BasisIndex {
    spec: BasisSpec,
    labels: Vec<Label>,
    lookup: HashMap<Label, usize>,
}

impl BasisIndex {
    pub fn enumerate(spec: BasisSpec) -> BasisIndex {
        let mut labels = Vec::with_capacity(spec.full_dim());
        for two_m in spec.spin.projections() {
            if spec.kind == BasisKind::CoherentParity && two_m < 0 {
                continue;
            }
            for n in 0..=spec.n_max {
                if two_m == 0 && spec.kind == BasisKind::CoherentParity {
                    let shell_sign = if n % 2 == 0 { 1 } else { -1 };
                    if Some(shell_sign) != spec.sector.map(Parity::sign) {
                        continue;
                    }
                }
                labels.push(Label { excitations: n, two_m });
            }
        }
        let lookup = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        BasisIndex { spec, labels, lookup }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_of(&self, index: usize) -> Label {
        self.labels[index]
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.lookup.get(&label).copied()
    }

    /// Contiguous index range holding projection `two_m` (possibly empty).
    pub fn m_range(&self, two_m: i32) -> std::ops::Range<usize> {
        let start = self.labels.partition_point(|l| l.two_m < two_m);
        let end = self.labels.partition_point(|l| l.two_m <= two_m);
        start..end
    }

    /// Distinct projections present, ascending.
    pub fn projections(&self) -> Vec<i32> {
        let mut out: Vec<i32> = self.labels.iter().map(|l| l.two_m).collect();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(spec: BasisSpec) -> Vec<(u32, i32)> {
        BasisIndex::enumerate(spec)
            .labels()
            .iter()
            .map(|l| (l.excitations, l.two_m / 2))
            .collect()
    }

    #[test]
    fn sizes() {
        assert_eq!(BasisIndex::enumerate(BasisSpec::fock(Spin::from_two_j(1), 1)).size(), 4);
        assert_eq!(BasisIndex::enumerate(BasisSpec::coherent(Spin::from_atoms(40), 250)).size(), 41 * 251);
        assert_eq!(
            BasisIndex::enumerate(BasisSpec::parity(Spin::from_atoms(40), 250, Parity::Even)).size(),
            20 * 251 + 126
        );
    }

    #[test]
    fn parity_labels_j1() {
        let spin = Spin::from_two_j(2);
        let plus = labels(BasisSpec::parity(spin, 1, Parity::Even));
        let minus = labels(BasisSpec::parity(spin, 1, Parity::Odd));
        assert_eq!(plus, vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(minus, vec![(1, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn sector_completeness_and_round_trip() {
        for two_j in 0..9 {
            for n_max in 0..7 {
                let spin = Spin::from_two_j(two_j);
                let plus = BasisIndex::enumerate(BasisSpec::parity(spin, n_max, Parity::Even));
                let minus = BasisIndex::enumerate(BasisSpec::parity(spin, n_max, Parity::Odd));
                assert_eq!(plus.size() + minus.size(), (n_max as usize + 1) * (two_j as usize + 1));
                if two_j % 2 == 1 {
                    assert_eq!(plus.size(), minus.size());
                    assert!(plus.labels().iter().all(|l| l.two_m != 0));
                }
                for idx in [&plus, &minus] {
                    for i in 0..idx.size() {
                        assert_eq!(idx.index_of(idx.label_of(i)), Some(i));
                    }
                }
            }
        }
    }

    #[test]
    fn m_ranges_are_contiguous() {
        let idx = BasisIndex::enumerate(BasisSpec::coherent(Spin::from_two_j(3), 4));
        assert_eq!(idx.projections(), vec![-3, -1, 1, 3]);
        assert_eq!(idx.m_range(-1), 5..10);
        assert!(idx.m_range(0).is_empty());
    }
}
