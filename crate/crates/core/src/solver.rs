//! Full dense symmetric eigendecomposition with residual auditing.
//!
//! The decomposition itself is delegated to faer's tridiagonalization plus
//! divide-and-conquer routine. Every result is re-checked against the
//! accuracy contract before it is handed out.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::linalg::matmul::matmul;
use faer::diag::Diag;
use faer::{Accum, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{DickeError, Result};
use crate::hamiltonian::{Provenance, SymmetricMatrix};

/// Bound on residual (relative to the Frobenius norm) and orthonormality
/// defect that every [`Spectrum`] must satisfy.
pub const RESIDUAL_CONTRACT: f64 = 1e-10;

/// Components below this magnitude are skipped when fixing eigenvector signs.
const SIGN_FIX_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max_k ||H v_k - E_k v_k||_2`.
    pub max_residual: f64,
    /// `max |V^T V - I|`.
    pub max_orthonormality_defect: f64,
    /// `||H||_F`.
    pub frobenius_norm: f64,
}

impl ResidualReport {
    pub fn relative_residual(&self) -> f64 {
        if self.frobenius_norm == 0.0 {
            self.max_residual
        } else {
            self.max_residual / self.frobenius_norm
        }
    }

    pub fn meets_contract(&self) -> bool {
        self.relative_residual() <= RESIDUAL_CONTRACT
            && self.max_orthonormality_defect <= RESIDUAL_CONTRACT
    }
}

/// Ascending eigenvalues with their orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    energies: Vec<f64>,
    /// Column-major, column `k` is the eigenvector of `energies[k]`.
    vectors: Vec<f64>,
    provenance: Provenance,
    report: ResidualReport,
}

impl Spectrum {
    /// Assembles a spectrum from externally supplied eigenpairs and audits it
    /// against `matrix`.
    pub fn from_parts(matrix: &SymmetricMatrix, energies: Vec<f64>, vectors: Vec<f64>) -> Result<Self> {
        let dim = matrix.dim();
        if energies.len() != dim || vectors.len() != dim * dim {
            return Err(DickeError::InvalidInput("eigenpair shapes do not match the matrix".into()));
        }
        let report = compute_residuals(matrix, &energies, &vectors);
        Ok(Spectrum { energies, vectors, provenance: *matrix.provenance(), report })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[k * n..(k + 1) * n]
    }

    pub fn vectors(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.vectors, self.dim(), self.dim())
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn residual_report(&self) -> &ResidualReport {
        &self.report
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.energies, self.vectors)
    }
}

/// All eigenpairs of `matrix`, single-threaded.
pub fn eigh(matrix: &SymmetricMatrix) -> Result<Spectrum> {
    eigh_with(matrix, Par::Seq)
}

/// All eigenpairs of `matrix` using the given faer parallelism.
pub fn eigh_with(matrix: &SymmetricMatrix, par: Par) -> Result<Spectrum> {
    let n = matrix.dim();
    if matrix.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(DickeError::InvalidInput("matrix has non-finite entries".into()));
    }
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = Diag::<f64>::zeros(n);
    let req = self_adjoint_evd_scratch::<f64>(n, ComputeEigenvectors::Yes, par, Default::default());
    let mut buf = MemBuffer::new(req);
    self_adjoint_evd(
        matrix.as_faer(),
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| DickeError::Solver { dim: n, detail: format!("{e:?}") })?;

    let mut order: Vec<usize> = (0..n).collect();
    let values: Vec<f64> = (0..n).map(|i| s[i]).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut energies = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        energies.push(values[k]);
        let col = u.col(k);
        let sign = (0..n)
            .map(|i| col[i])
            .find(|x| x.abs() > SIGN_FIX_THRESHOLD)
            .map_or(1.0, f64::signum);
        vectors.extend((0..n).map(|i| sign * col[i]));
    }
    drop(u);

    let spectrum = Spectrum::from_parts(matrix, energies, vectors)?;
    if !spectrum.report.meets_contract() {
        return Err(DickeError::Solver {
            dim: n,
            detail: format!(
                "accuracy contract violated: relative residual {:e}, orthonormality defect {:e}",
                spectrum.report.relative_residual(),
                spectrum.report.max_orthonormality_defect
            ),
        });
    }
    Ok(spectrum)
}

/// Recomputes the residual report of `spectrum` against `matrix`.
pub fn residuals(matrix: &SymmetricMatrix, spectrum: &Spectrum) -> Result<ResidualReport> {
    if matrix.dim() != spectrum.dim() {
        return Err(DickeError::InvalidInput("dimension mismatch".into()));
    }
    Ok(compute_residuals(matrix, &spectrum.energies, &spectrum.vectors))
}

fn compute_residuals(matrix: &SymmetricMatrix, energies: &[f64], vectors: &[f64]) -> ResidualReport {
    let n = matrix.dim();
    let v = MatRef::from_column_major_slice(vectors, n, n);
    let mut work = Mat::<f64>::zeros(n, n);
    matmul(work.as_mut(), Accum::Replace, matrix.as_faer(), v, 1.0, Par::Seq);
    let mut max_residual = 0.0f64;
    for k in 0..n {
        let e = energies[k];
        let r: f64 = (0..n).map(|i| (work[(i, k)] - e * v[(i, k)]).powi(2)).sum();
        max_residual = max_residual.max(r.sqrt());
    }
    matmul(work.as_mut(), Accum::Replace, v.transpose(), v, 1.0, Par::Seq);
    let mut defect = 0.0f64;
    for k in 0..n {
        for i in 0..n {
            let target = if i == k { 1.0 } else { 0.0 };
            defect = defect.max((work[(i, k)] - target).abs());
        }
    }
    ResidualReport {
        max_residual,
        max_orthonormality_defect: defect,
        frobenius_norm: matrix.frobenius_norm(),
    }
}
