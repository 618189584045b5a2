//! Collective pseudo-spin matrix elements and displaced-oscillator overlaps.
//!
//! Half-integer quantum numbers are carried as twice their value (`two_j`,
//! `two_m`) so that every label is an exact integer.

use serde::{Deserialize, Serialize};

use crate::error::{DickeError, Result};

/// Pseudo-spin length `j`, stored as `2j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Spin {
    two_j: u32,
}

impl Spin {
    pub fn from_two_j(two_j: u32) -> Self {
        Spin { two_j }
    }

    /// Symmetric subspace of `n_atoms` two-level atoms, `j = n_atoms / 2`.
    pub fn from_atoms(n_atoms: u32) -> Self {
        Spin { two_j: n_atoms }
    }

    /// Accepts `j` as a float; it must be a non-negative multiple of 1/2.
    pub fn from_j(j: f64) -> Result<Self> {
        let two_j = 2.0 * j;
        if !two_j.is_finite() || two_j < 0.0 || (two_j - two_j.round()).abs() > 1e-9 {
            return Err(DickeError::InvalidInput(format!(
                "j = {j} is not a non-negative half-integer"
            )));
        }
        Ok(Spin { two_j: two_j.round() as u32 })
    }

    pub fn two_j(self) -> u32 {
        self.two_j
    }

    pub fn j(self) -> f64 {
        self.two_j as f64 / 2.0
    }

    /// Number of atoms, `2j`.
    pub fn n_atoms(self) -> u32 {
        self.two_j
    }

    /// Multiplet dimension `2j + 1`.
    pub fn dim(self) -> usize {
        self.two_j as usize + 1
    }

    pub fn casimir(self) -> f64 {
        let j = self.j();
        j * (j + 1.0)
    }

    /// Projections `2m = -2j, -2j + 2, ..., 2j` in ascending order.
    pub fn projections(self) -> impl DoubleEndedIterator<Item = i32> + Clone {
        let two_j = self.two_j as i32;
        (0..=self.two_j as i32).map(move |k| -two_j + 2 * k)
    }

    pub fn is_valid_projection(self, two_m: i32) -> bool {
        two_m.unsigned_abs() <= self.two_j && (two_m + self.two_j as i32) % 2 == 0
    }

    /// Position of `2m` within [`Spin::projections`].
    pub fn projection_index(self, two_m: i32) -> usize {
        ((two_m + self.two_j as i32) / 2) as usize
    }

    fn check(self, two_m: i32) -> Result<()> {
        if self.is_valid_projection(two_m) {
            Ok(())
        } else {
            Err(DickeError::InvalidInput(format!(
                "m = {} is not a valid projection for j = {}",
                two_m as f64 / 2.0,
                self.j()
            )))
        }
    }
}

/// A validated `(j, m)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinQuantum {
    pub spin: Spin,
    pub two_m: i32,
}

impl SpinQuantum {
    pub fn new(spin: Spin, two_m: i32) -> Result<Self> {
        spin.check(two_m)?;
        Ok(SpinQuantum { spin, two_m })
    }

    pub fn m(self) -> f64 {
        self.two_m as f64 / 2.0
    }
}

/// Collective spin operators with real matrix elements in the eigenbasis of
/// their quantization axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpinOp {
    Z,
    Raise,
    Lower,
    X,
    XSquared,
}

/// `sqrt(j(j+1) - m m')` for adjacent projections, the ladder coefficient.
pub(crate) fn ladder_coefficient(spin: Spin, two_m_row: i32, two_m_col: i32) -> f64 {
    let prod = (two_m_row as f64) * (two_m_col as f64) / 4.0;
    (spin.casimir() - prod).max(0.0).sqrt()
}

/// `<j, m_row | O | j, m_col>` for the operator `kind`.
pub fn spin_matrix_element(kind: SpinOp, spin: Spin, two_m_row: i32, two_m_col: i32) -> Result<f64> {
    spin.check(two_m_row)?;
    spin.check(two_m_col)?;
    let value = match kind {
        SpinOp::Z => {
            if two_m_row == two_m_col {
                two_m_row as f64 / 2.0
            } else {
                0.0
            }
        }
        SpinOp::Raise => {
            if two_m_row == two_m_col + 2 {
                ladder_coefficient(spin, two_m_row, two_m_col)
            } else {
                0.0
            }
        }
        SpinOp::Lower => {
            if two_m_row + 2 == two_m_col {
                ladder_coefficient(spin, two_m_row, two_m_col)
            } else {
                0.0
            }
        }
        SpinOp::X => {
            if (two_m_row - two_m_col).abs() == 2 {
                0.5 * ladder_coefficient(spin, two_m_row, two_m_col)
            } else {
                0.0
            }
        }
        SpinOp::XSquared => {
            let x = jx_matrix(spin);
            let square = square_matrix(&x, spin.dim());
            square[spin.projection_index(two_m_row) * spin.dim() + spin.projection_index(two_m_col)]
        }
    };
    Ok(value)
}

/// Dense row-major `Jx` in the `Jz` eigenbasis, rows/columns ordered by
/// ascending `m`.
pub fn jx_matrix(spin: Spin) -> Vec<f64> {
    let dim = spin.dim();
    let mut x = vec![0.0; dim * dim];
    let ms: Vec<i32> = spin.projections().collect();
    for (i, &m) in ms.iter().enumerate().skip(1) {
        let v = 0.5 * ladder_coefficient(spin, m, ms[i - 1]);
        x[i * dim + i - 1] = v;
        x[(i - 1) * dim + i] = v;
    }
    x
}

/// `Jx^2` obtained by squaring [`jx_matrix`].
pub fn jx_squared_matrix(spin: Spin) -> Vec<f64> {
    square_matrix(&jx_matrix(spin), spin.dim())
}

fn square_matrix(a: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == 0.0 {
                continue;
            }
            for l in 0..dim {
                out[i * dim + l] += aik * a[k * dim + l];
            }
        }
    }
    out
}

/// Associated Laguerre polynomial `L_n^(alpha)(x)` by upward recurrence in
/// the degree.
pub fn laguerre_assoc(n: u32, alpha: u32, x: f64) -> Result<f64> {
    let a = alpha as f64;
    let mut prev = 1.0;
    if n == 0 {
        return Ok(prev);
    }
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + a - x) * cur - (k + a) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    if cur.is_finite() {
        Ok(cur)
    } else {
        Err(DickeError::NonFinite("laguerre_assoc"))
    }
}

fn ln_factorial(n: u32) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// `<n_row| D(delta) |n_col>` for the real displacement
/// `D(delta) = exp(delta (a^dagger - a))`.
pub fn displaced_overlap(n_row: u32, n_col: u32, delta: f64) -> Result<f64> {
    if !delta.is_finite() {
        return Err(DickeError::InvalidInput(format!("displacement {delta} is not finite")));
    }
    if n_row < n_col {
        let flipped = displaced_overlap(n_col, n_row, delta)?;
        return Ok(if (n_col - n_row) % 2 == 0 { flipped } else { -flipped });
    }
    let diff = n_row - n_col;
    if delta == 0.0 {
        return Ok(if diff == 0 { 1.0 } else { 0.0 });
    }
    let x = delta * delta;
    let lag = laguerre_assoc(n_col, diff, x)?;
    if lag == 0.0 {
        return Ok(0.0);
    }
    let ln_mag = 0.5 * (ln_factorial(n_col) - ln_factorial(n_row))
        + diff as f64 * delta.abs().ln()
        - 0.5 * x
        + lag.abs().ln();
    let mut sign = lag.signum();
    if delta < 0.0 && diff % 2 == 1 {
        sign = -sign;
    }
    let value = sign * ln_mag.exp();
    if value.is_nan() {
        return Err(DickeError::NonFinite("displaced_overlap"));
    }
    Ok(value)
}

/// All overlaps `<N'|D(delta)|N>` for `N, N' <= n_max`, row-major in `N'`.
///
/// The opposite displacement is served from the same table through
/// `<N'|D(-delta)|N> = <N|D(delta)|N'>`.
#[derive(Clone, Debug)]
pub struct OverlapTable {
    n_max: u32,
    delta: f64,
    values: Vec<f64>,
}

impl OverlapTable {
    pub fn new(n_max: u32, delta: f64) -> Result<Self> {
        let size = n_max as usize + 1;
        let mut values = vec![0.0; size * size];
        for row in 0..=n_max {
            for col in 0..=row {
                let v = displaced_overlap(row, col, delta)?;
                values[row as usize * size + col as usize] = v;
                values[col as usize * size + row as usize] =
                    if (row - col) % 2 == 0 { v } else { -v };
            }
        }
        Ok(OverlapTable { n_max, delta, values })
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `<n_row| D(sign * delta) |n_col>` with `sign = +-1`.
    #[inline]
    pub fn get(&self, n_row: u32, n_col: u32, positive: bool) -> f64 {
        let size = self.n_max as usize + 1;
        if positive {
            self.values[n_row as usize * size + n_col as usize]
        } else {
            self.values[n_col as usize * size + n_row as usize]
        }
    }
}
