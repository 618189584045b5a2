//! Peres lattices and the spectral diagnostics built on them: level density,
//! excited-state phase transition markers, unfolding and gap statistics.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{DickeError, Result};
use crate::hamiltonian::ModelParams;
use crate::observables::{ConvergenceReport, PeresOperator};
use crate::solver::Spectrum;

/// Default bin width in `E/j` for level densities and markers.
pub const DEFAULT_BIN_WIDTH: f64 = 0.05;
/// Default half-width, in `E/j`, of the slope fits used to locate kinks.
pub const DEFAULT_SLOPE_WINDOW: f64 = 0.3;
/// Default degree of the staircase polynomial.
pub const DEFAULT_UNFOLD_DEGREE: usize = 6;
/// Mean consecutive-gap ratio of uncorrelated levels, `2 ln 2 - 1`.
pub const POISSON_MEAN_RATIO: f64 = 0.386_294_361_119_890_6;
/// Mean consecutive-gap ratio for the orthogonal ensemble (level repulsion).
pub const GOE_MEAN_RATIO: f64 = 0.5307;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub energy_over_j: f64,
    pub expectation: f64,
    pub parity: i8,
    pub delta_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeresLattice {
    pub operator: PeresOperator,
    pub points: Vec<LatticePoint>,
    pub params: ModelParams,
}

impl PeresLattice {
    /// Union of several lattices of the same operator, re-sorted by energy.
    pub fn merge(parts: &[PeresLattice]) -> Result<PeresLattice> {
        let first = parts
            .first()
            .ok_or_else(|| DickeError::InvalidInput("nothing to merge".into()))?;
        if parts.iter().any(|p| p.operator != first.operator) {
            return Err(DickeError::InvalidInput("cannot merge lattices of different operators".into()));
        }
        let mut points: Vec<LatticePoint> = parts.iter().flat_map(|p| p.points.iter().copied()).collect();
        points.sort_by(|a, b| a.energy_over_j.total_cmp(&b.energy_over_j));
        Ok(PeresLattice { operator: first.operator, points, params: first.params })
    }

    /// Points with `lo < E/j < hi`.
    pub fn window(&self, lo: f64, hi: f64) -> impl Iterator<Item = &LatticePoint> {
        self.points.iter().filter(move |p| p.energy_over_j > lo && p.energy_over_j < hi)
    }

    pub fn energies_over_j(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.energy_over_j).collect()
    }
}

fn operator_bounds(op: PeresOperator, j: f64) -> (f64, f64) {
    match op {
        PeresOperator::Jz => (-j, j),
        PeresOperator::Jx2 => (0.0, j * j),
        PeresOperator::PhotonNumber => (0.0, f64::INFINITY),
    }
}

/// Pairs each eigenvalue (divided by `j`) with its Peres expectation value,
/// parity and ΔP. With `converged_only`, states failing the report's
/// tolerance are dropped.
pub fn lattice(
    operator: PeresOperator,
    spectrum: &Spectrum,
    expectations: &[f64],
    parities: &[i8],
    report: &ConvergenceReport,
    params: &ModelParams,
    converged_only: bool,
) -> Result<PeresLattice> {
    let n = spectrum.dim();
    if expectations.len() != n || parities.len() != n || report.delta_p.len() != n {
        return Err(DickeError::InvalidInput(format!(
            "lattice inputs have mismatched lengths ({n} states, {} expectations, {} parities, {} certificates)",
            expectations.len(),
            parities.len(),
            report.delta_p.len()
        )));
    }
    let j = params.j();
    let (lo, hi) = operator_bounds(operator, j);
    let slack = 1e-9 * j.max(1.0) * j.max(1.0);
    let mut points = Vec::with_capacity(n);
    for k in 0..n {
        let x = expectations[k];
        if !x.is_finite() || x < lo - slack || x > hi + slack {
            return Err(DickeError::InvalidInput(format!(
                "<{operator}> = {x} of state {k} lies outside [{lo}, {hi}]"
            )));
        }
        if converged_only && !report.is_converged(k) {
            continue;
        }
        points.push(LatticePoint {
            energy_over_j: spectrum.energies()[k] / j,
            expectation: x,
            parity: parities[k],
            delta_p: report.delta_p[k],
        });
    }
    points.sort_by(|a, b| a.energy_over_j.total_cmp(&b.energy_over_j));
    Ok(PeresLattice { operator, points, params: *params })
}

/// Counts in bins of width `bin_width` centred on multiples of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Index of the first bin; bin `i` is centred at `(first_index + i) * bin_width`.
    pub first_index: i64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(move |i| (self.first_index + i as i64) as f64 * self.bin_width)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Centre of the most populated bin (lowest on ties).
    pub fn peak(&self) -> Option<f64> {
        let best = self.counts.iter().copied().max()?;
        let i = self.counts.iter().position(|&c| c == best)?;
        Some((self.first_index + i as i64) as f64 * self.bin_width)
    }
}

fn centred_bin(x: f64, width: f64) -> i64 {
    (x / width + 0.5).floor() as i64
}

/// Level counts per `E/j` bin.
pub fn density_of_states(energies: &[f64], j: f64, bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) {
        return Err(DickeError::InvalidInput("bin width must be positive".into()));
    }
    let bins: Vec<i64> = energies.iter().map(|e| centred_bin(e / j, bin_width)).collect();
    let (Some(&lo), Some(&hi)) = (bins.iter().min(), bins.iter().max()) else {
        return Ok(Histogram { bin_width, first_index: 0, counts: Vec::new() });
    };
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for b in bins {
        counts[(b - lo) as usize] += 1;
    }
    Ok(Histogram { bin_width, first_index: lo, counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerOptions {
    pub bin_width: f64,
    pub slope_window: f64,
    pub search_lo: f64,
    pub search_hi: f64,
}

impl Default for MarkerOptions {
    fn default() -> Self {
        MarkerOptions {
            bin_width: DEFAULT_BIN_WIDTH,
            slope_window: DEFAULT_SLOPE_WINDOW,
            search_lo: -2.0,
            search_hi: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsqptMarkers {
    /// Upper slope change of the binned `<Jz>` curve, in `E/j`.
    pub static_marker: f64,
    /// Lower slope change, in `E/j`.
    pub dynamic_marker: f64,
    pub static_strength: f64,
    pub dynamic_strength: f64,
    pub bin_width: f64,
    pub slope_window: f64,
}

/// Bin-averaged curve `(centre, mean)` over populated bins.
pub fn binned_mean(points: &[LatticePoint], bin_width: f64) -> Vec<(f64, f64)> {
    let mut acc: std::collections::BTreeMap<i64, (f64, usize)> = Default::default();
    for p in points {
        let b = (p.energy_over_j / bin_width).floor() as i64;
        let e = acc.entry(b).or_insert((0.0, 0));
        e.0 += p.expectation;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(b, (sum, n))| ((b as f64 + 0.5) * bin_width, sum / n as f64))
        .collect()
}

fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Windowed second difference of the binned curve: the slope of a line fit
/// over `[x, x + w]` minus that over `[x - w, x]`, for every populated bin
/// whose two windows are both adequately populated.
pub fn slope_changes(curve: &[(f64, f64)], bin_width: f64, window: f64) -> Vec<(f64, f64)> {
    let min_bins = ((window / bin_width / 2.0).ceil() as usize + 1).max(3);
    let eps = 1e-9 * bin_width;
    let mut out = Vec::new();
    for &(x, _) in curve {
        let (mut lx, mut ly, mut rx, mut ry) = (vec![], vec![], vec![], vec![]);
        for &(cx, cy) in curve {
            if cx >= x - window - eps && cx <= x + eps {
                lx.push(cx);
                ly.push(cy);
            }
            if cx >= x - eps && cx <= x + window + eps {
                rx.push(cx);
                ry.push(cy);
            }
        }
        if lx.len() < min_bins || rx.len() < min_bins {
            continue;
        }
        out.push((x, linear_slope(&rx, &ry) - linear_slope(&lx, &ly)));
    }
    out
}

/// Locates the two slope changes of the `<Jz>` lattice.
pub fn esqpt_markers(lattice: &PeresLattice, bin_width: f64) -> Result<EsqptMarkers> {
    esqpt_markers_with(lattice, MarkerOptions { bin_width, ..Default::default() })
}

pub fn esqpt_markers_with(lattice: &PeresLattice, options: MarkerOptions) -> Result<EsqptMarkers> {
    if lattice.operator != PeresOperator::Jz {
        return Err(DickeError::InvalidInput("markers are read from the Jz lattice".into()));
    }
    if !(options.bin_width > 0.0 && options.slope_window > options.bin_width) {
        return Err(DickeError::InvalidInput("need 0 < bin width < slope window".into()));
    }
    let curve = binned_mean(&lattice.points, options.bin_width);
    if curve.len() < 5 {
        return Err(DickeError::InsufficientData(format!(
            "{} populated bins, at least 5 required",
            curve.len()
        )));
    }
    let mut kinks: Vec<(f64, f64)> = slope_changes(&curve, options.bin_width, options.slope_window)
        .into_iter()
        .filter(|(x, _)| *x >= options.search_lo && *x <= options.search_hi)
        .collect();
    kinks.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.total_cmp(&b.0)));
    let first = *kinks
        .first()
        .ok_or_else(|| DickeError::InsufficientData("no bin admits both slope windows".into()))?;
    let second = *kinks
        .iter()
        .find(|(x, _)| (x - first.0).abs() > options.slope_window)
        .ok_or_else(|| DickeError::InsufficientData("only one slope change found".into()))?;
    let (low, high) = if first.0 < second.0 { (first, second) } else { (second, first) };
    Ok(EsqptMarkers {
        static_marker: high.0,
        dynamic_marker: low.0,
        static_strength: high.1,
        dynamic_strength: low.1,
        bin_width: options.bin_width,
        slope_window: options.slope_window,
    })
}

/// Drops every level lying within `tolerance` of a neighbour.
pub fn drop_degenerate(levels: &[f64], tolerance: f64) -> Vec<f64> {
    let n = levels.len();
    (0..n)
        .filter(|&i| {
            let left = i > 0 && levels[i] - levels[i - 1] <= tolerance;
            let right = i + 1 < n && levels[i + 1] - levels[i] <= tolerance;
            !left && !right
        })
        .map(|i| levels[i])
        .collect()
}

/// Maps sorted levels onto a polynomial fit of their staircase function and
/// rescales to unit mean spacing.
pub fn unfold(energies: &[f64], polynomial_degree: usize) -> Result<Vec<f64>> {
    let n = energies.len();
    if n < 50 {
        return Err(DickeError::InsufficientData(format!("{n} levels, at least 50 required")));
    }
    if energies.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(DickeError::InvalidInput("levels must be finite and sorted ascending".into()));
    }
    let (lo, hi) = (energies[0], energies[n - 1]);
    if !(hi > lo) {
        return Err(DickeError::Fit { reason: "zero spectral width".into(), condition: f64::INFINITY });
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let cols = polynomial_degree + 1;
    let vander = Mat::<f64>::from_fn(n, cols, |i, k| ((energies[i] - mid) / half).powi(k as i32));
    let singular = vander
        .singular_values()
        .map_err(|e| DickeError::Fit { reason: format!("{e:?}"), condition: f64::NAN })?;
    let smax = singular.iter().copied().fold(0.0, f64::max);
    let smin = singular.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = smax / smin;
    if !condition.is_finite() || condition > 1e12 {
        return Err(DickeError::Fit { reason: "ill-conditioned staircase fit".into(), condition });
    }
    let staircase = Mat::<f64>::from_fn(n, 1, |i, _| i as f64 + 0.5);
    let coeffs = vander.qr().solve_lstsq(&staircase);
    let mapped: Vec<f64> = energies
        .iter()
        .map(|e| {
            let x = (e - mid) / half;
            (0..cols).rev().fold(0.0, |acc, k| acc * x + coeffs[(k, 0)])
        })
        .collect();
    if mapped.windows(2).any(|w| w[1] < w[0]) {
        return Err(DickeError::Fit { reason: "fitted staircase is not monotone".into(), condition });
    }
    let span = mapped[n - 1] - mapped[0];
    if !(span > 0.0) {
        return Err(DickeError::Fit { reason: "fitted staircase is flat".into(), condition });
    }
    let scale = (n - 1) as f64 / span;
    let base = mapped[0];
    Ok(mapped.into_iter().map(|m| base + (m - base) * scale).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingStats {
    /// `(centre, probability density)` of nearest-neighbour spacings.
    pub histogram: Vec<(f64, f64)>,
    pub histogram_bin_width: f64,
    /// `<min(s_i, s_{i+1}) / max(s_i, s_{i+1})>`.
    pub mean_ratio: f64,
    pub levels: usize,
}

/// Spacing histogram (bins of 0.1 over `[0, 5)`) and mean consecutive-gap
/// ratio of a level sequence.
pub fn spacing_stats(unfolded: &[f64]) -> Result<SpacingStats> {
    if unfolded.len() < 3 {
        return Err(DickeError::InsufficientData("need at least three levels".into()));
    }
    let spacings: Vec<f64> = unfolded.windows(2).map(|w| w[1] - w[0]).collect();
    if spacings.iter().any(|s| !(*s >= 0.0)) {
        return Err(DickeError::InvalidInput("levels must be sorted ascending".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in spacings.windows(2) {
        let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
        if b > 0.0 {
            sum += a / b;
            count += 1;
        }
    }
    if count == 0 {
        return Err(DickeError::InsufficientData("all spacings vanish".into()));
    }
    let width = 0.1;
    let bins = 50;
    let mut counts = vec![0usize; bins];
    for s in &spacings {
        let b = (s / width).floor() as usize;
        if b < bins {
            counts[b] += 1;
        }
    }
    let norm = spacings.len() as f64 * width;
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| ((i as f64 + 0.5) * width, c as f64 / norm))
        .collect();
    Ok(SpacingStats { histogram, histogram_bin_width: width, mean_ratio: sum / count as f64, levels: unfolded.len() })
}

/// Mean consecutive-gap ratio of the levels of `lattice` in `(lo, hi)`,
/// skipping numerically degenerate levels.
pub fn window_mean_ratio(lattice: &PeresLattice, lo: f64, hi: f64, degeneracy_tol: f64) -> Result<SpacingStats> {
    let levels: Vec<f64> = lattice.window(lo, hi).map(|p| p.energy_over_j).collect();
    spacing_stats(&drop_degenerate(&levels, degeneracy_tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Spin;

    fn params() -> ModelParams {
        ModelParams::resonant(1.0, Spin::from_two_j(4)).unwrap()
    }

    fn synthetic(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> PeresLattice {
        let points = (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
                LatticePoint { energy_over_j: x, expectation: f(x), parity: 1, delta_p: 0.0 }
            })
            .collect();
        PeresLattice { operator: PeresOperator::Jz, points, params: params() }
    }

    #[test]
    fn dos_counts_lattice_degeneracies() {
        // E = n + m at zero coupling, j = 2: degeneracies 1, 2, 3, 4, 5, 5, 5, ...
        let mut energies = vec![];
        for n in 0..30 {
            for m in -2..=2 {
                energies.push((n + m) as f64);
            }
        }
        let h = density_of_states(&energies, 2.0, 0.5).unwrap();
        let counts: Vec<usize> = h.counts.iter().take(8).copied().collect();
        assert_eq!(counts, vec![1, 2, 3, 4, 5, 5, 5, 5]);
        assert_eq!(h.centers().next().unwrap(), -1.0);
        assert!(density_of_states(&[], 2.0, 0.05).unwrap().is_empty());
        assert!(density_of_states(&energies, 2.0, 0.0).is_err());
    }

    #[test]
    fn constructed_kink_is_found() {
        let lat = synthetic(|x| x.abs(), -1.5, 1.5, 3000);
        let curve = binned_mean(&lat.points, 0.05);
        let kinks = slope_changes(&curve, 0.05, 0.3);
        let best = kinks.iter().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
        assert!(best.0.abs() <= 0.05, "{best:?}");
        assert!((best.1 - 2.0).abs() < 0.2);
    }

    #[test]
    fn two_kinks_give_ordered_markers() {
        let f = |x: f64| {
            if x < -1.0 {
                -10.0
            } else if x < 1.0 {
                -10.0 + 5.0 * (x + 1.0)
            } else {
                0.0 + 1.0 * (x - 1.0)
            }
        };
        let m = esqpt_markers(&synthetic(f, -2.0, 3.0, 5000), 0.05).unwrap();
        assert!((m.dynamic_marker + 1.0).abs() <= 0.05, "{m:?}");
        assert!((m.static_marker - 1.0).abs() <= 0.05, "{m:?}");
        assert!(m.dynamic_marker < m.static_marker);
    }

    #[test]
    fn markers_need_data() {
        let lat = synthetic(|x| x, 0.0, 0.1, 10);
        assert!(matches!(esqpt_markers(&lat, 0.05), Err(DickeError::InsufficientData(_))));
        let mut wrong = synthetic(|x| x, -2.0, 2.0, 400);
        wrong.operator = PeresOperator::Jx2;
        assert!(esqpt_markers(&wrong, 0.05).is_err());
    }

    #[test]
    fn unfold_equally_spaced() {
        let levels: Vec<f64> = (0..80).map(|i| 3.0 + 0.25 * i as f64).collect();
        let u = unfold(&levels, 1).unwrap();
        for w in u.windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-10);
        }
        assert!(unfold(&levels[..20], 1).is_err());
    }

    #[test]
    fn unfold_unit_mean_spacing_nonuniform() {
        let levels: Vec<f64> = (0..300).map(|i| (i as f64).sqrt() + 0.01 * (i as f64 * 1.7).sin()).collect();
        let u = unfold(&levels, 6).unwrap();
        let mean = (u[u.len() - 1] - u[0]) / (u.len() - 1) as f64;
        assert!((mean - 1.0).abs() < 1e-10);
        assert!(u.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rigid_spectrum_ratio_is_one() {
        let levels: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = spacing_stats(&levels).unwrap();
        assert_eq!(s.mean_ratio, 1.0);
        let total: f64 = s.histogram.iter().map(|(_, d)| d * s.histogram_bin_width).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_length_mismatch_rejected() {
        use crate::hamiltonian::{Provenance, SymmetricMatrix};
        let m = SymmetricMatrix::from_row_major(1, &[0.5], Provenance::Unspecified).unwrap();
        let s = crate::solver::eigh(&m).unwrap();
        let report = ConvergenceReport { delta_p: vec![0.0], tolerance: 1e-12, converged_count: 1 };
        let one = lattice(PeresOperator::Jz, &s, &[0.2], &[1], &report, &params(), true).unwrap();
        assert_eq!(one.points.len(), 1);
        assert_eq!(one.points[0].energy_over_j, 0.25);
        assert!(lattice(PeresOperator::Jz, &s, &[0.2, 0.1], &[1], &report, &params(), true).is_err());
        assert!(lattice(PeresOperator::Jz, &s, &[7.0], &[1], &report, &params(), true).is_err());
    }

    #[test]
    fn drop_degenerate_removes_clusters() {
        let kept = drop_degenerate(&[0.0, 1.0, 1.0, 2.5, 4.0, 4.0 + 1e-13], 1e-9);
        assert_eq!(kept, vec![0.0, 2.5]);
    }
}
