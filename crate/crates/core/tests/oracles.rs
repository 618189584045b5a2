//! Independent oracles for the algebra, the basis transformations and the
//! Hamiltonian builders.

use dicke_core::algebra::{displaced_overlap, jx_matrix, laguerre_assoc, Spin};
use dicke_core::basis::{BasisIndex, BasisSpec, Label, Parity};
use dicke_core::hamiltonian::{
    build_coherent, build_coherent_parity, build_fock, build_tc_block, build_tc_fock, ModelParams,
    SymmetricMatrix,
};
use dicke_core::observables::{
    coherent_parity_image, delta_p, expectation, fock_parity, parity_expectation, peres_matrix, PeresOperator,
};
use dicke_core::solver::eigh;
use faer::Mat;
use proptest::prelude::*;

/// `exp(delta (a^dag - a)) |n_col>` by Taylor series on the vector,
/// truncated to `cutoff` quanta, applied in small steps.
fn expm_column(n_col: usize, delta: f64, cutoff: usize) -> Vec<f64> {
    let mut v = vec![0.0; cutoff + 1];
    v[n_col] = 1.0;
    let steps = 16;
    for _ in 0..steps {
        v = taylor_step(&v, delta / steps as f64, cutoff);
    }
    v
}

fn taylor_step(start: &[f64], delta: f64, cutoff: usize) -> Vec<f64> {
    let mut term = start.to_vec();
    let mut sum = term.clone();
    for k in 1..400 {
        let mut next = vec![0.0; cutoff + 1];
        for (n, &t) in term.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            if n < cutoff {
                next[n + 1] += t * ((n + 1) as f64).sqrt();
            }
            if n > 0 {
                next[n - 1] -= t * (n as f64).sqrt();
            }
        }
        let scale = delta / k as f64;
        let mut norm = 0.0;
        for (s, x) in sum.iter_mut().zip(next.iter_mut()) {
            *x *= scale;
            *s += *x;
            norm += *x * *x;
        }
        term = next;
        if norm.sqrt() < 1e-22 {
            break;
        }
    }
    sum
}

#[test]
fn overlap_matches_matrix_exponential() {
    let col = expm_column(5, 0.7, 200);
    let v = displaced_overlap(3, 5, 0.7).unwrap();
    assert!((v - col[3]).abs() < 1e-13, "{v} vs {}", col[3]);
    for &delta in &[-1.3, -0.2, 0.05, 0.9, 2.1] {
        for n_col in [0usize, 1, 4, 11] {
            let col = expm_column(n_col, delta, 200);
            for n_row in 0..25 {
                let v = displaced_overlap(n_row as u32, n_col as u32, delta).unwrap();
                assert!((v - col[n_row]).abs() < 1e-12, "{n_row} {n_col} {delta}");
            }
        }
    }
}

/// Exact rational evaluation of `sum_i (-1)^i C(n+a, n-i) x^i / i!` for
/// `x = p / q`.
fn laguerre_exact(n: u32, alpha: u32, p: i128, q: i128) -> f64 {
    fn binom(n: i128, k: i128) -> i128 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }
    let fact = |k: i128| (1..=k).product::<i128>().max(1);
    let (n, a) = (n as i128, alpha as i128);
    let denom = q.pow(n as u32) * fact(n);
    let mut num = 0i128;
    for i in 0..=n {
        let sign = if i % 2 == 0 { 1 } else { -1 };
        num += sign * binom(n + a, n - i) * p.pow(i as u32) * q.pow((n - i) as u32) * (fact(n) / fact(i));
    }
    num as f64 / denom as f64
}

#[test]
fn laguerre_matches_explicit_sum() {
    let exact = laguerre_exact(10, 2, 7, 2);
    let rec = laguerre_assoc(10, 2, 3.5).unwrap();
    assert!((rec - exact).abs() < 1e-12 * exact.abs().max(1.0), "{rec} {exact}");
    for n in 0..14 {
        for alpha in 0..6 {
            let exact = laguerre_exact(n, alpha, 3, 8);
            let rec = laguerre_assoc(n, alpha, 0.375).unwrap();
            assert!((rec - exact).abs() < 1e-12 * exact.abs().max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn overlap_symmetries(n in 0u32..120, k in 0u32..120, delta in -2.5f64..2.5) {
        let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
        let v = displaced_overlap(n, k, delta).unwrap();
        let swapped = displaced_overlap(k, n, delta).unwrap();
        let negated = displaced_overlap(n, k, -delta).unwrap();
        let tol = 1e-12 * v.abs() + 1e-300;
        prop_assert!((v - sign * swapped).abs() <= tol);
        prop_assert!((v - sign * negated).abs() <= tol);
        prop_assert!(v.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn overlap_unitarity(k in 0u32..80, delta in -2.0f64..2.0) {
        let cutoff = k + (40.0 * (1.0 + delta * delta)).ceil() as u32;
        let total: f64 = (0..=cutoff).map(|n| displaced_overlap(n, k, delta).unwrap().powi(2)).sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "{}", total);
    }
}

/// Columns: `Jx` eigenvectors in the `Jz` basis ordered by ascending
/// eigenvalue, phases chosen so that `Jz` has positive elements between
/// neighbouring `Jx` projections.
fn jx_eigenvectors(spin: Spin) -> Vec<Vec<f64>> {
    let d = spin.dim();
    let x = jx_matrix(spin);
    let m = Mat::<f64>::from_fn(d, d, |i, k| x[i * d + k]);
    let evd = m.self_adjoint_eigen(faer::Side::Lower).unwrap();
    let u = evd.U();
    let mz: Vec<f64> = spin.projections().map(|t| t as f64 / 2.0).collect();
    let mut cols: Vec<Vec<f64>> = (0..d).map(|c| (0..d).map(|r| u[(r, c)]).collect()).collect();
    for c in 1..d {
        let jz: f64 = (0..d).map(|r| cols[c][r] * mz[r] * cols[c - 1][r]).sum();
        if jz < 0.0 {
            for v in &mut cols[c] {
                *v = -*v;
            }
        }
    }
    cols
}

/// Coherent basis vectors expanded in a Fock basis with cutoff `fock_max`.
fn coherent_in_fock(params: &ModelParams, n_max: u32, fock_max: u32) -> (BasisIndex, BasisIndex, Vec<Vec<f64>>) {
    let spin = params.spin;
    let coh = BasisIndex::enumerate(BasisSpec::coherent(spin, n_max));
    let fock = BasisIndex::enumerate(BasisSpec::fock(spin, fock_max));
    let xs = jx_eigenvectors(spin);
    let g = params.displacement_scale();
    let zs: Vec<i32> = spin.projections().collect();
    let mut cols = Vec::new();
    for l in coh.labels() {
        let xcol = &xs[spin.projection_index(l.two_m)];
        let mut v = vec![0.0; fock.size()];
        for n in 0..=fock_max {
            let boson = displaced_overlap(n, l.excitations, -g * l.m()).unwrap();
            for (zi, &z) in zs.iter().enumerate() {
                let idx = fock.index_of(Label { excitations: n, two_m: z }).unwrap();
                v[idx] = boson * xcol[zi];
            }
        }
        cols.push(v);
    }
    (coh, fock, cols)
}

fn sandwich(h: &SymmetricMatrix, a: &[f64], b: &[f64]) -> f64 {
    let n = h.dim();
    let mut total = 0.0;
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        let row: f64 = (0..n).map(|k| h.get(i, k) * b[k]).sum();
        total += a[i] * row;
    }
    total
}

#[test]
fn coherent_matrix_is_fock_matrix_in_rotated_basis() {
    for two_j in [1u32, 2, 3] {
        let params = ModelParams::new(1.0, 0.8, 0.45, Spin::from_two_j(two_j)).unwrap();
        let (coh, _fock, cols) = coherent_in_fock(&params, 6, 70);
        let hf = build_fock(&params, 70).unwrap();
        let hc = build_coherent(&params, 6).unwrap();
        for a in 0..coh.size() {
            for b in 0..coh.size() {
                let direct = sandwich(&hf, &cols[a], &cols[b]);
                assert!((direct - hc.get(a, b)).abs() < 1e-10, "2j={two_j} {a} {b}: {direct} vs {}", hc.get(a, b));
            }
        }
    }
}

#[test]
fn parity_acts_on_coherent_states_as_reflection() {
    for two_j in [1u32, 2, 4] {
        let params = ModelParams::new(1.0, 1.0, 0.6, Spin::from_two_j(two_j)).unwrap();
        let (coh, fock, cols) = coherent_in_fock(&params, 5, 80);
        let pi: Vec<f64> = fock.labels().iter().map(|l| fock_parity(l, two_j)).collect();
        for (a, l) in coh.labels().iter().enumerate() {
            let (image, sign) = coherent_parity_image(*l, two_j);
            let b = coh.index_of(image).unwrap();
            for i in 0..fock.size() {
                assert!((pi[i] * cols[a][i] - sign * cols[b][i]).abs() < 1e-12);
            }
            // integer j reproduces (-1)^N exactly
            if two_j % 2 == 0 {
                assert_eq!(sign, if l.excitations % 2 == 0 { 1.0 } else { -1.0 });
            }
        }
    }
}

/// Parity-adapted vectors expressed over the full coherent basis.
fn parity_vectors(spin: Spin, n_max: u32, sector: Parity) -> (BasisIndex, Vec<Vec<f64>>) {
    let coh = BasisIndex::enumerate(BasisSpec::coherent(spin, n_max));
    let par = BasisIndex::enumerate(BasisSpec::parity(spin, n_max, sector));
    let mut out = Vec::new();
    for l in par.labels() {
        let mut v = vec![0.0; coh.size()];
        let (image, sign) = coherent_parity_image(*l, spin.two_j());
        v[coh.index_of(*l).unwrap()] += 1.0;
        v[coh.index_of(image).unwrap()] += sector.sign() as f64 * sign;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    (par, out)
}

#[test]
fn parity_blocks_are_projections_of_the_coherent_matrix() {
    for (two_j, n_max) in [(2u32, 1u32), (2, 5), (3, 4), (4, 6)] {
        let params = ModelParams::new(1.0, 0.9, 0.7, Spin::from_two_j(two_j)).unwrap();
        let full = build_coherent(&params, n_max).unwrap();
        let mut union = Vec::new();
        for sector in [Parity::Even, Parity::Odd] {
            let (par, vecs) = parity_vectors(params.spin, n_max, sector);
            let block = build_coherent_parity(&params, n_max, sector).unwrap();
            assert_eq!(block.dim(), par.size());
            for a in 0..par.size() {
                for b in 0..par.size() {
                    let p = sandwich(&full, &vecs[a], &vecs[b]);
                    assert!((p - block.get(a, b)).abs() < 1e-13);
                }
            }
            union.extend_from_slice(eigh(&block).unwrap().energies());
            for op in PeresOperator::ALL {
                let fm = peres_matrix(op, &BasisIndex::enumerate(BasisSpec::coherent(params.spin, n_max)), &params).unwrap();
                let pm = peres_matrix(op, &par, &params).unwrap();
                for a in 0..par.size() {
                    for b in 0..par.size() {
                        assert!((sandwich(&fm, &vecs[a], &vecs[b]) - pm.get(a, b)).abs() < 1e-13);
                    }
                }
            }
        }
        union.sort_by(f64::total_cmp);
        let whole = eigh(&full).unwrap();
        assert_eq!(union.len(), whole.dim());
        for (a, b) in union.iter().zip(whole.energies()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn small_coupling_low_levels_agree_across_bases() {
    let params = ModelParams::new(1.0, 1.0, 0.25, Spin::from_two_j(1)).unwrap();
    let coh = eigh(&build_coherent(&params, 40).unwrap()).unwrap();
    let fock = eigh(&build_fock(&params, 200).unwrap()).unwrap();
    for k in 0..10 {
        assert!((coh.energies()[k] - fock.energies()[k]).abs() < 1e-10);
    }
}

#[test]
fn superradiant_j1_low_levels_agree_across_bases() {
    let params = ModelParams::new(1.0, 1.0, 0.75, Spin::from_two_j(2)).unwrap();
    let coh_basis = BasisIndex::enumerate(BasisSpec::coherent(params.spin, 60));
    let fock_basis = BasisIndex::enumerate(BasisSpec::fock(params.spin, 400));
    let coh = eigh(&build_coherent(&params, 60).unwrap()).unwrap();
    let fock = eigh(&build_fock(&params, 400).unwrap()).unwrap();
    for k in 0..20 {
        assert!((coh.energies()[k] - fock.energies()[k]).abs() < 1e-8, "level {k}");
    }
    let report = delta_p(&coh, &coh_basis, 1e-12).unwrap();
    assert!(report.converged_count >= 20);
    let n_coh = expectation(&coh, &peres_matrix(PeresOperator::PhotonNumber, &coh_basis, &params).unwrap()).unwrap();
    let n_fock = expectation(&fock, &peres_matrix(PeresOperator::PhotonNumber, &fock_basis, &params).unwrap()).unwrap();
    let jz_coh = expectation(&coh, &peres_matrix(PeresOperator::Jz, &coh_basis, &params).unwrap()).unwrap();
    let jz_fock = expectation(&fock, &peres_matrix(PeresOperator::Jz, &fock_basis, &params).unwrap()).unwrap();
    let x2_coh = expectation(&coh, &peres_matrix(PeresOperator::Jx2, &coh_basis, &params).unwrap()).unwrap();
    let x2_fock = expectation(&fock, &peres_matrix(PeresOperator::Jx2, &fock_basis, &params).unwrap()).unwrap();
    for k in 0..10 {
        assert!((n_coh[k] - n_fock[k]).abs() < 1e-8, "n, state {k}");
        assert!((jz_coh[k] - jz_fock[k]).abs() < 1e-8, "Jz, state {k}");
        assert!((x2_coh[k] - x2_fock[k]).abs() < 1e-8, "Jx2, state {k}");
    }
}

#[test]
fn zero_coupling_degeneracy_grows_then_saturates() {
    let spin = Spin::from_atoms(40);
    let params = ModelParams::new(1.0, 1.0, 0.0, spin).unwrap();
    let n_max = 60;
    let s = eigh(&build_fock(&params, n_max).unwrap()).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for e in s.energies() {
        assert!((e - e.round()).abs() < 1e-12);
        *counts.entry(e.round() as i64).or_insert(0usize) += 1;
    }
    // E = n + m, complete for E <= n_max - j
    for e in -20..=40i64 {
        let expect = ((e + 20) as usize + 1).min(41);
        assert_eq!(counts[&e], expect, "E = {e}");
    }
}

#[test]
fn fock_parity_counts_match_parity_blocks() {
    let params = ModelParams::resonant(1.5, Spin::from_two_j(6)).unwrap();
    let fock = eigh(&build_fock(&params, 140).unwrap()).unwrap();
    let labels = parity_expectation(&fock, &params).unwrap();
    let cut = 20.0;
    let mut plus = 0;
    let mut minus = 0;
    for (e, s) in fock.energies().iter().zip(&labels.signs) {
        if *e < cut {
            if *s > 0 {
                plus += 1
            } else {
                minus += 1
            }
        }
    }
    let count = |sector| {
        eigh(&build_coherent_parity(&params, 70, sector).unwrap())
            .unwrap()
            .energies()
            .iter()
            .filter(|e| **e < cut)
            .count()
    };
    assert!(plus > 50 && minus > 50, "{plus} {minus}");
    assert_eq!(plus, count(Parity::Even));
    assert_eq!(minus, count(Parity::Odd));
}

#[test]
fn tc_blocks_match_full_space() {
    let params = ModelParams::new(1.0, 1.0, 0.4, Spin::from_two_j(2)).unwrap();
    let basis = BasisIndex::enumerate(BasisSpec::fock(params.spin, 60));
    let full = eigh(&build_tc_fock(&params, 60).unwrap()).unwrap();
    let lambda_of = |l: &Label| l.excitations as f64 + l.m() + params.j();
    let lambdas: Vec<f64> = (0..full.dim())
        .map(|k| full.vector(k).iter().zip(basis.labels()).map(|(c, l)| c * c * lambda_of(l)).sum())
        .collect();
    let block = eigh(&build_tc_block(&params, 3).unwrap()).unwrap();
    let mut reference: Vec<f64> = full
        .energies()
        .iter()
        .zip(&lambdas)
        .filter(|(_, l)| (*l - 3.0).abs() < 1e-6)
        .map(|(e, _)| *e)
        .collect();
    reference.sort_by(f64::total_cmp);
    assert_eq!(reference.len(), block.dim());
    for (a, b) in reference.iter().zip(block.energies()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn raising_the_truncation_keeps_converged_states_converged() {
    let params = ModelParams::resonant(1.5, Spin::from_two_j(6)).unwrap();
    let tol = 1e-12;
    let certify = |n_max: u32| {
        let basis = BasisIndex::enumerate(BasisSpec::parity(params.spin, n_max, Parity::Even));
        let s = eigh(&build_coherent_parity(&params, n_max, Parity::Even).unwrap()).unwrap();
        (delta_p(&s, &basis, tol).unwrap(), s.energies().to_vec())
    };
    let (small, e_small) = certify(40);
    let (large, e_large) = certify(65);
    assert!(small.converged_count > 20);
    assert!(large.converged_count >= small.converged_count);
    for k in 0..small.converged_count {
        assert!(large.delta_p[k] < 2.0 * tol, "state {k}");
        assert!((e_small[k] - e_large[k]).abs() < 1e-8 * e_small[k].abs().max(1.0));
    }
}
