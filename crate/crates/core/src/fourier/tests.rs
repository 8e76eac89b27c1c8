use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use super::check::{random_band, random_block_circulant, random_core, run_suite, CheckOptions};
use super::oracle::{dense_frobenius_loss, deflated_two_grid, tile_operator, tile_prolongation, transform_2d};
use super::transform::transform_dense;
use super::*;
use crate::multigrid::{spectral_radius_dense, CycleConfig};
use crate::problem::{discretize, BoundarySpec, DiffusionField};
use crate::prolong::{build_prolongation, Builder};
use crate::Error;

fn cis(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

fn close(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() < 1e-12
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
}

#[test]
fn w_example_entries() {
    let w = w_matrix(12, 3).unwrap();
    assert!(close(w[(0, 0)], Complex64::new(1.0, 0.0)));
    assert!(close(w[(1, 4)], cis(-2.0 * PI / 12.0)));
    assert!(close(w[(11, 11)], cis(-66.0 * PI / 12.0)));
    assert!(close(w[(2, 11)], cis(-PI)));
    assert_eq!(w[(1, 2)], Complex64::new(0.0, 0.0));
}

#[test]
fn w_with_single_block_is_identity() {
    let w = w_matrix(6, 6).unwrap();
    assert!(max_diff(&w, &CMatrix::identity(6, 6)) < 1e-15);
    assert!(w_matrix(10, 3).is_err());
}

#[test]
fn w_is_unitary_up_to_scale() {
    for (n, k) in [(12, 3), (16, 4), (8, 2)] {
        let w = w_matrix(n, k).unwrap();
        let b = Complex64::new((n / k) as f64, 0.0);
        let gram = w.adjoint() * &w / b;
        assert!(max_diff(&gram, &CMatrix::identity(n, n)) < 1e-12);
    }
}

#[test]
fn identity_diagonalizes_to_identity_blocks() {
    let blocks = block_diagonalize_dense(&CMatrix::identity(12, 12), 3).unwrap();
    assert_eq!(blocks.len(), 4);
    for b in blocks {
        assert!(max_diff(&b, &CMatrix::identity(3, 3)) < 1e-12);
    }
}

#[test]
fn circulant_blocks_are_dft_eigenvalues() {
    let n = 8;
    let first: Vec<f64> = (0..n).map(|j| (j as f64 * 0.7).cos()).collect();
    let k = CMatrix::from_fn(n, n, |l, j| Complex64::new(first[(j + n - l) % n], 0.0));
    let blocks = block_diagonalize_dense(&k, 1).unwrap();
    for (s, b) in blocks.iter().enumerate() {
        let want: Complex64 = (0..n)
            .map(|m| first[m] * cis(-2.0 * PI * (s * m) as f64 / n as f64))
            .sum();
        assert!(close(b[(0, 0)], want), "s={s}");
    }
}

#[test]
fn non_block_circulant_input_is_rejected() {
    let mut k = CMatrix::identity(12, 12);
    k[(0, 1)] = Complex64::new(1.0, 0.0);
    assert!(matches!(block_diagonalize_dense(&k, 3), Err(Error::InvalidArgument(_))));
}

#[test]
fn laplacian_blocks_follow_the_phase_rule() {
    let (n, k) = (12, 3);
    let row = vec![Complex64::new(-1.0, 0.0), Complex64::new(2.0, 0.0), Complex64::new(-1.0, 0.0)];
    let band = BandRows::new(n, k, 1, 1, vec![row; 3]).unwrap();
    let blocks = band_mode_blocks(&band);
    let dense = block_diagonalize_dense(&band.to_dense(), k).unwrap();
    for (s, b) in blocks.iter().enumerate() {
        let t = 2.0 * PI * s as f64 / n as f64;
        for l in 0..3 {
            assert!(close(b[(l, l)], Complex64::new(2.0, 0.0)));
        }
        assert!(close(b[(0, 1)], -cis(-t)));
        assert!(close(b[(1, 0)], -cis(t)));
        assert!(close(b[(2, 0)], -cis(-t)));
        assert!(close(b[(0, 2)], -cis(t)));
        assert!(max_diff(b, &dense[s]) < 1e-12);
    }
}

#[test]
fn zero_mode_block_is_plain_band() {
    let mut rng = crate::rng_from_seed(3);
    let band = random_band(12, 4, &mut rng).unwrap();
    let b0 = &band_mode_blocks(&band)[0];
    for l0 in 0..4 {
        let mut want = vec![Complex64::new(0.0, 0.0); 4];
        for (t, v) in band.rows[l0].iter().enumerate() {
            let col = (l0 as i64 + t as i64 - band.alpha as i64).rem_euclid(4) as usize;
            want[col] += v;
        }
        for col in 0..4 {
            assert!(close(b0[(l0, col)], want[col]));
        }
    }
}

#[test]
fn band_wider_than_block_is_rejected() {
    let row = vec![Complex64::new(1.0, 0.0); 4];
    assert!(BandRows::new(12, 3, 2, 1, vec![row; 3]).is_err());
}

#[test]
fn mode_set_shape() {
    let set = FourierModeSet::new(16, 8).unwrap();
    assert_eq!(set.blocks(), 4);
    assert_eq!(set.all_modes(), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    assert_eq!(set.modes(), vec![(0, 1), (1, 0), (1, 1)]);
    assert!(FourierModeSet::new(16, 3).is_err());
    assert!(FourierModeSet::new(12, 8).is_err());
}

#[test]
fn zero_mode_is_singular_unless_excluded() {
    let (acore, pcore) = random_core(4, 1, Builder::BlackBox).unwrap();
    let cfg = CycleConfig::default();
    let err = mode_symbols_2d(&acore, &pcore, (0, 0), 8, &cfg).unwrap_err();
    assert!(matches!(err, Error::DegenerateMode { mode: (0, 0), .. }));
    assert!(mode_symbols_2d(&acore, &pcore, (1, 0), 8, &cfg).is_ok());
}

#[test]
fn operator_symbol_is_hermitian() {
    let (acore, pcore) = random_core(8, 4, Builder::BlackBox).unwrap();
    let set = FourierModeSet::new(32, 8).unwrap();
    for mode in set.modes() {
        let sym = mode_symbols_2d(&acore, &pcore, mode, 32, &CycleConfig::default()).unwrap();
        assert!(max_diff(&sym.ahat, &sym.ahat.adjoint()) < 1e-12);
        assert_eq!(sym.phat.shape(), (64, 16));
        assert!(sym.mhat.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }
}

#[test]
fn prolongation_symbol_matches_dense_transform() {
    let (n, c) = (16, 4);
    let (acore, pcore) = random_core(c, 8, Builder::BlackBox).unwrap();
    let a = tile_operator(&acore, n).unwrap();
    let p = tile_prolongation(&pcore, &a).unwrap();
    let tp = transform_2d(&p.to_dense(), n, c).unwrap();
    for mode in FourierModeSet::new(n, c).unwrap().all_modes() {
        let block = oracle::extract_mode_block(&tp, n, c, mode, true);
        assert!(max_diff(&block, &prolongation_symbol(&pcore, mode, n)) < 1e-10);
    }
}

#[test]
fn poisson_loss_matches_dense() {
    let a = discretize(&DiffusionField::constant(4, 1.0).unwrap(), &BoundarySpec::periodic()).unwrap();
    let p = build_prolongation(&a, Builder::Bilinear).unwrap();
    let cfg = CycleConfig::default();
    let fast = frobenius_loss(&a, &p, 8, &cfg).unwrap();
    let dense = dense_frobenius_loss(&a, &p, 8, &cfg).unwrap();
    assert!(fast > 0.0);
    assert!((fast - dense).abs() < 1e-10 * dense);
}

#[test]
fn loss_is_scale_invariant() {
    let (acore, pcore) = random_core(8, 2, Builder::BlackBox).unwrap();
    let cfg = CycleConfig::default();
    let l1 = frobenius_loss(&acore, &pcore, 16, &cfg).unwrap();
    let l2 = frobenius_loss(&acore.scaled(37.5), &pcore, 16, &cfg).unwrap();
    assert!((l1 - l2).abs() < 1e-10 * l1);
}

#[test]
fn per_mode_dump_is_ordered_and_sums_to_loss() {
    let (acore, pcore) = random_core(4, 6, Builder::BlackBox).unwrap();
    let cfg = CycleConfig::default();
    let rows = per_mode_frobenius(&acore, &pcore, 16, &cfg).unwrap();
    let modes: Vec<(usize, usize)> = rows.iter().map(|r| (r.s1, r.s2)).collect();
    assert_eq!(modes, FourierModeSet::new(16, 4).unwrap().modes());
    let total: f64 = rows.iter().map(|r| r.frob2).sum();
    assert_eq!(total, frobenius_loss(&acore, &pcore, 16, &cfg).unwrap());
    let mut buf = Vec::new();
    write_mode_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("s1,s2,frob2\n0,1,"));
    assert_eq!(text.lines().count(), rows.len() + 1);
}

#[test]
fn spectral_radius_matches_deflated_dense() {
    let cfg = CycleConfig::default();
    for seed in 0..3 {
        let (acore, pcore) = random_core(4, seed, Builder::BlackBox).unwrap();
        let fast = max_mode_spectral_radius(&acore, &pcore, 8, &cfg).unwrap();
        let dense = spectral_radius_dense(&deflated_two_grid(&acore, &pcore, 8, &cfg).unwrap()).unwrap();
        assert!((fast - dense).abs() < 1e-6);
    }
}

#[test]
fn mismatched_core_is_rejected() {
    let (acore, _) = random_core(4, 1, Builder::BlackBox).unwrap();
    let (_, pbig) = random_core(8, 1, Builder::BlackBox).unwrap();
    assert!(frobenius_loss(&acore, &pbig, 8, &CycleConfig::default()).is_err());
}

#[test]
fn gradient_matches_finite_differences() {
    let (acore, pcore) = random_core(4, 11, Builder::BlackBox).unwrap();
    let cfg = CycleConfig::default();
    let (loss, grad) = frobenius_loss_grad(&acore, &pcore, 8, &cfg).unwrap();
    assert_eq!(loss, frobenius_loss(&acore, &pcore, 8, &cfg).unwrap());
    let h = 1e-6;
    for j in 0..pcore.coarse_len() {
        for (dy, dx) in [(0, 1), (1, 0), (1, 1), (-1, -1)] {
            let mut cols = pcore.col_stencils().to_vec();
            let v = cols[j].get(dy, dx);
            cols[j].set(dy, dx, v + h);
            let plus = crate::prolong::ProlongationMap::from_col_stencils(&acore, cols.clone()).unwrap();
            cols[j].set(dy, dx, v - h);
            let minus = crate::prolong::ProlongationMap::from_col_stencils(&acore, cols).unwrap();
            let fd = (frobenius_loss(&acore, &plus, 8, &cfg).unwrap() - frobenius_loss(&acore, &minus, 8, &cfg).unwrap())
                / (2.0 * h);
            let g = grad[j].get(dy, dx);
            assert!((g - fd).abs() <= 1e-6 * fd.abs().max(1.0), "j={j} ({dy},{dx}): {g} vs {fd}");
        }
    }
}

#[test]
fn suite_passes_and_negative_control_fails() {
    let report = run_suite(&CheckOptions::default()).unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.max_deviation() < 1e-8);
    let names: Vec<&str> = report.results.iter().map(|r| r.name.as_str()).collect();
    for want in ["unitarity", "block-diagonalization", "fast-blocks-1d", "fast-blocks-2d", "loss-equivalence", "spectral-consistency"] {
        assert!(names.contains(&want), "{want}");
    }
    let bad = run_suite(&CheckOptions {
        corrupt_phase: true,
        ..CheckOptions::default()
    })
    .unwrap();
    assert!(!bad.passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn off_diagonal_blocks_vanish(seed in any::<u64>(), which in 0usize..3) {
        let (n, k) = [(12, 3), (16, 4), (8, 2)][which];
        let mut rng = crate::rng_from_seed(seed);
        let kmat = random_block_circulant(n, k, &mut rng);
        let t = transform_dense(&kmat, k).unwrap();
        for bi in 0..n / k {
            for bj in 0..n / k {
                if bi != bj {
                    let off = t.view((bi * k, bj * k), (k, k)).iter().fold(0.0f64, |a, z| a.max(z.norm()));
                    prop_assert!(off < 1e-10);
                }
            }
        }
    }

    #[test]
    fn fast_blocks_match_dense(seed in any::<u64>(), which in 0usize..3) {
        let (n, k) = [(8, 4), (12, 3), (16, 4)][which];
        let mut rng = crate::rng_from_seed(seed);
        let band = random_band(n, k, &mut rng).unwrap();
        let dense = block_diagonalize_dense(&band.to_dense(), k).unwrap();
        for (x, y) in band_mode_blocks(&band).iter().zip(&dense) {
            prop_assert!(max_diff(x, y) < 1e-10);
        }
    }

    #[test]
    fn loss_equals_dense_frobenius(seed in any::<u64>(), blackbox in any::<bool>()) {
        let builder = if blackbox { Builder::BlackBox } else { Builder::Bilinear };
        let (acore, pcore) = random_core(4, seed, builder).unwrap();
        let cfg = CycleConfig::default();
        let fast = frobenius_loss(&acore, &pcore, 8, &cfg).unwrap();
        let dense = dense_frobenius_loss(&acore, &pcore, 8, &cfg).unwrap();
        prop_assert!((fast - dense).abs() <= 1e-6 * dense);
    }

    #[test]
    fn stencil_symbol_matches_dense_2d(seed in any::<u64>()) {
        let (n, c) = (8, 4);
        let (acore, _) = random_core(c, seed, Builder::Bilinear).unwrap();
        let a = tile_operator(&acore, n).unwrap();
        let ta = transform_2d(&a.to_dense(), n, c).unwrap();
        for mode in FourierModeSet::new(n, c).unwrap().all_modes() {
            let block = oracle::extract_mode_block(&ta, n, c, mode, false);
            prop_assert!(max_diff(&block, &stencil_symbol(&acore, mode, n)) < 1e-10);
        }
        prop_assert!(oracle::off_block_max(&ta, n, c, false) < 1e-10);
    }
}
