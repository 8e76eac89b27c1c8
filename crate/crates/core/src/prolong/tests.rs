use proptest::prelude::*;

use super::*;
use crate::operator::OFFSETS;
use crate::problem::{discretize, sample_field, tile_block_periodic, vertex_stencil, BoundarySpec, DiffusionField, ProblemDistribution};

fn poisson(n: usize, bc: BoundarySpec) -> StencilOperator {
    discretize(&DiffusionField::constant(n, 1.0).unwrap(), &bc).unwrap()
}

fn random_op(n: usize, seed: u64, bc: BoundarySpec) -> StencilOperator {
    let f = sample_field(&ProblemDistribution::default(), n, seed).unwrap();
    discretize(&f, &bc).unwrap()
}

fn block_periodic(c: usize, n: usize, seed: u64) -> StencilOperator {
    let core = sample_field(&ProblemDistribution::default(), c, seed).unwrap();
    discretize(&tile_block_periodic(&core, n).unwrap(), &BoundarySpec::periodic()).unwrap()
}

/// Fine grid indices of the active vertices, in dense row order.
fn active_rows(a: &StencilOperator) -> Vec<usize> {
    (0..a.len()).filter(|&i| a.is_active(i)).collect()
}

fn corner_residual(a: &StencilOperator, p: &ProlongationMap) -> f64 {
    let ap = a.to_dense() * p.to_dense();
    let rows = active_rows(a);
    let side = a.side();
    let mut worst: f64 = 0.0;
    for (k, &i) in rows.iter().enumerate() {
        if let FineRole::Corner { .. } = p.role(i / side, i % side) {
            worst = worst.max(ap.row(k).amax());
        }
    }
    worst
}

#[test]
fn poisson_patch_has_five_equal_stencils() {
    let a = poisson(8, BoundarySpec::periodic());
    let patch = extract_patch(&a, (1, 2)).unwrap();
    let want = [-1.0, -1.0, -1.0, -1.0, 8.0, -1.0, -1.0, -1.0, -1.0].map(|v| v / 3.0);
    for k in 0..5 {
        let got = patch.stencil(k).flatten();
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }
}

#[test]
fn patch_entries_match_dense_rows() {
    let a = random_op(8, 3, BoundarySpec::dirichlet());
    let dense = a.to_dense();
    let side = a.side();
    // Coarse (1, 1) sits on fine (3, 3).
    let patch = extract_patch(&a, (1, 1)).unwrap();
    for (k, (py, px)) in PATCH_OFFSETS.iter().enumerate() {
        let (r, c) = ((3 + py) as usize, (3 + px) as usize);
        let s = patch.stencil(k);
        for (dy, dx) in OFFSETS {
            let (rr, cc) = ((r as isize + dy) as usize, (c as isize + dx) as usize);
            assert_eq!(s.get(dy, dx), dense[(r * side + c, rr * side + cc)]);
        }
    }
}

#[test]
fn boundary_coarse_points_have_no_patch() {
    let a = random_op(8, 1, BoundarySpec::dirichlet());
    let full = poisson(4, BoundarySpec::dirichlet());
    assert!(extract_patch(&a, (0, 0)).is_ok());
    // The single coarse point of a 3x3 grid has all four neighbours.
    assert!(extract_patch(&full, (0, 0)).is_ok());
    let f = DiffusionField::constant(8, 1.0).unwrap();
    let mut mask = vec![true; 49];
    mask[2 * 7 + 1] = false;
    let masked = discretize(&f, &BoundarySpec::dirichlet().with_mask(mask).unwrap()).unwrap();
    assert!(matches!(extract_patch(&masked, (0, 0)), Err(Error::BoundaryCase((0, 0)))));
}

#[test]
fn block_periodic_patches_repeat() {
    let a = block_periodic(4, 16, 7);
    for j in 0..2 {
        let p0 = extract_patch(&a, (j, 1)).unwrap();
        let p1 = extract_patch(&a, (j + 2, 1)).unwrap();
        let p2 = extract_patch(&a, (j, 5)).unwrap();
        assert_eq!(p0, p1);
        assert_eq!(p0, p2);
    }
}

#[test]
fn blackbox_on_poisson_is_one_half() {
    let a = poisson(8, BoundarySpec::periodic());
    let w = blackbox_weights(&extract_patch(&a, (2, 3)).unwrap()).unwrap();
    for v in w.to_array() {
        assert!((v - 0.5).abs() < 1e-15);
    }
}

#[test]
fn blackbox_follows_a_jump() {
    // Edge point with conductive cells to the west and empty cells to the east.
    let s = vertex_stencil(1.0, 0.0, 0.0, 1.0, 0.0);
    let (west, east) = collapse_horizontal_edge(&s).unwrap();
    assert!((west - 1.0).abs() < 1e-15);
    assert_eq!(east, 0.0);
    let (south, north) = collapse_vertical_edge(&vertex_stencil(0.0, 0.0, 1.0, 1.0, 0.0)).unwrap();
    assert!((south - 1.0).abs() < 1e-15);
    assert_eq!(north, 0.0);
}

#[test]
fn blackbox_rejects_vanishing_collapse() {
    let mut s = Stencil::ZERO;
    s.set(0, -1, 1.0);
    assert!(matches!(collapse_horizontal_edge(&s), Err(Error::DegenerateStencil { .. })));
    let mut s = Stencil::ZERO;
    s.set(1, 0, 1.0);
    assert!(matches!(collapse_vertical_edge(&s), Err(Error::DegenerateStencil { .. })));
}

#[test]
fn poisson_blackbox_is_bilinear() {
    for bc in [BoundarySpec::periodic(), BoundarySpec::dirichlet()] {
        let n = 8;
        let a = poisson(n, bc.clone());
        let bb = build_prolongation(&a, Builder::BlackBox).unwrap();
        let bl = build_prolongation(&a, Builder::Bilinear).unwrap();
        let (db, dl) = (bb.to_dense(), bl.to_dense());
        assert!((db - &dl).amax() < 1e-14);
        let cs = bl.coarse_side();
        let mid = (cs / 2) * cs + cs / 2;
        let col = bl.col(mid);
        for (dy, dx) in OFFSETS {
            let want = match dy.abs() + dx.abs() {
                0 => 1.0,
                1 => 0.5,
                _ => 0.25,
            };
            assert!((col.get(dy, dx) - want).abs() < 1e-15, "{bc:?} ({dy},{dx})");
        }
    }
}

#[test]
fn zero_model_gives_bilinear() {
    let model = MlpModel::zeroed(4, 8).unwrap();
    let a = poisson(16, BoundarySpec::periodic());
    let learned = build_prolongation(&a, Builder::Learned(&model)).unwrap();
    let bilinear = build_prolongation(&a, Builder::Bilinear).unwrap();
    assert!((learned.to_dense() - bilinear.to_dense()).amax() < 1e-15);
}

#[test]
fn normalize_rows_rescales_pairs() {
    let a = poisson(8, BoundarySpec::periodic());
    let mut p = ProlongationMap::empty_for(&a).unwrap();
    for j in 0..p.coarse_len() {
        for (dy, dx) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            p.col_mut(j).set(dy, dx, 0.4);
        }
    }
    let p = normalize_rows(p).unwrap();
    assert!(p.is_normalized());
    for j in 0..p.coarse_len() {
        assert_eq!(p.col(j).get(0, 1), 0.5);
        assert_eq!(p.col(j).get(-1, 0), 0.5);
    }
}

#[test]
fn normalize_single_contributor_row() {
    // On a 7x7 Dirichlet grid the edge at fine (0, 1) has a lone coarse neighbour (1, 1).
    let a = poisson(8, BoundarySpec::dirichlet());
    let mut p = ProlongationMap::empty_for(&a).unwrap();
    for j in 0..p.coarse_len() {
        for (dy, dx) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            p.col_mut(j).set(dy, dx, 0.5);
        }
    }
    p.col_mut(0).set(-1, 0, 0.7);
    let p = normalize_rows(p).unwrap();
    assert!((p.col(0).get(-1, 0) - 1.0).abs() < 1e-15);
}

#[test]
fn normalize_rejects_zero_sum() {
    let a = poisson(8, BoundarySpec::periodic());
    let mut p = ProlongationMap::empty_for(&a).unwrap();
    for j in 0..p.coarse_len() {
        p.col_mut(j).set(0, 1, 0.3);
        p.col_mut(j).set(0, -1, -0.3);
        p.col_mut(j).set(1, 0, 0.5);
        p.col_mut(j).set(-1, 0, 0.5);
    }
    assert!(matches!(normalize_rows(p), Err(Error::FallbackNeeded(_))));
}

#[test]
fn poisson_corners_are_one_quarter() {
    let a = poisson(8, BoundarySpec::periodic());
    let mut p = normalize_rows({
        let mut p = ProlongationMap::empty_for(&a).unwrap();
        for j in 0..p.coarse_len() {
            for (dy, dx) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                p.col_mut(j).set(dy, dx, 0.5);
            }
        }
        p
    })
    .unwrap();
    complete_corners(&a, &mut p).unwrap();
    for j in 0..p.coarse_len() {
        for (dy, dx) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            assert!((p.col(j).get(dy, dx) - 0.25).abs() < 1e-15);
        }
    }
}

#[test]
fn corner_weights_match_scalar_solve() {
    let a = random_op(8, 5, BoundarySpec::dirichlet());
    let p = build_prolongation(&a, Builder::BlackBox).unwrap();
    let side = a.side();
    let dense_p = p.to_dense();
    let dense_a = a.to_dense();
    // Corner (2, 2): solve its own row for the value given every other entry of P e_j.
    let corner = 2 * side + 2;
    assert!(matches!(p.role(2, 2), FineRole::Corner { .. }));
    for col in 0..dense_p.ncols() {
        let mut rhs = 0.0;
        for k in 0..dense_a.ncols() {
            if k != corner {
                rhs += dense_a[(corner, k)] * dense_p[(k, col)];
            }
        }
        let want = -rhs / dense_a[(corner, corner)];
        assert!((dense_p[(corner, col)] - want).abs() < 1e-13);
    }
}

#[test]
fn full_column_rank_on_small_grids() {
    for (n, bc) in [(8, BoundarySpec::periodic()), (8, BoundarySpec::dirichlet())] {
        for seed in 0..3 {
            let a = random_op(n, seed, bc.clone());
            let p = build_prolongation(&a, Builder::BlackBox).unwrap().to_dense();
            let sv = p.singular_values();
            assert!(sv.min() > 1e-8);
        }
    }
}

#[test]
fn block_periodic_columns_repeat_with_half_period() {
    let a = block_periodic(8, 16, 2);
    let p = build_prolongation(&a, Builder::BlackBox).unwrap();
    let cs = p.coarse_side();
    for j in 0..cs * cs {
        let (r, c) = (j / cs, j % cs);
        let k = ((r + 4) % cs) * cs + (c + 4) % cs;
        let l = r * cs + (c + 4) % cs;
        assert_eq!(p.col(j), p.col(k));
        assert_eq!(p.col(j), p.col(l));
    }
}

#[test]
fn dirichlet_disk_builds_and_completes_corners() {
    let f = sample_field(&ProblemDistribution::default(), 16, 4).unwrap();
    let bc = crate::problem::mask_disk(&f, 15).unwrap();
    let a = discretize(&f, &bc).unwrap();
    let p = build_prolongation(&a, Builder::BlackBox).unwrap();
    assert!(corner_residual(&a, &p) < 1e-12);
    assert!(p.to_dense().iter().all(|v| v.is_finite()));
}

#[test]
fn interpolate_and_restrict_match_dense() {
    let a = random_op(8, 9, BoundarySpec::periodic());
    let p = build_prolongation(&a, Builder::BlackBox).unwrap();
    let d = p.to_dense();
    let x: Vec<f64> = (0..p.coarse_len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = (0..p.fine_len()).map(|i| (i as f64 * 0.11).cos()).collect();
    let px = p.interpolate(&x).unwrap();
    let want = &d * nalgebra::DVector::from_vec(x.clone());
    for (u, v) in px.iter().zip(want.iter()) {
        assert!((u - v).abs() < 1e-13);
    }
    let pty = p.restrict(&y).unwrap();
    let want = d.transpose() * nalgebra::DVector::from_vec(y);
    for (u, v) in pty.iter().zip(want.iter()) {
        assert!((u - v).abs() < 1e-13);
    }
    assert!(p.interpolate(&[1.0]).is_err());
}

#[test]
fn map_json_shape() {
    let a = poisson(4, BoundarySpec::periodic());
    let p = build_prolongation(&a, Builder::Bilinear).unwrap();
    let v = p.to_json();
    assert_eq!(v["fineSide"], 4);
    assert_eq!(v["coarseSide"], 2);
    assert_eq!(v["colStencils"].as_array().unwrap().len(), 4);
}

#[test]
fn from_col_stencils_validates() {
    let a = poisson(8, BoundarySpec::dirichlet());
    let p = build_prolongation(&a, Builder::Bilinear).unwrap();
    let ok = ProlongationMap::from_col_stencils(&a, p.col_stencils().to_vec()).unwrap();
    assert_eq!(ok.to_dense(), p.to_dense());
    let mut bad = p.col_stencils().to_vec();
    bad[0].set(0, 0, 0.5);
    assert!(ProlongationMap::from_col_stencils(&a, bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn periodic_constants_are_preserved(seed in any::<u64>(), half in 2usize..6) {
        let a = random_op(2 * half, seed, BoundarySpec::periodic());
        for builder in [Builder::Bilinear, Builder::BlackBox] {
            let p = build_prolongation(&a, builder).unwrap();
            let ones = p.interpolate(&vec![1.0; p.coarse_len()]).unwrap();
            for v in ones {
                prop_assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corner_residual_vanishes(seed in any::<u64>(), half in 2usize..5, dirichlet in any::<bool>()) {
        let bc = if dirichlet { BoundarySpec::dirichlet() } else { BoundarySpec::periodic() };
        let a = random_op(2 * half, seed, bc);
        for builder in [Builder::Bilinear, Builder::BlackBox] {
            let p = build_prolongation(&a, builder).unwrap();
            prop_assert!(corner_residual(&a, &p) < 1e-12);
        }
    }

    #[test]
    fn blackbox_is_scale_invariant(seed in any::<u64>(), alpha in 1e-3f64..1e3) {
        let a = random_op(8, seed, BoundarySpec::periodic());
        let patch = extract_patch(&a, (1, 2)).unwrap();
        let w = blackbox_weights(&patch).unwrap().to_array();
        let ws = blackbox_weights(&patch.scaled(alpha)).unwrap().to_array();
        for (u, v) in w.iter().zip(ws) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsity_pattern_holds(seed in any::<u64>(), dirichlet in any::<bool>()) {
        let bc = if dirichlet { BoundarySpec::dirichlet() } else { BoundarySpec::periodic() };
        let a = random_op(8, seed, bc);
        let p = build_prolongation(&a, Builder::BlackBox).unwrap();
        let d = p.to_dense();
        let side = a.side();
        for (k, &i) in active_rows(&a).iter().enumerate() {
            let nnz = d.row(k).iter().filter(|v| **v != 0.0).count();
            let cap = match p.role(i / side, i % side) {
                FineRole::Coincident(_) => 1,
                FineRole::Edge { .. } => 2,
                FineRole::Corner { .. } => 4,
            };
            prop_assert!(nnz <= cap);
        }
        for j in 0..d.ncols() {
            prop_assert!(d.column(j).iter().filter(|v| **v != 0.0).count() <= 9);
        }
    }

    #[test]
    fn periodic_edge_rows_sum_to_one(seed in any::<u64>()) {
        let a = random_op(8, seed, BoundarySpec::periodic());
        let p = build_prolongation(&a, Builder::BlackBox).unwrap();
        let d = p.to_dense();
        for k in 0..d.nrows() {
            if let FineRole::Edge { .. } = p.role(k / 8, k % 8) {
                prop_assert!((d.row(k).sum() - 1.0).abs() < 1e-12);
            }
        }
    }
}
