mod common;

use polytile::mlsvd::{mlsvd, mode1_factorize, mode_n_rank, numerical_rank, svd};
use polytile::tensor::{DenseTensor, Matrix, Shape};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dims() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=6, 2..=4)
}

/// Orthonormal basis of the column space of a random `rows x cols` matrix.
fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let dec = svd(&common::random_matrix(rng, rows, cols));
    Matrix::from_fn(rows, cols, |r, c| dec.u.get(r, c))
}

fn projector(m: &Matrix) -> Matrix {
    m.matmul(&m.transpose()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reconstruction_orthogonality_ordering(d in dims(), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = common::random_tensor(&mut rng, &d);
        let norm = t.frobenius_norm();
        let res = mlsvd(&t, 1e-10).unwrap();
        let back = res.reconstruct().unwrap();
        prop_assert!(back.sub(&t).unwrap().frobenius_norm() <= 1e-10 * norm);
        for (mode, u) in res.factors.iter().enumerate() {
            let g = u.transpose().matmul(u).unwrap();
            prop_assert!(g.sub_identity_max() <= 1e-10);
            let sv = &res.mode_singular_values[mode];
            prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(res.mode_ranks[mode], mode_n_rank(&t, mode, 1e-10).unwrap());
            for a in 0..d[mode] {
                let sa = res.core.slice(mode, a).unwrap();
                prop_assert!((sa.frobenius_norm() - sv[a]).abs() <= 1e-10 * norm);
                for b in a + 1..d[mode] {
                    let sb = res.core.slice(mode, b).unwrap();
                    prop_assert!(sa.scalar_product(&sb).unwrap().abs() <= 1e-10 * norm * norm);
                }
            }
        }
    }

    #[test]
    fn mode1_factorize_within_budget(d in dims(), budget in 1usize..5, rank in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // build a tensor of known mode-1 rank min(rank, I_1, rest)
        let rest: usize = d[1..].iter().product();
        let core_rows = rank.min(d[0]).min(rest);
        let left = common::random_matrix(&mut rng, d[0], core_rows);
        let mut core_dims = d.clone();
        core_dims[0] = core_rows;
        let core = common::random_tensor(&mut rng, &core_dims);
        let t = core.mode_n_product(&left, 0).unwrap();
        let f = mode1_factorize(&t, budget, 1e-10).unwrap().unwrap();
        prop_assert!(f.rank <= budget);
        prop_assert_eq!(f.numerical_rank, core_rows);
        if f.numerical_rank <= budget {
            let err = f.reconstruct().unwrap().sub(&t).unwrap().frobenius_norm();
            prop_assert!(err <= 1e-10 * t.frobenius_norm());
        }
    }

    #[test]
    fn svd_of_low_rank_matrices(rows in 1usize..9, cols in 1usize..21, r in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_matrix(&mut rng, rows, r).matmul(&common::random_matrix(&mut rng, r, cols)).unwrap();
        for m in [a.clone(), a.transpose()] {
            let dec = svd(&m);
            let k = m.rows().min(m.cols());
            prop_assert!(dec.u.transpose().matmul(&dec.u).unwrap().sub_identity_max() <= 1e-12);
            prop_assert!(dec.vt.matmul(&dec.vt.transpose()).unwrap().sub_identity_max() <= 1e-12);
            let us = Matrix::from_fn(m.rows(), k, |i, j| dec.u.get(i, j) * dec.singular_values[j]);
            let back = us.matmul(&dec.vt).unwrap();
            prop_assert!(common::rel_gap(back.data(), m.data()) <= 1e-12);
            prop_assert!(dec.singular_values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(numerical_rank(&m, 1e-10), r.min(rows).min(cols));
        }
    }

    #[test]
    fn rank_is_scale_invariant(rows in 1usize..7, cols in 1usize..7, c in prop_oneof![-1e6..-1e-6f64, 1e-6..1e6f64], seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rows.min(cols).min(3);
        let a = common::random_matrix(&mut rng, rows, r).matmul(&common::random_matrix(&mut rng, r, cols)).unwrap();
        let scaled = Matrix::from_fn(rows, cols, |i, j| c * a.get(i, j));
        prop_assert_eq!(numerical_rank(&scaled, 1e-10), numerical_rank(&a, 1e-10));
    }
}

trait IdentityGap {
    fn sub_identity_max(&self) -> f64;
}

impl IdentityGap for Matrix {
    fn sub_identity_max(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((self.get(r, c) - target).abs());
            }
        }
        worst
    }
}

#[test]
fn left_factor_spans_the_generating_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let q = random_orthonormal(&mut rng, 5, 2);
    let core = common::random_tensor(&mut rng, &[2, 3, 2]);
    let t = core.mode_n_product(&q, 0).unwrap();
    let f = mode1_factorize(&t, 3, 1e-10).unwrap().unwrap();
    assert_eq!(f.rank, 2);
    let gap = projector(&f.left).data().iter().zip(projector(&q).data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-10, "projector gap {gap}");
}

#[test]
fn random_tensor_example_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = common::random_tensor(&mut rng, &[2, 2, 2]);
    let f = mode1_factorize(&t, 2, 1e-10).unwrap().unwrap();
    assert_eq!(f.rank, 2);
    assert!(f.reconstruct().unwrap().sub(&t).unwrap().frobenius_norm() <= 1e-12 * t.frobenius_norm());

    let t = common::random_tensor(&mut rng, &[2, 4, 4]);
    assert!(mode_n_rank(&t, 0, 1e-10).unwrap() <= 2);

    let zero = DenseTensor::zeros(Shape::new(vec![3, 3]).unwrap());
    assert!(mode1_factorize(&zero, 2, 1e-10).unwrap().is_none());
    let res = mlsvd(&zero, 1e-10).unwrap();
    assert!(res.core.data().iter().all(|&x| x == 0.0));
}
