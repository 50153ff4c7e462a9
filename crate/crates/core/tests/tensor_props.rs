#![allow(clippy::needless_range_loop)]

mod common;

use common::{all_indices, vec_index};
use cpfactor::tensor::{
    hs_norm, khatri_rao, khatri_rao_except, mode_vec_product, multi_contract, outer, refold, unfold,
};
use cpfactor::{DenseTensor, Matrix};
use proptest::prelude::*;

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 1..5)
}

fn tensor_strategy() -> impl Strategy<Value = DenseTensor> {
    dims_strategy().prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(-10.0f64..10.0, n)
            .prop_map(move |data| DenseTensor::new(dims.clone(), data).unwrap())
    })
}

proptest! {
    #[test]
    fn refold_inverts_unfold(t in tensor_strategy()) {
        for k in 0..t.order() {
            let m = unfold(&t, k).unwrap();
            prop_assert_eq!(m.rows(), t.dims()[k]);
            let back = refold(&m, t.dims(), k).unwrap();
            prop_assert_eq!(&back, &t);
        }
    }

    #[test]
    fn unfold_matches_index_formula(t in tensor_strategy()) {
        let dims = t.dims().to_vec();
        for k in 0..dims.len() {
            let m = unfold(&t, k).unwrap();
            let rest: Vec<usize> = dims.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, &d)| d).collect();
            for idx in all_indices(&dims) {
                let col_idx: Vec<usize> = idx.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, &i)| i).collect();
                let col = vec_index(&col_idx, &rest);
                prop_assert_eq!(m[(idx[k], col)], t.data()[vec_index(&idx, &dims)]);
            }
        }
    }

    #[test]
    fn contraction_order_is_irrelevant(t in tensor_strategy(), seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let vecs: Vec<Vec<f64>> = t.dims().iter().map(|&d| common::gaussian(&mut rng, d)).collect();
        let modes: Vec<usize> = (0..t.order()).step_by(2).collect();
        let fwd: Vec<(usize, &[f64])> = modes.iter().map(|&k| (k, vecs[k].as_slice())).collect();
        let rev: Vec<(usize, &[f64])> = fwd.iter().rev().copied().collect();
        let a = multi_contract(&t, &fwd).unwrap();
        let b = multi_contract(&t, &rev).unwrap();
        prop_assert_eq!(a.dims(), b.dims());
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn mode_product_is_bilinear(t in tensor_strategy(), alpha in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let k = t.order() - 1;
        let d = t.dims()[k];
        let u = common::gaussian(&mut rng, d);
        let v = common::gaussian(&mut rng, d);
        let uv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + alpha * b).collect();
        let lhs = mode_vec_product(&t, k, &uv).unwrap();
        let pu = mode_vec_product(&t, k, &u).unwrap();
        let pv = mode_vec_product(&t, k, &v).unwrap();
        for ((l, a), b) in lhs.data().iter().zip(pu.data()).zip(pv.data()) {
            prop_assert!((l - (a + alpha * b)).abs() <= 1e-10 * (1.0 + l.abs()));
        }
        let t2 = DenseTensor::new(t.dims().to_vec(), t.data().iter().map(|x| alpha * x).collect()).unwrap();
        let scaled = mode_vec_product(&t2, k, &u).unwrap();
        for (s, a) in scaled.data().iter().zip(pu.data()) {
            prop_assert!((s - alpha * a).abs() <= 1e-10 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn rank_one_unfolding_aligns_with_khatri_rao(dims in prop::collection::vec(1usize..5, 2..5), seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let vecs: Vec<Vec<f64>> = dims.iter().map(|&d| common::unit(common::gaussian(&mut rng, d))).collect();
        let refs: Vec<&[f64]> = vecs.iter().map(Vec::as_slice).collect();
        let t = outer(&refs).unwrap();
        let mats: Vec<Matrix> = vecs.iter().map(|v| Matrix::from_columns(std::slice::from_ref(v)).unwrap()).collect();
        let mat_refs: Vec<&Matrix> = mats.iter().collect();
        for k in 0..dims.len() {
            let kr = khatri_rao_except(&mat_refs, k).unwrap();
            let expect = mats[k].matmul_t(&kr).unwrap();
            let got = unfold(&t, k).unwrap();
            prop_assert!(got.max_abs_diff(&expect) <= 1e-12);
        }
        prop_assert!((hs_norm(&t) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn khatri_rao_puts_first_matrix_outermost() {
    let u = Matrix::from_columns(&[vec![1.0, 2.0]]).unwrap();
    let v = Matrix::from_columns(&[vec![3.0, 5.0]]).unwrap();
    let kr = khatri_rao(&[&u, &v]).unwrap();
    assert_eq!(kr.col(0), &[3.0, 5.0, 6.0, 10.0]);
}

#[test]
fn contraction_of_modes_one_and_three_matches_double_loop() {
    let dims = [3, 4, 2];
    let mut rng = common::rng(11);
    let t = DenseTensor::new(dims.to_vec(), common::gaussian(&mut rng, 24)).unwrap();
    let u = common::gaussian(&mut rng, 3);
    let w = common::gaussian(&mut rng, 2);
    let got = multi_contract(&t, &[(0, &u), (2, &w)]).unwrap();
    assert_eq!(got.dims(), &[4]);
    for j in 0..4 {
        let mut s = 0.0;
        for i in 0..3 {
            for k in 0..2 {
                s += t.get(&[i, j, k]) * u[i] * w[k];
            }
        }
        assert!((got.data()[j] - s).abs() < 1e-12);
    }
}

#[test]
fn outer_entries_and_norm() {
    let mut rng = common::rng(5);
    let a = common::gaussian(&mut rng, 4);
    let b = common::gaussian(&mut rng, 3);
    let c = common::gaussian(&mut rng, 2);
    let t = outer(&[&a, &b, &c]).unwrap();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nc = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((hs_norm(&t) - na * nb * nc).abs() < 1e-12);
    let m = outer(&[&a, &b]).unwrap();
    for i in 0..4 {
        for j in 0..3 {
            assert_eq!(m.get(&[i, j]), a[i] * b[j]);
        }
    }
}
