#![allow(clippy::needless_range_loop)]

mod common;

use common::{gram_schmidt, moment_entry, noiseless, proj_dist, unit, vec_index};
use cpfactor::estimators::{
    als_random, cals, coals, cpca_init, fit, hope, iso_refine, iso_refine_observed, one_step_hope,
    oals_random, project_z, projected_reconstruction, projection_leakage, InitialLoadings,
    ProjectionState,
};
use cpfactor::metrics::loading_error;
use cpfactor::{CpFactorModel, FitConfig, Matrix, Method, TensorTimeSeries};

fn max_error(est: &[Matrix], truth: &[Matrix]) -> f64 {
    loading_error(est, truth).unwrap().max_error
}

fn full_moment(x: &TensorTimeSeries, h: usize) -> Vec<Vec<f64>> {
    let d = x.slice_len();
    (0..d).map(|i| (0..d).map(|j| moment_entry(x, h, i, j)).collect()).collect()
}

fn noisy(dims: &[usize], r: usize, delta: f64, t: usize, seed: u64, sigma: f64) -> TensorTimeSeries {
    let (x, _) = noiseless(dims, r, delta, t, seed);
    let mut rng = common::rng(seed ^ 0xabc);
    let noise = common::gaussian(&mut rng, x.data().len());
    let data = x.data().iter().zip(noise).map(|(a, e)| a + sigma * e).collect();
    TensorTimeSeries::new(dims.to_vec(), t, data).unwrap()
}

#[test]
fn hope_is_exact_on_noiseless_data() {
    for (dims, r, delta) in [(vec![8, 7], 2, 0.3), (vec![5, 6, 4], 3, 0.0), (vec![6, 6], 1, 0.0)] {
        let (x, model) = noiseless(&dims, r, delta, 300, 11);
        let mut cfg = FitConfig::new(r);
        cfg.eps = 1e-12;
        let f = hope(&x, &cfg).unwrap();
        assert!(max_error(&f.loadings, model.loadings()) < 1e-8, "{dims:?} r={r}");
        assert!(f.iterations <= 10);
    }
}

#[test]
fn iso_with_true_loadings_is_a_fixed_point() {
    let (x, model) = noiseless(&[9, 8], 3, 0.3, 400, 5);
    let init = InitialLoadings::new(model.loadings().to_vec());
    let f = iso_refine(&x, &init, &FitConfig::new(3)).unwrap();
    assert!(f.converged);
    assert_eq!(f.iterations, 1);
    assert!(max_error(&f.loadings, model.loadings()) < 1e-10);
}

#[test]
fn leakage_is_identity_at_the_truth() {
    let (_, model) = noiseless(&[7, 6, 5], 3, 0.3, 50, 2);
    let state = ProjectionState::new(model.loadings().to_vec(), 0.1).unwrap();
    for k in 0..3 {
        let xi = projection_leakage(&model, &state, k).unwrap();
        assert!(xi.max_abs_diff(&Matrix::identity(3)) < 1e-10);
    }
}

#[test]
fn leakage_shrinks_under_iso() {
    let dims = [10, 10];
    let (_, model) = noiseless(&dims, 3, 0.4, 400, 9);
    let x = noisy(&dims, 3, 0.4, 400, 9, 0.3);
    let init = cpca_init(&x, 3, 1).unwrap();
    let off = |xi: &Matrix| {
        let mut m = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    m = m.max(xi[(i, j)].abs());
                }
            }
        }
        m
    };
    // Reorder the true components to match the estimates.
    let assign = loading_error(&init.loadings, model.loadings()).unwrap().assignment;
    let loads: Vec<Matrix> = model
        .loadings()
        .iter()
        .map(|a| Matrix::from_columns(&assign.iter().map(|&t| a.col(t).to_vec()).collect::<Vec<_>>()).unwrap())
        .collect();
    let weights: Vec<f64> = assign.iter().map(|&t| model.weights()[t]).collect();
    let perm = CpFactorModel::new(weights, loads, None).unwrap();
    let start = ProjectionState::new(init.loadings.clone(), 0.1).unwrap();
    let first = off(&projection_leakage(&perm, &start, 0).unwrap());
    let mut last = first;
    iso_refine_observed(&x, &init, &FitConfig::new(3), |s, _, _| {
        last = off(&projection_leakage(&perm, s, 0).unwrap());
    })
    .unwrap();
    assert!(last <= first, "{last} > {first}");
}

#[test]
fn hope_equals_iso_from_cpca() {
    let x = noisy(&[6, 7], 2, 0.2, 200, 3, 0.5);
    let cfg = FitConfig::new(2);
    let a = hope(&x, &cfg).unwrap();
    let b = iso_refine(&x, &cpca_init(&x, 2, 1).unwrap(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_step_hope_is_one_iso_sweep() {
    let x = noisy(&[6, 7], 2, 0.2, 200, 4, 0.5);
    let mut cfg = FitConfig::new(2);
    let one = one_step_hope(&x, &cfg).unwrap();
    cfg.max_iter = 1;
    let iso = iso_refine(&x, &cpca_init(&x, 2, 1).unwrap(), &cfg).unwrap();
    assert_eq!(one.loadings, iso.loadings);
    assert_eq!(one.iterations, 1);
    assert_eq!(one.method, Method::OneStepHope);
    assert!(one.converged);
}

#[test]
fn cals_single_sweep_matches_hand_update() {
    let dims = [3, 4];
    let x = noisy(&dims, 1, 0.0, 60, 8, 0.4);
    let m = full_moment(&x, 1);
    let mut rng = common::rng(1);
    let a0 = unit(common::gaussian(&mut rng, 3));
    let b0 = unit(common::gaussian(&mut rng, 4));
    let init = InitialLoadings::new(vec![
        Matrix::from_columns(std::slice::from_ref(&a0)).unwrap(),
        Matrix::from_columns(std::slice::from_ref(&b0)).unwrap(),
    ]);
    let mut cfg = FitConfig::new(1);
    cfg.max_iter = 1;
    let f = cals(&x, &init, &cfg).unwrap();

    // v = Mᵀ (a ⊗ b), then contract the other mode.
    let v_of = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut v = vec![0.0; 12];
        for (col, vc) in v.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..4 {
                    *vc += m[vec_index(&[i, j], &dims)][col] * a[i] * b[j];
                }
            }
        }
        v
    };
    let v = v_of(&a0, &b0);
    let a1 = unit((0..3).map(|i| (0..4).map(|j| v[vec_index(&[i, j], &dims)] * b0[j]).sum()).collect());
    let v = v_of(&a1, &b0);
    let b1 = unit((0..4).map(|j| (0..3).map(|i| v[vec_index(&[i, j], &dims)] * a1[i]).sum()).collect());
    assert!(proj_dist(f.loadings[0].col(0), &a1) < 1e-10);
    assert!(proj_dist(f.loadings[1].col(0), &b1) < 1e-10);
}

#[test]
fn coals_single_sweep_matches_matricized_update() {
    let dims = [2, 2, 2, 2];
    let x = noisy(&dims, 2, 0.3, 80, 12, 0.3);
    let m = full_moment(&x, 1);
    let mut rng = common::rng(2);
    let init: Vec<Matrix> = (0..4).map(|_| common::random_unit_columns(&mut rng, 2, 2)).collect();
    let mut cfg = FitConfig::new(2);
    cfg.max_iter = 1;
    let f = coals(&x, &InitialLoadings::new(init.clone()), &cfg).unwrap();

    let q: Vec<Vec<Vec<f64>>> = init.iter().map(gram_schmidt).collect();
    let idx = common::all_indices(&dims);
    for i in 0..2 {
        // w[α] = Σ_β M[α, β] Π_k q_k[β_k]
        let w: Vec<f64> = (0..16)
            .map(|a| {
                idx.iter()
                    .map(|b| m[a][vec_index(b, &dims)] * (0..4).map(|k| q[k][i][b[k]]).product::<f64>())
                    .sum()
            })
            .collect();
        for k in 0..4 {
            let upd = unit(
                (0..2)
                    .map(|c| {
                        idx.iter()
                            .filter(|a| a[k] == c)
                            .map(|a| {
                                w[vec_index(a, &dims)]
                                    * (0..4).filter(|&l| l != k).map(|l| q[l][i][a[l]]).product::<f64>()
                            })
                            .sum()
                    })
                    .collect(),
            );
            assert!(proj_dist(f.loadings[k].col(i), &upd) < 1e-10, "component {i} mode {k}");
        }
    }
}

#[test]
fn als_variants_are_exact_for_orthogonal_loadings() {
    let (x, model) = noiseless(&[6, 5, 4], 3, 0.0, 300, 21);
    let mut cfg = FitConfig::new(3);
    cfg.eps = 1e-13;
    cfg.max_iter = 100;
    for method in [Method::Cals, Method::Coals] {
        let f = fit(&x, method, &cfg).unwrap();
        assert!(max_error(&f.loadings, model.loadings()) < 1e-8, "{method}");
    }
}

#[test]
fn factor_rows_have_unit_norm() {
    let x = noisy(&[8, 8], 2, 0.2, 150, 6, 0.5);
    for method in Method::ALL {
        let mut cfg = FitConfig::new(2);
        cfg.restarts = 3;
        cfg.seed = Some(1);
        let f = fit(&x, method, &cfg).unwrap();
        assert_eq!(f.method, method);
        for row in &f.factors {
            let s: f64 = row.iter().map(|v| v * v).sum();
            assert!((s - 1.0).abs() < 1e-10, "{method}: {s}");
        }
        for a in &f.loadings {
            for c in a.columns() {
                assert!((c.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fitted_series_equals_projected_reconstruction() {
    let x = noisy(&[5, 6, 3], 2, 0.3, 90, 7, 0.5);
    let f = hope(&x, &FitConfig::new(2)).unwrap();
    let a = f.fitted_series().unwrap();
    let b = projected_reconstruction(&x, &f.loadings, 0.1).unwrap();
    let diff = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-10);
}

#[test]
fn projected_series_isolates_one_component() {
    let (x, model) = noiseless(&[5, 4, 3], 2, 0.3, 40, 3);
    let state = ProjectionState::new(model.loadings().to_vec(), 0.1).unwrap();
    let f = model.factors().unwrap();
    for i in 0..2 {
        for k in 0..3 {
            let z = project_z(&x, &state, i, k).unwrap();
            let a = model.loading(i, k);
            for t in 0..40 {
                for r in 0..a.len() {
                    let want = model.weights()[i] * f[i][t] * a[r];
                    assert!((z[(r, t)] - want).abs() < 1e-10);
                }
            }
        }
    }
    assert!(project_z(&x, &state, 0, 3).is_err());
    assert!(project_z(&x, &state, 2, 0).is_err());
}

#[test]
fn random_start_methods_are_seeded() {
    let x = noisy(&[6, 6], 2, 0.2, 120, 10, 0.5);
    let mut cfg = FitConfig::new(2);
    cfg.restarts = 5;
    cfg.seed = Some(42);
    assert_eq!(als_random(&x, &cfg).unwrap(), als_random(&x, &cfg).unwrap());
    assert_eq!(oals_random(&x, &cfg).unwrap(), oals_random(&x, &cfg).unwrap());
    assert_eq!(hope(&x, &cfg).unwrap(), hope(&x, &cfg).unwrap());
}

#[test]
fn cpca_fit_reports_no_iterations() {
    let x = noisy(&[6, 6], 2, 0.2, 120, 10, 0.5);
    let f = fit(&x, Method::Cpca, &FitConfig::new(2)).unwrap();
    assert_eq!(f.iterations, 0);
    assert!(f.converged);
    assert_eq!(f.lambda_hat.len(), 2);
}

#[test]
fn invalid_inputs_are_rejected() {
    let x = noisy(&[4, 4], 1, 0.0, 30, 1, 0.5);
    assert_eq!(hope(&x, &FitConfig::new(0)).unwrap_err().kind(), "invalid_argument");
    let mut cfg = FitConfig::new(1);
    cfg.h = 30;
    assert!(hope(&x, &cfg).is_err());
    let wrong = InitialLoadings::new(vec![Matrix::identity(4)]);
    assert_eq!(cals(&x, &wrong, &FitConfig::new(1)).unwrap_err().kind(), "shape_mismatch");
}

#[test]
fn rank_above_smallest_mode_warns() {
    let mut rng = common::rng(4);
    let x = TensorTimeSeries::new(vec![2, 6], 100, common::gaussian(&mut rng, 1200)).unwrap();
    let f = hope(&x, &FitConfig::new(3)).unwrap();
    assert!(f.warnings.iter().any(|w| w.contains("exceeds")), "{:?}", f.warnings);
}
