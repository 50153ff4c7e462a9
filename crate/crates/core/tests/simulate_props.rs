mod common;

use cpfactor::model::coherence_report;
use cpfactor::simulate::{
    equicorrelation, gen_ar1_factors, gen_loadings, gen_noise, gen_series, named_config, stream_rng, ConfigName,
    SimConfig, SimOverrides, Stream,
};
use proptest::prelude::*;

fn small_config(seed: u64) -> SimConfig {
    SimConfig {
        dims: vec![6, 5],
        r: 2,
        t: 50,
        w: 3.0,
        delta: 0.2,
        phis: vec![0.8, 0.6],
        psi: vec![0.1, 0.1],
        burn_in: 200,
        seed,
    }
}

#[test]
fn ar1_moments_match_stationary_values() {
    let n = 100_000;
    for phi in [0.8, 0.6, -0.5] {
        let f = gen_ar1_factors(&[phi], n, &mut common::rng(3), 200).unwrap().remove(0);
        let mean = f.iter().sum::<f64>() / n as f64;
        let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let cov1 = f.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1) as f64;
        let want = 1.0 / (1.0 - phi * phi);
        assert!((var / want - 1.0).abs() < 0.05, "phi {phi}: var {var} vs {want}");
        assert!((cov1 - phi * want).abs() < 0.05 * want, "phi {phi}: cov1 {cov1}");
    }
}

#[test]
fn noise_has_kronecker_covariance() {
    let dims = [3, 2];
    let psi = [0.3, -0.2];
    let n = 40_000;
    let e = gen_noise(&dims, &psi, n, &mut common::rng(8)).unwrap();
    let p1 = equicorrelation(3, 0.3);
    let p2 = equicorrelation(2, -0.2);
    let idx = common::all_indices(&dims);
    for a in &idx {
        for b in &idx {
            let ia = common::vec_index(a, &dims);
            let ib = common::vec_index(b, &dims);
            let s = (0..n).map(|t| e.slice(t)[ia] * e.slice(t)[ib]).sum::<f64>() / n as f64;
            let want = p1[(a[0], b[0])] * p2[(a[1], b[1])];
            assert!((s - want).abs() < 0.04, "{a:?},{b:?}: {s} vs {want}");
        }
    }
}

#[test]
fn zero_weight_series_is_pure_noise() {
    let cfg = SimConfig { w: 0.0, ..small_config(4) };
    let (x, _) = gen_series(&cfg).unwrap();
    let e = gen_noise(&cfg.dims, &cfg.psi, cfg.t, &mut stream_rng(cfg.seed, Stream::Noise)).unwrap();
    assert_eq!(x, e);
}

#[test]
fn same_seed_gives_identical_output() {
    let (x1, m1) = gen_series(&small_config(9)).unwrap();
    let (x2, m2) = gen_series(&small_config(9)).unwrap();
    assert_eq!(x1.data(), x2.data());
    assert_eq!(m1, m2);
    let (x3, _) = gen_series(&small_config(10)).unwrap();
    assert_ne!(x1.data(), x3.data());
}

#[test]
fn streams_are_independent_of_other_parameters() {
    let base = small_config(12);
    let (_, m0) = gen_series(&base).unwrap();
    let (_, m1) = gen_series(&SimConfig { psi: vec![0.0, 0.3], w: 7.0, ..base.clone() }).unwrap();
    assert_eq!(m0.loadings(), m1.loadings());
    assert_eq!(m0.factors(), m1.factors());
}

#[test]
fn signal_plus_noise_decomposition() {
    let cfg = small_config(13);
    let (x, model) = gen_series(&cfg).unwrap();
    let signal = model.signal_series().unwrap();
    let e = gen_noise(&cfg.dims, &cfg.psi, cfg.t, &mut stream_rng(cfg.seed, Stream::Noise)).unwrap();
    for ((a, s), n) in x.data().iter().zip(signal.data()).zip(e.data()) {
        assert!((a - s - n).abs() < 1e-12);
    }
}

#[test]
fn named_configurations_are_valid() {
    for name in ["I", "II", "III", "IV", "V", "1", "5"] {
        let c = named_config(name.parse::<ConfigName>().unwrap(), &SimOverrides::default()).unwrap();
        c.validate().unwrap();
    }
    let bad = SimOverrides { r: Some(50), ..Default::default() };
    assert!(named_config(ConfigName::I, &bad).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let base = small_config(1);
    for cfg in [
        SimConfig { delta: 1.0, ..base.clone() },
        SimConfig { t: 1, ..base.clone() },
        SimConfig { phis: vec![1.0, 0.5], ..base.clone() },
        SimConfig { psi: vec![1.0, 0.0], ..base.clone() },
        SimConfig { psi: vec![0.1], ..base.clone() },
        SimConfig { r: 7, phis: vec![0.5; 7], ..base.clone() },
    ] {
        assert!(gen_series(&cfg).is_err(), "{cfg:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn loadings_have_unit_columns_and_target_coherence(
        dims in prop::collection::vec(4usize..9, 2..4),
        r in 2usize..4,
        delta in 0.0f64..0.9,
        seed in 0u64..10_000,
    ) {
        let a = gen_loadings(&dims, r, delta, &mut common::rng(seed)).unwrap();
        for m in &a {
            for c in m.columns() {
                prop_assert!((c.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let rep = coherence_report(&a).unwrap();
        // Pairs (1, i) have vectorized inner product δ/(r−1); others are smaller.
        prop_assert!((rep.theta - delta / (r - 1) as f64).abs() < 1e-10);
    }
}
