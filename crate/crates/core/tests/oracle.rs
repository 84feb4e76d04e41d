use std::time::Instant;

use dircause::gaussian_oracle::{
    check_identities, directed_information, joint_covariance, mutual_information_horizon, oracle_measure,
    stationary_covariance, Conditioning, GaussianVarModel,
};
use dircause::measures::{MeasureKind, MeasureSpec};
use dircause::synth::gen_var1;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn identities_hold_on_random_four_channel_models() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let m = GaussianVarModel::random_stable(4, seed);
        let r = check_identities(&m, 2, 5).unwrap();
        worst = worst.max(r.max());
        assert!(r.max() < 1e-10, "seed {seed}: {r:?}");
    }
    println!("largest identity residual {worst:e} in {:?}", start.elapsed());
}

#[test]
fn identities_hold_for_bivariate_and_wide_windows() {
    for seed in 100..105 {
        let m = GaussianVarModel::random_stable(2, seed);
        assert!(check_identities(&m, 3, 4).unwrap().max() < 1e-10);
        let m = GaussianVarModel::random_stable(3, seed);
        assert!(check_identities(&m, 5, 2).unwrap().max() < 1e-10);
    }
}

#[test]
fn sum_of_directed_information_exceeds_mutual_information() {
    let m = GaussianVarModel::random_stable(3, 42);
    for k in 1..6 {
        let ab = directed_information(&m, &[0], &[1], k, Conditioning::None).unwrap();
        let ba = directed_information(&m, &[1], &[0], k, Conditioning::None).unwrap();
        let mi = mutual_information_horizon(&m, &[0], &[1], k).unwrap();
        assert!(ab + ba >= mi - 1e-12);
        let inst_ab = directed_information(&m, &[0], &[1], k, Conditioning::DelayedSelf).unwrap();
        let inst_ba = directed_information(&m, &[1], &[0], k, Conditioning::DelayedSelf).unwrap();
        assert!((inst_ab - inst_ba).abs() < 1e-10, "instantaneous exchange is symmetric");
    }
}

#[test]
fn simulated_covariance_matches_the_lyapunov_solution() {
    let m = GaussianVarModel::from_rows(
        &[vec![0.5, 0.0, 0.2], vec![0.3, 0.4, 0.0], vec![0.0, -0.3, 0.6]],
        &[vec![1.0, 0.3, 0.0], vec![0.3, 1.0, 0.2], vec![0.0, 0.2, 0.5]],
        vec![],
    )
    .unwrap();
    let sigma = stationary_covariance(&m).unwrap();
    let lag1 = joint_covariance(&m, 1).unwrap();
    let n = 400_000;
    let s = gen_var1(&m, n, 3).unwrap();
    let d = m.dim();
    let mut c0 = DMatrix::<f64>::zeros(d, d);
    let mut c1 = DMatrix::<f64>::zeros(d, d);
    for t in 1..n {
        for i in 0..d {
            for j in 0..d {
                c0[(i, j)] += s.value(t, i) * s.value(t, j);
                // E[x_t x_{t-1}^T]
                c1[(i, j)] += s.value(t, i) * s.value(t - 1, j);
            }
        }
    }
    c0 /= (n - 1) as f64;
    c1 /= (n - 1) as f64;
    assert!((c0 - &sigma).amax() < 0.03, "lag-0 covariance off");
    // joint layout: index(channel, lag) = (span - lag) * d + channel
    let cross = lag1.matrix().view((d, 0), (d, d)).into_owned();
    assert!((c1 - cross).amax() < 0.03, "lag-1 covariance off");
}

#[test]
fn decoupled_model_has_zero_rates() {
    let m = GaussianVarModel::from_rows(
        &[vec![0.5, 0.0, 0.0], vec![0.0, -0.4, 0.0], vec![0.0, 0.0, 0.7]],
        &[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.5]],
        vec!["a".into(), "b".into(), "c".into()],
    )
    .unwrap();
    for kind in MeasureKind::ALL {
        let side: &[&str] = if kind.is_conditional() { &["c"] } else { &[] };
        let spec = MeasureSpec::new(kind, "b", "a", side).unwrap();
        assert!(oracle_measure(&m, &spec).unwrap().abs() < 1e-12, "{kind}");
    }
}

#[test]
fn bivariate_transfer_entropy_is_half_the_geweke_log_ratio() {
    let m = GaussianVarModel::from_rows(
        &[vec![0.5, 0.0], vec![0.7, 0.8]],
        &[vec![1.0, 0.0], vec![0.0, 1.0]],
        vec!["x".into(), "y".into()],
    )
    .unwrap();
    for window in [1, 2, 10] {
        let te = oracle_measure(
            &m,
            &MeasureSpec::new(MeasureKind::TransferEntropy, "y", "x", &[]).unwrap().with_lag(window),
        )
        .unwrap();
        let g = oracle_measure(
            &m,
            &MeasureSpec::new(MeasureKind::GewekeDynamic, "y", "x", &[]).unwrap().with_ar_order(window),
        )
        .unwrap();
        assert!(te > 0.1);
        assert!((te - 0.5 * g).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn oracle_information_rates_are_nonnegative(seed in any::<u64>(), kind_idx in 0usize..10) {
        let kind = MeasureKind::ALL[kind_idx];
        let m = GaussianVarModel::random_stable(3, seed);
        let side: &[&str] = if kind.is_conditional() { &["x2"] } else { &[] };
        let spec = MeasureSpec::new(kind, "x1", "x0", side).unwrap().with_ar_order(3);
        let v = oracle_measure(&m, &spec).unwrap();
        if kind != MeasureKind::DeltaI {
            prop_assert!(v >= -1e-12, "{} = {}", spec.label(), v);
        }
        prop_assert!(v.is_finite());
    }

    #[test]
    fn identities_on_random_models(seed in any::<u64>(), dim in 2usize..5, window in 1usize..4) {
        let m = GaussianVarModel::random_stable(dim, seed);
        prop_assert!(check_identities(&m, window, 3).unwrap().max() < 1e-10);
    }
}
