use proptest::prelude::*;
use q2opt_core::distrl::*;
use q2opt_core::rng::rng_from_seed;
use rand::Rng;

proptest! {
    #[test]
    fn huber_is_nonnegative_and_zero_only_at_zero(
        delta in prop_oneof![Just(0.0), -1.0f64..-1e-9, 1e-9f64..1.0],
        tau in 0.001f64..0.999) {
        let l = huber_quantile_loss(delta, tau, 0.002);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, delta == 0.0);
    }

    #[test]
    fn linear_regime_asymmetry(delta in 0.0021f64..1.0, tau in 0.01f64..0.99) {
        let r = huber_quantile_loss(delta, tau, 0.002) / huber_quantile_loss(-delta, tau, 0.002);
        prop_assert!((r - tau / (1.0 - tau)).abs() < 1e-9 * (1.0 + r));
    }

    #[test]
    fn bellman_target_is_affine_with_slope_gamma(
        r in -0.01f64..0.0,
        v in proptest::collection::vec(0.0f64..0.5, 1..8),
        dv in 0.0f64..0.2,
    ) {
        let cfg = LossConfig::default();
        let a = bellman_target(r, false, &v, &cfg);
        let shifted: Vec<f64> = v.iter().map(|x| x + dv).collect();
        let b = bellman_target(r, false, &shifted, &cfg);
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((y - x - cfg.gamma * dv).abs() < 1e-12);
        }
    }

    #[test]
    fn targets_stay_in_range(r in -0.5f64..1.5, v in proptest::collection::vec(-1.0f64..2.0, 1..8), term: bool) {
        let cfg = LossConfig::default();
        let t = bellman_target(r, term, &v, &cfg);
        prop_assert_eq!(t.len(), v.len());
        prop_assert!(t.iter().all(|x| (-0.2..=1.0).contains(x)));
    }

    #[test]
    fn td_errors_are_antisymmetric(
        a in proptest::collection::vec(-1.0f64..1.0, 1..6),
        b in proptest::collection::vec(-1.0f64..1.0, 1..6),
    ) {
        let ab = td_errors(&a, &b);
        let ba = td_errors(&b, &a);
        prop_assert_eq!(ab.shape(), (a.len(), b.len()));
        for j in 0..a.len() {
            for i in 0..b.len() {
                prop_assert_eq!(ab.get(j, i), -ba.get(i, j));
            }
        }
    }
}

#[test]
fn sample_taus_mean_is_one_half() {
    let mut rng = rng_from_seed(17);
    let t = sample_taus(100_000, &mut rng).unwrap();
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    assert!((mean - 0.5).abs() < 0.01);
}

/// A free scalar trained on draws of `Z` converges to the tau-quantile.
#[test]
fn single_quantile_minimizer() {
    let cfg = LossConfig::default();
    let mut rng = rng_from_seed(3);
    // Z uniform on {0, 0.2, 0.4, 0.6, 0.8}: quantile at tau is 0.2 * floor(5 tau).
    for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let mut q = 0.5;
        for step in 0..20_000 {
            let z = 0.2 * rng.random_range(0..5) as f64;
            let (_, g) = qr_loss(&[q], &[z], &[tau], &cfg).unwrap();
            let lr = if step < 10_000 { 0.01 } else { 0.002 };
            q -= lr * g[0] / cfg.kappa;
        }
        let want = 0.2 * (5.0 * tau).floor();
        assert!((q - want).abs() < 0.02, "tau {tau}: {q} vs {want}");
    }
}

/// Pairwise errors vanish only when every prediction equals every target,
/// i.e. for a point-mass target.
#[test]
fn qr_loss_is_zero_only_for_matching_point_masses() {
    let cfg = LossConfig::default();
    let taus = [0.1, 0.5, 0.9];
    let (l, g) = qr_loss(&[0.3; 3], &[0.3; 4], &taus, &cfg).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|&x| x == 0.0));
    let spread = [0.1, 0.3, 0.5];
    assert!(qr_loss(&spread, &spread, &taus, &cfg).unwrap().0 > 0.0);
}
