use proptest::prelude::*;
use scoregen_core::schedule::{early_stop_time, m, regularizer, sigma, time_for_sigma};
use scoregen_core::DiffusionSchedule;

#[test]
fn mean_scale_values() {
    assert_eq!(m(0.0).unwrap(), 1.0);
    assert!((m(0.5).unwrap() - 0.606_530_659_7).abs() < 1e-10);
    assert!(m(50.0).unwrap() < 1e-20);
}

#[test]
fn noise_scale_values() {
    assert_eq!(sigma(0.0).unwrap(), 0.0);
    // sqrt(1 - e^{-1})
    assert!((sigma(0.5).unwrap() - 0.795_060_097_6).abs() < 1e-9);
    let small = sigma(1e-8).unwrap();
    assert!((small / (2e-8f64).sqrt() - 1.0).abs() < 1e-7);
}

#[test]
fn negative_time_is_rejected() {
    assert!(m(-1e-3).is_err());
    assert!(sigma(-1.0).is_err());
}

#[test]
fn regularizer_values() {
    // sigma^2 = 1/(2 pi) makes the Gaussian normalizer one.
    let t = time_for_sigma((1.0 / (2.0 * std::f64::consts::PI)).sqrt()).unwrap();
    let rho = regularizer(1, t, 1).unwrap();
    assert!((rho - (-1.0f64).exp()).abs() < 1e-12);

    // sigma_t -> 1 as t grows; (2 pi)^{-1} e^{-1} / 100.
    let rho = regularizer(100, 40.0, 2).unwrap();
    assert!((rho - 5.8550e-4).abs() < 1e-7, "{rho}");
}

#[test]
fn early_stop_values() {
    // 2^{-20/3}
    assert!((early_stop_time(1024, 1.0, 1).unwrap() - 0.009_843_133_202_303_695).abs() < 1e-15);
    assert_eq!(early_stop_time(1, 2.0, 1).unwrap(), 1.0);
    assert!((early_stop_time(1_000_000, 2.0, 2).unwrap() - 0.01).abs() < 1e-12);
    assert!(early_stop_time(10, 3.0, 1).is_err());
}

#[test]
fn schedule_rejects_bad_intervals() {
    assert!(DiffusionSchedule::new(0.0, 1.0, 1, 1.0).is_err());
    assert!(DiffusionSchedule::new(2.0, 1.0, 1, 1.0).is_err());
    assert!(DiffusionSchedule::new(0.1, f64::INFINITY, 1, 1.0).is_err());
    assert!(DiffusionSchedule::new(0.1, 1.0, 0, 1.0).is_err());
}

proptest! {
    #[test]
    fn variance_identity(t in 1e-6f64..50.0) {
        let (a, b) = (m(t).unwrap(), sigma(t).unwrap());
        prop_assert!((a * a + b * b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_time(t in 1e-6f64..20.0, dt in 1e-4f64..1.0) {
        prop_assert!(m(t + dt).unwrap() < m(t).unwrap());
        // sigma_t rounds to 1 once exp(-2t) drops below half an ulp.
        prop_assert!(sigma(t + dt).unwrap() >= sigma(t).unwrap());
        if t < 8.0 {
            prop_assert!(sigma(t + dt).unwrap() > sigma(t).unwrap());
        }
    }

    #[test]
    fn regularizer_decreases(n in 1usize..100_000, t in 1e-4f64..10.0, d in 1usize..4) {
        let r = regularizer(n, t, d).unwrap();
        prop_assert!(regularizer(n + 1, t, d).unwrap() < r);
        prop_assert!(regularizer(n, t * 1.1, d).unwrap() < r);
    }

    #[test]
    fn regularizer_is_admissible(n in 1usize..100_000, t in 1e-4f64..10.0, d in 1usize..4) {
        let s2 = sigma(t).unwrap().powi(2);
        let cap = (2.0 * std::f64::consts::PI * s2).powf(-(d as f64) / 2.0) * (-0.5f64).exp();
        prop_assert!(regularizer(n, t, d).unwrap() <= cap);
    }
}
