use scoregen_core::math::linspace;
use scoregen_core::relu::*;

fn p(n: usize, l: usize, s: usize) -> ApproxParams {
    ApproxParams::new(n, l, s, 0.5).unwrap()
}

#[test]
fn square_unit_interval_meets_quarter_power() {
    let (net, cert) = build_square(0.0, 1.0, &p(4, 3, 1)).unwrap();
    assert!(cert.measured <= 0.015625);
    assert_eq!(cert.claimed, 0.015625);
    assert!(net.width() <= 13 && net.depth() <= 3);
    assert_eq!(net.eval(&[0.0])[0], 0.0);
    assert!((net.eval(&[1.0])[0] - 1.0).abs() < 1e-15);
}

#[test]
fn square_on_shifted_interval() {
    let (_, cert) = build_square(-2.0, 3.0, &p(4, 3, 1)).unwrap();
    assert!(cert.measured <= 25.0 / 64.0);
    assert_eq!(cert.grid_points, 10_000);
}

#[test]
fn product_unit_square_and_zero_factor() {
    let (net, cert) = build_product(0.0, 1.0, 0.0, 1.0, &p(4, 3, 1)).unwrap();
    assert!(cert.measured <= 0.09375);
    assert!(net.width() <= 37 && net.depth() <= 3);
    for x in linspace(0.0, 1.0, 101) {
        assert!(net.eval(&[x, 0.0])[0].abs() <= cert.claimed);
    }
    let (_, cert) = build_product(-1.0, 1.0, -1.0, 1.0, &p(4, 3, 1)).unwrap();
    assert_eq!(cert.grid_points, 201 * 201);
}

#[test]
fn monomial_and_polynomial() {
    let (net, cert) = build_monomial(1, 2.0, &p(3, 1, 3)).unwrap();
    assert_eq!(cert.measured, 0.0);
    assert_eq!(net.depth(), 0);
    let (net, cert) = build_monomial(3, 1.0, &p(3, 1, 3)).unwrap();
    assert!(cert.claimed <= 30.0 * 2.0 * 4f64.powi(-21) * 1.0000001);
    assert!(net.width() <= 9 * 4 + 2 && net.depth() <= 42);
    let (_, cert) = build_polynomial(&[2, 1], 2.0, &p(3, 1, 3)).unwrap();
    assert_eq!(cert.grid_points, 244 * 244);
}

#[test]
fn step_examples() {
    let net = build_step(0.0, 1.0, 4, 0.01, &p(2, 1, 1)).unwrap();
    assert_eq!(net.eval(&[0.10])[0], 0.0);
    assert_eq!(net.eval(&[0.30])[0], 1.0);
    assert_eq!(net.eval(&[0.99])[0], 3.0);
    for k in 0..4 {
        assert_eq!(net.eval(&[k as f64 / 4.0])[0], k as f64);
    }
    let gap = net.eval(&[0.245])[0];
    assert!((0.0..=1.0).contains(&gap));
    assert!(build_step(0.0, 1.0, 4, 0.2, &p(2, 1, 1)).is_err());
}

#[test]
fn point_fit_examples() {
    let params = p(2, 2, 1);
    let net = build_point_fit(&[0.5; 16], &params).unwrap();
    for i in 0..16 {
        assert_eq!(net.eval(&[i as f64])[0], 0.5);
    }
    let vals: Vec<f64> = (0..16).map(|i| (-(i as f64) / 16.0).exp()).collect();
    let net = build_point_fit(&vals, &params).unwrap();
    for (i, v) in vals.iter().enumerate() {
        assert!((net.eval(&[i as f64])[0] - v).abs() <= params.fine_scale());
    }
}

#[test]
fn exp_example() {
    let params = p(4, 2, 2);
    let (net, cert) = build_exp(4.0, &params).unwrap();
    assert!((cert.claimed - 110.0 / 4096.0).abs() < 1e-12);
    assert!(cert.measured <= cert.claimed);
    assert!((net.eval(&[0.0])[0] - 1.0).abs() <= cert.claimed);
    eprintln!("exp measured {} width {} depth {} params {}", cert.measured, net.width(), net.depth(), net.param_count());
}

#[test]
fn reciprocal_and_root() {
    let (net, cert) = build_reciprocal(0.01, 1).unwrap();
    assert!((net.eval(&[1.0])[0] - 1.0).abs() <= 0.01);
    eprintln!("rec measured {} width {} depth {}", cert.measured, net.width(), net.depth());
    let (net, cert) = build_root(3, 8.0, &p(4, 2, 2)).unwrap();
    assert!(cert.measured <= 95.0 * 2.0 / 4096.0);
    let (net2, _) = build_root(2, 4.0, &p(4, 2, 2)).unwrap();
    assert!((net2.eval(&[1.0])[0] - 1.0).abs() <= 95.0 * 2.0 / 4096.0);
    eprintln!("root width {} depth {}", net.width(), net.depth());
}

#[test]
fn schedule_nets_examples() {
    let params = ApproxParams::new(4, 2, 2, 1.0 / 64.0).unwrap();
    let nets = build_schedule_nets(&params, 0.1, 1).unwrap();
    assert!((nets.m.eval(&[0.0])[0] - 1.0).abs() <= nets.certificates[0].claimed);
    let t = 0.5 * std::f64::consts::LN_2;
    let v = nets.inv_sigma2k.eval(&[t])[0];
    assert!((v - 2.0).abs() <= nets.certificates[2].claimed, "{v}");
    let far = nets.m.eval(&[40.0])[0];
    assert!(far.abs() <= params.eps.powi(2) * 1.01, "{far}");
    for c in &nets.certificates {
        eprintln!("{} measured {:e} claimed {:e}", c.builder, c.measured, c.claimed);
    }
}

mod composed {
    use super::*;
    use scoregen_core::DiffusionSchedule;
    use std::time::Instant;

    #[test]
    fn kde_net_single_sample() {
        let params = ApproxParams::tight(4, 2, 2).unwrap();
        let schedule = DiffusionSchedule::new(0.1, 5.0, 1, 1.0).unwrap();
        let start = Instant::now();
        let (net, cert) = build_kde_net(&[vec![0.0]], &params, &schedule).unwrap();
        eprintln!(
            "kde n=1 measured {:e} width {} depth {} params {} in {:?}",
            cert.measured,
            net.width(),
            net.depth(),
            net.param_count(),
            start.elapsed()
        );
        assert_eq!(net.eval(&[50.0, 0.5])[0], 0.0);
    }

    #[test]
    fn score_net_sixteen_samples() {
        let params = ApproxParams::tight(4, 2, 2).unwrap();
        let schedule = DiffusionSchedule::new(0.1, 5.0, 1, 1.0).unwrap();
        let samples: Vec<Vec<f64>> = (0..16).map(|i| vec![-1.5 + 0.2 * i as f64]).collect();
        let start = Instant::now();
        let (net, cert) = build_score_net(&samples, &params, &schedule).unwrap();
        eprintln!(
            "score n=16 measured {:e} notes {:?} width {} depth {} params {} in {:?}",
            cert.measured,
            cert.notes,
            net.width(),
            net.depth(),
            net.param_count(),
            start.elapsed()
        );
    }
}
