use scoregen_core::field::TrueScore;
use scoregen_core::kde::{weighted_mse, Quadrature};
use scoregen_core::math::linspace;
use scoregen_core::mlp::{dsm_gradient, dsm_loss, dsm_loss_with, features, train_erm, DsmBatch, TrainConfig, TrainableNet};
use scoregen_core::rng;
use scoregen_core::targets::{GaussianMixture, Target};
use scoregen_core::DiffusionSchedule;

fn ms(t: f64) -> (f64, f64) {
    ((-t).exp(), (1.0 - (-2.0 * t).exp()).sqrt())
}

fn setup(n: usize, batch: usize, seed: u64) -> (Vec<Vec<f64>>, DiffusionSchedule, DsmBatch) {
    let target = Target::Mixture(GaussianMixture::symmetric_pair(1.0, 0.2).unwrap());
    let samples = target.sample(n, seed);
    let schedule = DiffusionSchedule::new(0.01, 2.0, 1, 1.0).unwrap();
    let b = DsmBatch::draw(&samples, batch, &schedule, &mut rng::stream(seed, 7)).unwrap();
    (samples, schedule, b)
}

fn sub_batch(b: &DsmBatch, order: &[usize]) -> DsmBatch {
    DsmBatch {
        x0: order.iter().map(|&i| b.x0[i].clone()).collect(),
        t: order.iter().map(|&i| b.t[i]).collect(),
        noise: order.iter().map(|&i| b.noise[i].clone()).collect(),
        weight: order.iter().map(|&i| b.weight[i]).collect(),
    }
}

#[test]
fn conditional_score_has_zero_loss() {
    let (_, _, b) = setup(16, 64, 1);
    let loss = dsm_loss_with(&b, |k, y, t, out| {
        let (m, s) = ms(t);
        out[0] = -(y[0] - m * b.x0[k][0]) / (s * s);
    })
    .unwrap();
    assert!(loss < 1e-18, "{loss}");
}

#[test]
fn zero_field_loss_matches_the_chi_square_moment() {
    let (_, schedule, b) = setup(64, 40_000, 2);
    let terms: Vec<f64> = (0..b.len())
        .map(|k| {
            let (_, s) = ms(b.t[k]);
            b.weight[k] * (b.noise[k][0] / s).powi(2)
        })
        .collect();
    let zero = dsm_loss_with(&b, |_, _, _, out| out[0] = 0.0).unwrap();
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let sd = (terms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
    assert!((zero - mean).abs() <= 1e-12 * mean);
    // int d / sigma_t^2 dt = d [log(e^{2t} - 1) / 2]
    let anti = |t: f64| 0.5 * (2.0 * t).exp_m1().ln();
    let exact = anti(schedule.horizon) - anti(schedule.t0);
    assert!((zero - exact).abs() < 3.0 * sd, "{zero} vs {exact} (sd {sd})");

    let net = TrainableNet::from_params(1, vec![4, 3, 1], vec![0.0; 3 * 5 + 4], 5.0).unwrap();
    assert!((dsm_loss(&net, &b).unwrap() - zero).abs() <= 1e-10 * zero);
}

#[test]
fn loss_is_permutation_invariant() {
    let (_, _, b) = setup(16, 50, 3);
    let net = TrainableNet::new(1, &[8], 5.0, 4).unwrap();
    let order: Vec<usize> = (0..50).rev().collect();
    let (a, c) = (dsm_loss(&net, &b).unwrap(), dsm_loss(&net, &sub_batch(&b, &order)).unwrap());
    assert!((a - c).abs() <= 1e-12 * a);
}

fn check_gradient(net: &TrainableNet, b: &DsmBatch) {
    let (_, grad) = dsm_gradient(net, b).unwrap();
    let h = 1e-5;
    for i in 0..net.params().len() {
        let (mut up, mut down) = (net.clone(), net.clone());
        up.params_mut()[i] += h;
        down.params_mut()[i] -= h;
        let fd = (dsm_loss(&up, b).unwrap() - dsm_loss(&down, b).unwrap()) / (2.0 * h);
        let scale = grad[i].abs().max(fd.abs()).max(1e-6);
        assert!((fd - grad[i]).abs() <= 1e-4 * scale, "param {i}: {fd} vs {}", grad[i]);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let (_, _, b) = setup(16, 12, 5);
    // Nonzero biases keep every hidden unit away from its kink on this batch.
    let mut net = TrainableNet::new(1, &[6, 5], 50.0, 6).unwrap();
    let mut r = rng::stream(99, 0);
    for p in net.params_mut().iter_mut() {
        *p += 0.3 * rng::normal(&mut r);
    }
    check_gradient(&net, &b);

    // The same check with the output clip active.
    let clipped = TrainableNet::from_params(1, net.sizes().to_vec(), net.params().to_vec(), 1e-3).unwrap();
    let g = clipped.raw(&features(&[0.1], 0.5));
    assert!(g[0].abs() > 1e-3);
    check_gradient(&clipped, &b);
}

#[test]
fn dead_units_get_no_gradient() {
    let (_, _, b) = setup(16, 20, 8);
    let sizes = vec![4, 6, 1];
    let net = TrainableNet::from_params(1, sizes, vec![0.0; 6 * 5 + 7], 5.0).unwrap();
    let (_, grad) = dsm_gradient(&net, &b).unwrap();
    assert!(grad[..6 * 4 + 6].iter().all(|g| *g == 0.0));
    // The output bias still learns.
    assert!(grad[6 * 5 + 6] != 0.0);
}

#[test]
fn duplicated_batch_has_the_same_gradient() {
    let (_, _, b) = setup(16, 30, 9);
    let net = TrainableNet::new(1, &[8, 8], 5.0, 10).unwrap();
    let order: Vec<usize> = (0..30).chain(0..30).collect();
    let (la, ga) = dsm_gradient(&net, &b).unwrap();
    let (lb, gb) = dsm_gradient(&net, &sub_batch(&b, &order)).unwrap();
    assert!((la - lb).abs() <= 1e-12 * la);
    for (x, y) in ga.iter().zip(&gb) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-12));
    }
}

#[test]
fn empty_batch_is_rejected() {
    let net = TrainableNet::new(1, &[4], 5.0, 0).unwrap();
    let empty = DsmBatch { x0: vec![], t: vec![], noise: vec![], weight: vec![] };
    assert!(dsm_loss(&net, &empty).is_err());
    assert!(dsm_loss_with(&empty, |_, _, _, _| {}).is_err());
}

#[test]
fn config_and_sample_checks() {
    let (samples, schedule, _) = setup(16, 1, 0);
    assert!(train_erm(&samples[..1], &TrainConfig::default(), &schedule).is_err());
    for bad in [
        TrainConfig { step_size: 0.0, ..TrainConfig::default() },
        TrainConfig { momentum: 1.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { c_clip: -1.0, ..TrainConfig::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

fn short_run(seed: u64) -> (Vec<Vec<f64>>, DiffusionSchedule, TrainConfig) {
    let target = Target::Mixture(GaussianMixture::isotropic(1, 1.0).unwrap());
    let samples = target.sample(128, seed);
    let schedule = DiffusionSchedule::new(0.05, 128f64.ln(), 1, 1.0).unwrap();
    let cfg = TrainConfig { hidden: vec![16, 16], iterations: 1500, seed, ..TrainConfig::default() };
    (samples, schedule, cfg)
}

#[test]
fn training_is_deterministic_and_clipped() {
    let (samples, schedule, cfg) = short_run(3);
    let cfg = TrainConfig { iterations: 300, ..cfg };
    let a = train_erm(&samples, &cfg, &schedule).unwrap();
    let b = train_erm(&samples, &cfg, &schedule).unwrap();
    assert_eq!(a.net.params(), b.net.params());
    assert_eq!(a.curve, b.curve);

    let bound = cfg.c_clip;
    let root_log_n = (samples.len() as f64).ln().sqrt();
    for t in [schedule.t0, 0.2, 1.0, schedule.horizon] {
        let (_, s) = ms(t);
        for y in linspace(-30.0, 30.0, 121) {
            let phi = a.net.score(&[y], t)[0];
            assert!(phi.abs() * s / root_log_n <= bound * (1.0 + 1e-12));
        }
    }
}

#[test]
fn training_lowers_the_score_error() {
    let (samples, schedule, cfg) = short_run(4);
    let target = Target::Mixture(GaussianMixture::isotropic(1, 1.0).unwrap());
    let out = train_erm(&samples, &cfg, &schedule).unwrap();
    let quad = Quadrature::Grid { points: 401, half_widths: 8.0 };
    let truth = TrueScore(&target);
    let err = |net: &TrainableNet| {
        [0.1, 0.5, 2.0].iter().map(|&t| weighted_mse(net, &truth, t, &target, quad).unwrap().value).sum::<f64>()
    };
    let (before, after) = (err(&out.initial), err(&out.net));
    assert!(after < before, "{before} -> {after}");
}
