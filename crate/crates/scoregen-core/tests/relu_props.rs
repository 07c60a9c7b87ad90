use proptest::prelude::*;
use scoregen_core::relu::{
    build_mid, build_point_fit_certified, build_square, build_step_certified, identity_gadget, ApproxParams, Layer,
    ReluNetwork, Sparse,
};

/// Dense network with the given layer sizes; all hidden layers are ReLU.
fn dense_net(sizes: &[usize], weights: &[f64]) -> ReluNetwork {
    let mut k = 0;
    let mut next = || {
        k += 1;
        weights[k % weights.len()]
    };
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let data: Vec<f64> = (0..w[0] * w[1]).map(|_| next()).collect();
            let bias: Vec<f64> = (0..w[1]).map(|_| next()).collect();
            Layer::new(Sparse::from_dense(w[1], w[0], &data), bias, i + 2 < sizes.len())
        })
        .collect();
    ReluNetwork::new(sizes[0], layers).unwrap()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-10 * x.abs().max(y.abs()).max(1.0))
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, 17..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compose_is_function_composition(w1 in weights(), w2 in weights(), x in prop::collection::vec(-3.0f64..3.0, 2)) {
        let g = dense_net(&[2, 5, 3], &w1);
        let f = dense_net(&[3, 4, 4, 1], &w2);
        let fg = ReluNetwork::compose(&f, &g).unwrap();
        prop_assert!(close(&fg.eval(&x), &f.eval(&g.eval(&x))));
        prop_assert_eq!(fg.depth(), f.depth() + g.depth());
        prop_assert!(fg.width() <= f.width().max(g.width()));
    }

    #[test]
    fn parallel_and_stack_semantics(w1 in weights(), w2 in weights(), x in prop::collection::vec(-3.0f64..3.0, 4)) {
        let f = dense_net(&[2, 3, 2], &w1);
        let g = dense_net(&[2, 4, 4, 4, 1], &w2);
        let both = ReluNetwork::parallel(&f, &g).unwrap();
        let mut want = f.eval(&x[..2]);
        want.extend(g.eval(&x[..2]));
        prop_assert!(close(&both.eval(&x[..2]), &want));
        prop_assert_eq!(both.depth(), 3);

        let stacked = ReluNetwork::stack_all(&[&f, &g]).unwrap();
        let mut want = f.eval(&x[..2]);
        want.extend(g.eval(&x[2..]));
        prop_assert!(close(&stacked.eval(&x), &want));
    }

    #[test]
    fn affine_wrappers(w in weights(), x in -4.0f64..4.0) {
        let f = dense_net(&[1, 3, 1], &w);
        let wrapped = ReluNetwork::affine_wrap(&[vec![(0, 2.0)]], vec![-1.0], 1, &f).unwrap();
        prop_assert!(close(&wrapped.eval(&[x]), &f.eval(&[2.0 * x - 1.0])));
        let after = ReluNetwork::then_affine(&f, &[vec![(0, -3.0)], vec![(0, 1.0)]], vec![0.5, 0.0]).unwrap();
        let v = f.eval(&[x])[0];
        prop_assert!(close(&after.eval(&[x]), &[-3.0 * v + 0.5, v]));
    }

    #[test]
    fn padding_preserves_values(w in weights(), extra in 0usize..4, x in prop::collection::vec(-3.0f64..3.0, 2)) {
        let f = dense_net(&[2, 3, 2], &w);
        let padded = f.padded_to_depth(f.depth() + extra);
        prop_assert_eq!(padded.depth(), f.depth() + extra);
        prop_assert!(close(&padded.eval(&x), &f.eval(&x)));
    }
}

#[test]
fn mid_matches_sorting() {
    let mid = build_mid();
    assert!(mid.width() <= 14 && mid.depth() <= 2);
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
    };
    for _ in 0..1000 {
        let v = [next(), next(), next()];
        let mut sorted = v;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let got = mid.eval(&v)[0];
        assert!((got - sorted[1]).abs() <= 1e-12 * sorted[1].abs().max(1.0), "{v:?}: {got}");
    }
}

#[test]
fn identity_gadget_on_its_range() {
    let c = 5.0;
    let net = identity_gadget(c);
    for i in 0..1000 {
        let x = -c + 10.0 * i as f64 / 999.0;
        assert_eq!(net.eval(&[x])[0], x);
    }
    assert_eq!(net.eval(&[-7.0])[0], -c);
}

#[test]
fn square_error_shrinks_with_depth() {
    let mut last = f64::INFINITY;
    for l in 1..=5 {
        let (_, cert) = build_square(0.0, 1.0, &ApproxParams::new(3, l, 1, 0.5).unwrap()).unwrap();
        assert!(cert.measured < last, "L = {l}");
        last = cert.measured;
    }
}

#[test]
fn step_and_point_fit_certificates() {
    let params = ApproxParams::new(2, 1, 1, 0.25).unwrap();
    let (_, cert) = build_step_certified(0.0, 1.0, 4, 0.01, &params).unwrap();
    assert!(cert.holds() && cert.measured == 0.0);
    assert_eq!(cert.budget.unwrap().width, 11);

    let values: Vec<f64> = (0..16).map(|i| (-(i as f64) / 16.0).exp()).collect();
    let params = ApproxParams::new(2, 2, 2, 0.0625).unwrap();
    let (net, cert) = build_point_fit_certified(&values, &params).unwrap();
    assert!(cert.holds() && cert.measured <= params.fine_scale());
    let mut state = 7u64;
    for _ in 0..1000 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let x = (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 2.0;
        let v = net.eval(&[x])[0];
        assert!((0.0..=1.0).contains(&v), "{x}: {v}");
    }
}
