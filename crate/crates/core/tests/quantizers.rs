use proptest::prelude::*;
use wrpn::quant::{
    binarize_weights_bwn, clip_acts, clip_weights, quantize_acts_wrpn, quantize_weights_dorefa,
    quantize_weights_wrpn, ste_backward, QuantSpec, QuantizedTensor,
};
use wrpn::Tensor;

fn t(v: &[f32]) -> Tensor {
    Tensor::new(vec![v.len()], v.to_vec()).unwrap()
}

/// Nearest grid point by exhaustive search over all codes, ties resolved
/// away from zero. Independent of the library's `round` call.
fn nearest_code(x: f64, lo: i32, hi: i32, levels: f64) -> i32 {
    let mut best = lo;
    let mut best_d = f64::INFINITY;
    for c in lo..=hi {
        let d = (x - f64::from(c) / levels).abs();
        let tie = (d - best_d).abs() < 1e-12;
        if d < best_d - 1e-12 || (tie && c.abs() > best.abs()) {
            best = c;
            best_d = d;
        }
    }
    best
}

proptest! {
    #[test]
    fn weight_codes_are_nearest_grid_point(x in -3.0f32..3.0, k in 2u32..=8) {
        let levels = (1i32 << (k - 1)) - 1;
        let c = clip_weights(&t(&[x]));
        let q = quantize_weights_wrpn(&c, k).unwrap();
        let want = nearest_code(f64::from(c.data()[0]), -levels, levels, f64::from(levels));
        prop_assert_eq!(q.codes()[0], want);
    }

    #[test]
    fn act_codes_are_nearest_grid_point(x in -1.0f32..2.0, k in 1u32..=8) {
        let levels = (1i32 << k) - 1;
        let c = clip_acts(&t(&[x]));
        let q = quantize_acts_wrpn(&c, k).unwrap();
        let want = nearest_code(f64::from(c.data()[0]), 0, levels, f64::from(levels));
        prop_assert_eq!(q.codes()[0], want);
    }

    #[test]
    fn quantized_weights_are_fixed_points(v in prop::collection::vec(-1.0f32..=1.0, 1..64), k in 2u32..=8) {
        let once = quantize_weights_wrpn(&t(&v), k).unwrap();
        let twice = quantize_weights_wrpn(&once.dequantize(), k).unwrap();
        prop_assert_eq!(once.codes(), twice.codes());
    }

    #[test]
    fn act_quantizer_is_monotone(a in 0.0f32..=1.0, b in 0.0f32..=1.0, k in 1u32..=8) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let q = quantize_acts_wrpn(&t(&[lo, hi]), k).unwrap();
        prop_assert!(q.codes()[0] <= q.codes()[1]);
    }

    #[test]
    fn bwn_is_positively_homogeneous(v in prop::collection::vec(-2.0f32..2.0, 1..32), s in 0.5f32..4.0) {
        let a = binarize_weights_bwn(&t(&v)).unwrap();
        let scaled: Vec<f32> = v.iter().map(|x| x * s).collect();
        let b = binarize_weights_bwn(&t(&scaled)).unwrap();
        prop_assert_eq!(a.codes(), b.codes());
        if a.scale() != 1.0 || v.iter().any(|x| *x != 0.0) {
            prop_assert!((b.scale() / a.scale() - s).abs() < 1e-4 * s);
        }
    }

    #[test]
    fn ste_is_upstream_times_indicator(v in prop::collection::vec((-2.0f32..2.0, -5.0f32..5.0), 1..32)) {
        let x = t(&v.iter().map(|p| p.0).collect::<Vec<_>>());
        let g = t(&v.iter().map(|p| p.1).collect::<Vec<_>>());
        let out = ste_backward(&g, &x, QuantSpec::wrpn_weights(4).unwrap()).unwrap();
        for ((&o, &xi), &gi) in out.data().iter().zip(x.data()).zip(g.data()) {
            prop_assert_eq!(o, if (-1.0..=1.0).contains(&xi) { gi } else { 0.0 });
        }
    }

    #[test]
    fn container_round_trip(v in prop::collection::vec(-1.0f32..=1.0, 1..40), k in 2u32..=12) {
        let q = quantize_weights_wrpn(&t(&v), k).unwrap();
        prop_assert_eq!(QuantizedTensor::from_bytes(&q.to_bytes()).unwrap(), q);
    }
}

#[test]
fn dorefa_extremes_reach_grid_ends() {
    for k in 2..=8 {
        for c in [0.1f32, 1.0, 7.5] {
            assert_eq!(
                quantize_weights_dorefa(&t(&[-c, c]), k).unwrap().data(),
                &[-1.0, 1.0]
            );
        }
    }
}

#[test]
fn dorefa_hand_evaluation() {
    // tanh(±1) = ±0.76159; unit values 0, 0.5, 1; k=2 grid thirds; 0.5 rounds up to 2/3.
    let out = quantize_weights_dorefa(&t(&[-1.0, 0.0, 1.0]), 2).unwrap();
    let want = [-1.0f32, 1.0 / 3.0, 1.0];
    for (o, w) in out.data().iter().zip(want) {
        assert!((o - w).abs() <= f32::EPSILON, "{o} vs {w}");
    }
}

#[test]
fn saved_container_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.q");
    let q = quantize_acts_wrpn(&t(&[0.0, 0.3, 0.99, 1.0]), 4).unwrap();
    q.save(&path).unwrap();
    assert_eq!(QuantizedTensor::load(&path).unwrap(), q);
}
