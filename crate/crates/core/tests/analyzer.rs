use proptest::prelude::*;
use wrpn::analyzer::{
    builtin, builtin_names, compute_cost, cost_table, memory_footprint, ops_ratio, reproduce,
    widen_descriptor, CostModel, LayerBits, LayerKind, LayerSpec, NetworkDescriptor, Phase,
    PrecisionPolicy, IMAGENET_NETWORKS, STANDARD_GRID,
};

fn trainable_fma(desc: &NetworkDescriptor) -> Vec<(String, u64)> {
    desc.resolve()
        .unwrap()
        .into_iter()
        .filter(|l| l.kind.is_trainable())
        .map(|l| (l.id, l.fma))
        .collect()
}

#[test]
fn alexnet_widening_grows_layers_two_four_two() {
    let base = builtin("alexnet").unwrap();
    let wide = widen_descriptor(&base, 2.0).unwrap();
    let (b, w) = (trainable_fma(&base), trainable_fma(&wide));
    let last = b.len() - 1;
    for (i, ((id, fb), (_, fw))) in b.iter().zip(&w).enumerate() {
        let want = if i == 0 || i == last { 2 } else { 4 };
        assert_eq!(*fw, want * fb, "{id}");
    }
    let r = ops_ratio(&base, 2.0).unwrap();
    assert!((3.7..=4.0).contains(&r), "{r}");
}

#[test]
fn widening_by_one_is_identity() {
    for name in builtin_names() {
        let d = builtin(name).unwrap();
        assert_eq!(
            widen_descriptor(&d, 1.0).unwrap().resolve().unwrap(),
            d.resolve().unwrap()
        );
    }
}

#[test]
fn fp32_policy_is_its_own_baseline() {
    for name in IMAGENET_NETWORKS {
        let d = builtin(name).unwrap();
        let c = compute_cost(&d, &PrecisionPolicy::full_precision()).unwrap();
        assert_eq!(c.ratio_to(&c), 1.0);
        assert_eq!(c.total_bit_cost, u128::from(c.total_fma) * 64);
    }
}

#[test]
fn alexnet_grid_spot_values() {
    let t = cost_table(
        &builtin("alexnet").unwrap(),
        &[2.0],
        &STANDARD_GRID,
        CostModel::Uniform,
    )
    .unwrap();
    assert!((t.cell(2.0, 4, 4).unwrap() - 0.5).abs() <= 0.05);
    assert!((t.cell(2.0, 32, 8).unwrap() - 2.4).abs() <= 0.05);
    assert!(t.cell(3.0, 4, 4).is_none());
    let csv = t.to_csv();
    assert!(csv.ends_with('\n') && !csv.contains('\r'));
    assert_eq!(csv.lines().count(), 1 + STANDARD_GRID.len());
}

#[test]
fn published_cells_pass_only_under_uniform_accounting() {
    assert!(reproduce(CostModel::Uniform).unwrap().all_passed());
    assert!(!reproduce(CostModel::ExemptFirstLast).unwrap().all_passed());
}

#[test]
fn activation_fraction_rises_with_batch_everywhere() {
    for name in builtin_names() {
        let d = builtin(name).unwrap();
        for phase in [Phase::Training, Phase::Inference] {
            let f: Vec<f64> = [1, 2, 8, 32, 128, 256, 1024]
                .iter()
                .map(|&b| {
                    memory_footprint(&d, b, phase, 4.0, 4.0)
                        .unwrap()
                        .activation_fraction()
                })
                .collect();
            assert!(f.windows(2).all(|w| w[0] < w[1]), "{name} {phase:?}: {f:?}");
        }
    }
    let r = memory_footprint(
        &builtin("resnet50").unwrap(),
        128,
        Phase::Training,
        4.0,
        4.0,
    )
    .unwrap();
    assert!(r.activation_fraction() >= 0.95);
}

#[test]
fn toy_footprint_by_hand() {
    // input 4 -> fc 3 -> relu -> fc 2, batch 4, FP32.
    let d = NetworkDescriptor::new(
        "toy",
        [4, 1, 1],
        vec![
            LayerSpec::fc("fc0", 3),
            LayerSpec::new("relu0", LayerKind::Relu),
            LayerSpec::fc("fc1", 2),
        ],
    );
    let t = memory_footprint(&d, 4, Phase::Training, 4.0, 4.0).unwrap();
    // acts: (4 + 3 + 3 + 2) · 4 · 4 = 192; weights: (12 + 6) · 4 = 72
    // max δZ = max OFM = 3·4·4 = 48; max δX = max IFM = 4·4·4 = 64
    assert_eq!(t.total(), 376.0);
    assert_eq!(t.activation_fraction(), 304.0 / 376.0);
    let i = memory_footprint(&d, 4, Phase::Inference, 4.0, 4.0).unwrap();
    assert_eq!(i.total(), 64.0 + 48.0 + 72.0);
    assert!(memory_footprint(&d, 0, Phase::Training, 4.0, 4.0).is_err());
}

#[test]
fn descriptor_json_round_trip() {
    for name in builtin_names() {
        let d = builtin(name).unwrap();
        assert_eq!(NetworkDescriptor::from_json(&d.to_json()).unwrap(), d);
    }
    assert!(NetworkDescriptor::from_json(
        r#"{"format":"other/9","name":"x","input":[1,1,1],"layers":[]}"#
    )
    .is_err());
}

proptest! {
    #[test]
    fn lower_precision_never_costs_more(ai in 0usize..5, wi in 0usize..5, da in 0usize..5, dw in 0usize..5) {
        let d = builtin("resnet34").unwrap();
        let (a_hi, a_lo) = (STANDARD_GRID[ai.min(da)], STANDARD_GRID[ai.max(da)]);
        let (w_hi, w_lo) = (STANDARD_GRID[wi.min(dw)], STANDARD_GRID[wi.max(dw)]);
        let hi = compute_cost(&d, &PrecisionPolicy::uniform(LayerBits::new(a_hi, w_hi).unwrap())).unwrap();
        let lo = compute_cost(&d, &PrecisionPolicy::uniform(LayerBits::new(a_lo, w_lo).unwrap())).unwrap();
        prop_assert!(lo.total_bit_cost <= hi.total_bit_cost);
    }

    #[test]
    fn footprint_scales_linearly_in_byte_width(b in 1usize..64, s in 1u32..5) {
        let d = builtin("alexnet").unwrap();
        let one = memory_footprint(&d, b, Phase::Training, 1.0, 1.0).unwrap();
        let k = f64::from(s);
        let many = memory_footprint(&d, b, Phase::Training, k, k).unwrap();
        prop_assert!((many.total() - k * one.total()).abs() <= 1e-9 * many.total());
        prop_assert!((many.activation_fraction() - one.activation_fraction()).abs() < 1e-12);
    }
}
