use mosaic_core::arch::{build_model, ModelConfig};
use mosaic_core::cost::{count_graph, count_model, count_node, CountingPolicy};
use mosaic_core::graph::Op;
use mosaic_core::oracle;
use mosaic_core::tensor::ConvParams;
use mosaic_core::TensorShape;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

prop_compose! {
    fn conv_spec()(k in prop::sample::select(vec![1usize, 3, 5]), stride in 1usize..=2, dilation in 1usize..=2,
                   mode in 0u8..3, cig in 1usize..=4, cog in 1usize..=4, g in 1usize..=4,
                   h in 1usize..=16, w in 1usize..=16) -> (Op, TensorShape) {
        let (op, c) = match mode {
            0 => (Op::Conv { params: ConvParams::standard(k, stride, cig, cog).with_dilation(dilation), bias: false }, cig),
            1 => {
                let p = ConvParams::standard(k, stride, 2 * cig, 2 * cog).with_dilation(dilation).with_groups(2);
                (Op::Conv { params: p, bias: false }, 2 * cig)
            }
            _ => {
                let c = g * cig;
                (Op::DepthwiseConv { params: ConvParams::depthwise(k, stride, dilation, c) }, c)
            }
        };
        (op, TensorShape::new(h, w, c).unwrap())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn count_equals_instrumented_multiplications((op, s) in conv_spec(), seed in any::<u64>()) {
        let (Op::Conv { params, .. } | Op::DepthwiseConv { params }) = &op else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = oracle::random_tensor(&mut rng, s);
        let k = oracle::random_vec(&mut rng, params.kernel_len());
        let (out, mults) = oracle::conv2d(&x, &k, None, params);
        let (madds, _) = count_node(&op, &[s], out.shape(), CountingPolicy::Standard).unwrap();
        prop_assert_eq!(madds, mults);
    }
}

#[test]
fn doubling_resolution_scales_by_four_except_after_pooling() {
    let cfg = ModelConfig::cityscapes();
    let small =
        count_model(&build_model(&cfg.clone().with_resolution(256, 512)).unwrap(), CountingPolicy::Standard).unwrap();
    let large = count_model(&build_model(&cfg.with_resolution(512, 1024)).unwrap(), CountingPolicy::Standard).unwrap();
    assert_eq!(small.per_node.len(), large.per_node.len());
    let mut fixed = 0;
    for (a, b) in small.per_node.iter().zip(&large.per_node) {
        assert_eq!(a.name, b.name);
        let after_pool = a.name.starts_with("encoder/level_g") && a.name.contains("/mkconv/");
        if after_pool {
            assert_eq!(b.madds, a.madds, "{}", a.name);
            fixed += 1;
        } else {
            assert_eq!(b.madds, 4 * a.madds, "{}", a.name);
        }
        assert_eq!(a.params, b.params);
    }
    assert!(fixed > 0);
}

#[test]
fn totals_are_sums_of_nodes_and_of_stages() {
    for cfg in [ModelConfig::cityscapes(), ModelConfig::ade20k()] {
        for policy in [CountingPolicy::Standard, CountingPolicy::IncludeEverything] {
            let r = count_model(&build_model(&cfg).unwrap(), policy).unwrap();
            assert_eq!(r.total_madds, r.per_node.iter().map(|n| n.madds).sum::<u64>());
            assert_eq!(r.total_params, r.per_node.iter().map(|n| n.params).sum::<u64>());
            let stages = r.stage_subtotals();
            assert_eq!(stages.iter().map(|s| s.1).sum::<u64>(), r.total_madds);
            assert_eq!(stages.iter().map(|s| s.2).sum::<u64>(), r.total_params);
        }
    }
}

#[test]
fn removing_a_level_subtracts_its_subtotal() {
    let mut four = ModelConfig::cityscapes();
    four.encoder.pyramid_bins = vec![1, 4, 8, 16];
    let with = count_model(&build_model(&four).unwrap(), CountingPolicy::Standard).unwrap();
    let without = count_model(&build_model(&ModelConfig::cityscapes()).unwrap(), CountingPolicy::Standard).unwrap();
    let (level, _) = with.subtotal("encoder/level_g1/");
    // the projection also loses enc_filters input channels
    let projection_share = 64 * 128 * 32 * 32;
    assert_eq!(with.total_madds - without.total_madds, level + projection_share);
}

#[test]
fn unconsumed_branch_adds_exactly_its_subtotal() {
    let model = build_model(&ModelConfig::ade20k()).unwrap();
    let base = count_model(&model, CountingPolicy::Standard).unwrap();
    let mut g = model.graph.clone();
    let os8 = g.tap("os8").unwrap();
    let a =
        g.add_node("extra/conv", Op::Conv { params: ConvParams::standard(3, 2, 64, 16), bias: true }, &[os8]).unwrap();
    g.add_node("extra/dw", Op::DepthwiseConv { params: ConvParams::depthwise(5, 1, 1, 16) }, &[a]).unwrap();
    let more = count_graph(&g, model.input_shape(), CountingPolicy::Standard).unwrap();
    let (extra, extra_params) = more.subtotal("extra/");
    assert_eq!(extra, 32 * 32 * 16 * 9 * 64 + 32 * 32 * 16 * 25);
    assert_eq!(more.total_madds - base.total_madds, extra);
    assert_eq!(more.total_params - base.total_params, extra_params);
}

#[test]
fn include_everything_only_adds() {
    let model = build_model(&ModelConfig::ade20k()).unwrap();
    let std = count_model(&model, CountingPolicy::Standard).unwrap();
    let all = count_model(&model, CountingPolicy::IncludeEverything).unwrap();
    for (a, b) in std.per_node.iter().zip(&all.per_node) {
        assert!(b.madds >= a.madds);
        assert_eq!(a.params, b.params);
    }
    assert!(all.total_madds > std.total_madds);
}

#[test]
fn free_operators_cost_nothing() {
    let model = build_model(&ModelConfig::cityscapes()).unwrap();
    let r = count_model(&model, CountingPolicy::Standard).unwrap();
    for (node, cost) in model.graph.nodes().iter().zip(&r.per_node) {
        if !matches!(node.op, Op::Conv { .. } | Op::DepthwiseConv { .. }) {
            assert_eq!(cost.madds, 0, "{}", node.name);
        }
    }
}
