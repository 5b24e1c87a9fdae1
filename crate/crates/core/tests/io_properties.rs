use mosaic_core::arch::{build_model, ModelConfig};
use mosaic_core::graph::Op;
use mosaic_core::io::{
    compute_miou, decode_pgm, decode_ppm, denormalize_pixel, encode_pgm, init_weights, load_weights, normalize_pixel,
    save_weights, WeightEntry, WeightStore,
};
use mosaic_core::oracle;
use mosaic_core::tensor::LabelMap;
use mosaic_core::Error;
use proptest::prelude::*;

fn store_strategy() -> impl Strategy<Value = WeightStore> {
    prop::collection::btree_map(
        "[a-z/_:]{1,24}",
        prop::collection::vec(1usize..=4, 0..=4).prop_flat_map(|dims| {
            let len: usize = dims.iter().product();
            (Just(dims), prop::collection::vec(any::<f32>(), len))
        }),
        0..8,
    )
    .prop_map(|m| {
        let mut s = WeightStore::new();
        for (name, (dims, data)) in m {
            s.insert(name, WeightEntry::new(dims, data).unwrap()).unwrap();
        }
        s
    })
}

fn bits(s: &WeightStore) -> Vec<(String, Vec<usize>, Vec<u32>)> {
    s.iter().map(|(n, e)| (n.to_string(), e.dims().to_vec(), e.data().iter().map(|v| v.to_bits()).collect())).collect()
}

fn label_pair() -> impl Strategy<Value = (LabelMap, LabelMap, usize)> {
    (1usize..=8, 1usize..=32, 1usize..=32).prop_flat_map(|(k, h, w)| {
        let labels = prop::collection::vec(0..k as u32, h * w);
        (labels.clone(), labels)
            .prop_map(move |(a, b)| (LabelMap::new(h, w, a).unwrap(), LabelMap::new(h, w, b).unwrap(), k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn weight_bytes_round_trip_bitwise(store in store_strategy()) {
        let back = WeightStore::from_bytes(&store.to_bytes()).unwrap();
        prop_assert_eq!(bits(&back), bits(&store));
    }

    #[test]
    fn truncation_never_panics(store in store_strategy(), cut in any::<prop::sample::Index>()) {
        let bytes = store.to_bytes();
        let n = cut.index(bytes.len());
        let rejected = matches!(WeightStore::from_bytes(&bytes[..n]), Err(Error::Format { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn miou_is_symmetric_and_bounded((a, b, k) in label_pair()) {
        let ab = compute_miou(&a, &b, k, None).unwrap();
        let ba = compute_miou(&b, &a, k, None).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 1.0, a == b);
        prop_assert!((ab - oracle::miou_confusion(&a, &b, k, None)).abs() < 1e-12);
    }

    #[test]
    fn miou_is_one_when_only_ignored_pixels_differ((a, b, k) in label_pair()) {
        let ignore = k as u32;
        let gt: Vec<u32> = a.labels().iter().zip(b.labels()).map(|(&x, &y)| if x == y { x } else { ignore }).collect();
        let gt = LabelMap::new(a.height(), a.width(), gt).unwrap();
        prop_assert_eq!(compute_miou(&a, &gt, k, Some(ignore)).unwrap(), 1.0);
    }

    #[test]
    fn label_maps_round_trip_through_pgm((a, _b, _k) in label_pair()) {
        prop_assert_eq!(decode_pgm(&encode_pgm(&a).unwrap()).unwrap(), a);
    }
}

#[test]
fn file_round_trip_and_duplicates() {
    let model = build_model(&ModelConfig::ade20k().with_resolution(256, 256)).unwrap();
    let store = init_weights(&model.graph, 42);
    let dir = tempdir();
    let path = dir.join("w.mosw");
    save_weights(&store, &path).unwrap();
    assert_eq!(load_weights(&path).unwrap(), store);
    store.validate_for(&model.graph).unwrap();

    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"MOSW");
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&2u32.to_le_bytes());
    for _ in 0..2 {
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(b'a');
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0f32.to_le_bytes());
    }
    assert!(matches!(WeightStore::from_bytes(&bytes), Err(Error::Weights(_))));
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mosaic-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn init_is_seeded() {
    let model = build_model(&ModelConfig::ade20k()).unwrap();
    let a = init_weights(&model.graph, 42);
    assert_eq!(a, init_weights(&model.graph, 42));
    assert_ne!(init_weights(&model.graph, 1), init_weights(&model.graph, 2));
}

#[test]
fn kernel_variance_is_one_over_fan_in() {
    let model = build_model(&ModelConfig::cityscapes()).unwrap();
    let store = init_weights(&model.graph, 42);
    let mut checked = 0;
    for node in model.graph.nodes() {
        let fan_in = match &node.op {
            Op::Conv { params, .. } | Op::DepthwiseConv { params } => {
                params.kernel_h * params.kernel_w * params.in_per_group()
            }
            _ => continue,
        };
        let e = store.get(&format!("{}:kernel", node.name)).unwrap();
        if e.data().len() < 10_000 {
            continue;
        }
        let n = e.data().len() as f64;
        let mean = e.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = e.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let want = 1.0 / fan_in as f64;
        assert!((var - want).abs() <= 0.2 * want, "{}: variance {var} vs {want}", node.name);
        assert!(mean.abs() < 0.05 * want.sqrt() * 10.0);
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn image_scaling_endpoints_and_inverse() {
    let mut black = b"P6\n2 2\n255\n".to_vec();
    black.extend([0u8; 12]);
    assert!(decode_ppm(&black).unwrap().data().iter().all(|&v| v == -1.0));
    let mut white = b"P6\n2 2\n255\n".to_vec();
    white.extend([255u8; 12]);
    assert!(decode_ppm(&white).unwrap().data().iter().all(|&v| v == 1.0));
    for v in 0..=255u8 {
        let x = normalize_pixel(v);
        let exact = v as f64 / 127.5 - 1.0;
        assert!((x as f64 - exact).abs() <= f32::EPSILON as f64);
        assert_eq!(denormalize_pixel(x), v);
    }
}

#[test]
fn miou_thousand_random_pairs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let k = rng.gen_range(1..=8);
        let (h, w) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let mut labels = || (0..h * w).map(|_| rng.gen_range(0..k as u32)).collect::<Vec<_>>();
        let a = LabelMap::new(h, w, labels()).unwrap();
        let b = LabelMap::new(h, w, labels()).unwrap();
        let got = compute_miou(&a, &b, k, None).unwrap();
        assert!((got - oracle::miou_confusion(&a, &b, k, None)).abs() < 1e-12);
    }
}
