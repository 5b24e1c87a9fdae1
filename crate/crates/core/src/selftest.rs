//! Built-in consistency checks: kernels against loop oracles, shape laws,
//! cost counts against instrumented kernels, and ablation orderings.

use rand::Rng;

use crate::arch::{build_model, ModelConfig};
use crate::cost::{ablation_report, count_node, AblationAxis, CountingPolicy};
use crate::error::Result;
use crate::graph::Op;
use crate::oracle;
use crate::reference::{ordering_violations, PYRAMID_MADDS_B, SKIP_MADDS_B};
use crate::tensor::{self, ConvParams, ResizeMode, TensorShape};

/// Output-shape rule under test; replaceable to check that the shape-law
/// check catches a wrong rule.
pub type ShapeFn = fn(&ConvParams, TensorShape) -> Result<TensorShape>;

#[derive(Clone, Debug)]
pub struct SelftestOptions {
    pub seed: u64,
    pub cases: usize,
    pub policy: CountingPolicy,
    pub shape_fn: ShapeFn,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self { seed: 0x5eed, cases: 25, policy: CountingPolicy::Standard, shape_fn: |p, s| p.output_shape(s) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: std::result::Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult { name, passed: true, detail },
        Err(detail) => CheckResult { name, passed: false, detail },
    }
}

const TOL: f64 = 1e-5;

fn random_params(rng: &mut impl Rng, depthwise: bool) -> ConvParams {
    let k = [1, 3, 5][rng.gen_range(0..3)];
    let stride = rng.gen_range(1..=2);
    let dilation = rng.gen_range(1..=2);
    if depthwise {
        ConvParams::depthwise(k, stride, dilation, rng.gen_range(1..=8))
    } else {
        let groups = [1, 2][rng.gen_range(0..2)];
        let in_c = groups * rng.gen_range(1..=4);
        let out_c = groups * rng.gen_range(1..=4);
        ConvParams::standard(k, stride, in_c, out_c).with_dilation(dilation).with_groups(groups)
    }
}

fn random_input(rng: &mut impl Rng, c: usize) -> TensorShape {
    TensorShape { h: rng.gen_range(1..=12), w: rng.gen_range(1..=12), c }
}

fn kernels_match_oracles(opts: &SelftestOptions) -> std::result::Result<String, String> {
    let mut rng = oracle::rng(opts.seed);
    let mut worst = 0f64;
    for case in 0..opts.cases {
        let p = random_params(&mut rng, case % 2 == 1);
        let s = random_input(&mut rng, p.in_c);
        let x = oracle::random_tensor(&mut rng, s);
        let kern = oracle::random_vec(&mut rng, p.kernel_len());
        let got = if p.is_depthwise() && case % 2 == 1 {
            tensor::depthwise_conv2d(&x, &kern, &p)
        } else {
            tensor::conv2d(&x, &kern, None, &p)
        }
        .map_err(|e| format!("conv case {case}: {e}"))?;
        let (want, _) = oracle::conv2d(&x, &kern, None, &p);
        if got.shape() != want.shape() {
            return Err(format!("conv case {case}: shape {} vs oracle {}", got.shape(), want.shape()));
        }
        worst = worst.max(oracle::max_rel_error(&got, &want));

        let s = random_input(&mut rng, 3);
        let x = oracle::random_tensor(&mut rng, s);
        let (gh, gw) = (rng.gen_range(1..=s.h), rng.gen_range(1..=s.w));
        let got = tensor::avg_pool_grid(&x, gh, gw).map_err(|e| e.to_string())?;
        worst = worst.max(oracle::max_rel_error(&got, &oracle::avg_pool_grid(&x, gh, gw)));

        let (oh, ow) = (rng.gen_range(1..=20), rng.gen_range(1..=20));
        for mode in [ResizeMode::AlignCorners, ResizeMode::HalfPixel] {
            let got = tensor::bilinear_resize(&x, oh, ow, mode).map_err(|e| e.to_string())?;
            worst = worst.max(oracle::max_rel_error(&got, &oracle::bilinear_resize(&x, oh, ow, mode)));
        }
    }
    if worst <= TOL {
        Ok(format!("{} cases, max relative error {worst:.1e}", opts.cases))
    } else {
        Err(format!("max relative error {worst:.1e} exceeds {TOL:.0e}"))
    }
}

fn shape_laws(opts: &SelftestOptions) -> std::result::Result<String, String> {
    let mut rng = oracle::rng(opts.seed ^ 1);
    for case in 0..opts.cases {
        let p = random_params(&mut rng, false);
        let s = random_input(&mut rng, p.in_c);
        let rule = (opts.shape_fn)(&p, s).map_err(|e| format!("case {case}: {e}"))?;
        let law = TensorShape { h: s.h.div_ceil(p.stride), w: s.w.div_ceil(p.stride), c: p.out_c };
        let x = oracle::random_tensor(&mut rng, s);
        let run =
            tensor::conv2d(&x, &vec![0.0; p.kernel_len()], None, &p).map_err(|e| format!("case {case}: {e}"))?.shape();
        if rule != law || run != law {
            return Err(format!("case {case} {p:?} on {s}: rule {rule}, kernel {run}, expected {law}"));
        }
    }
    let model = build_model(&ModelConfig::ade20k()).map_err(|e| e.to_string())?;
    let logits = model.shapes.get(model.logits);
    if logits != TensorShape::new(512, 512, 32).map_err(|e| e.to_string())? {
        return Err(format!("model logits are {logits}, expected 512x512x32"));
    }
    for node in model.graph.nodes() {
        if let Op::Conv { params, .. } | Op::DepthwiseConv { params } = &node.op {
            let input = model.shapes.get(node.inputs[0]);
            let rule = (opts.shape_fn)(params, input).map_err(|e| format!("{}: {e}", node.name))?;
            let inferred = model.shapes.get(model.graph.find(&node.name).expect("listed node"));
            if rule != inferred {
                return Err(format!("{}: rule gives {rule}, graph infers {inferred}", node.name));
            }
        }
    }
    Ok(format!("{} random convs and every model conv", opts.cases))
}

fn cost_matches_instrumented_kernels(opts: &SelftestOptions) -> std::result::Result<String, String> {
    let mut rng = oracle::rng(opts.seed ^ 2);
    for case in 0..opts.cases {
        let depthwise = case % 2 == 1;
        let p = random_params(&mut rng, depthwise);
        let s = random_input(&mut rng, p.in_c);
        let x = oracle::random_tensor(&mut rng, s);
        let (out, mults) = oracle::conv2d(&x, &vec![0.5; p.kernel_len()], None, &p);
        let op = if depthwise { Op::DepthwiseConv { params: p } } else { Op::Conv { params: p, bias: false } };
        let (madds, _) = count_node(&op, &[s], out.shape(), CountingPolicy::Standard).map_err(|e| e.to_string())?;
        if madds != mults {
            return Err(format!("case {case} {p:?}: counted {madds}, kernel performed {mults}"));
        }
    }
    Ok(format!("{} specs, exact", opts.cases))
}

fn ordering(axis: AblationAxis, table: &[(&str, f64)], policy: CountingPolicy) -> std::result::Result<String, String> {
    let variants: Vec<String> = table.iter().map(|(v, _)| v.to_string()).collect();
    let rows = ablation_report(&ModelConfig::cityscapes(), axis, &variants, policy).map_err(|e| e.to_string())?;
    let published: Vec<f64> = table.iter().map(|r| r.1).collect();
    let computed: Vec<u64> = rows.iter().map(|r| r.madds).collect();
    let bad = ordering_violations(&published, &computed);
    if bad.is_empty() {
        Ok(format!("{} variants in published order", rows.len()))
    } else {
        let pairs: Vec<String> = bad.iter().map(|&(i, j)| format!("{} vs {}", variants[i], variants[j])).collect();
        Err(format!("order differs for {}", pairs.join("; ")))
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> Vec<CheckResult> {
    vec![
        check("kernels match loop oracles", kernels_match_oracles(opts)),
        check("same-padding shape law", shape_laws(opts)),
        check("conv cost equals instrumented count", cost_matches_instrumented_kernels(opts)),
        check("pyramid ablation ordering", ordering(AblationAxis::Pyramid, PYRAMID_MADDS_B, opts.policy)),
        check("skip ablation ordering", ordering(AblationAxis::Skips, SKIP_MADDS_B, opts.policy)),
    ]
}
