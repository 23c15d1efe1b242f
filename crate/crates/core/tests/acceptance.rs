//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::ops::ControlFlow;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use sitta::augmentor::{augment_single_to_multi, augment_single_to_single, AugJob, LabelPolicy, Mode};
use sitta::downstream::{run_bench, translate_minority, BenchProtocol, ClassifierSpec, Composition, LongTailSetup};
use sitta::io::{render_image, save_image, write_checkpoint, ImageSet, ShapeKind, TextureKind};
use sitta::losses::{
    loss_adversarial, loss_cycle, loss_identity, loss_kl, loss_perceptual, loss_total,
    FeaturePyramid, GeneratorTerms, LossWeights, Side,
};
use sitta::metrics::{channel_histogram_distance, embed_for_fid, frechet_distance, GaussianStats};
use sitta::model::{DomainId, ModelConfig, SittaModel};
use sitta::nn::Graph;
use sitta::pono::{extract_moments, inject_moments, pono_normalize, PONO_EPS};
use sitta::tensor::grad_check;
use sitta::trainer::{train_pair, train_pair_observed, TrainConfig, Trainer};
use sitta::{PadMode, Rng, Tape, Tensor, Var};

// pinned tolerances
const GRAD_REL_TOL: f64 = 1e-3;
const GRAD_EPS: f64 = 1e-6;
const GRAD_SEEDS: u64 = 5;
const PONO_ROUNDTRIP_TOL: f64 = 1e-5;
const PONO_MEAN_TOL: f64 = 1e-5;
const PONO_STD_TOL: f64 = 1e-3;
const FRECHET_TOL: f64 = 1e-9;
const SELF_REC_ITERS: usize = 300;
const SELF_REC_RATIO: f64 = 0.20;
const TRANSFER_ITERS: usize = 800;
const TRANSFER_HELD_OUT: u64 = 10;
const TRANSFER_MIN_WINS: usize = 8;
const HISTOGRAM_BINS: usize = 32;
const BENCH_MARGIN: f64 = 0.05;
const STEP_BOUND_S: f64 = 2.0;
const TRANSLATE_BOUND_S: f64 = 0.5;
const SEEDS: [u64; 3] = [0, 1, 2];

type Outcome = Result<String, String>;
/// Name, time budget, check.
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 gradient suite", Duration::from_secs(60), ac1_gradients),
        ("AC2 positional normalization", Duration::from_secs(10), ac2_pono),
        ("AC3 Frechet oracle", Duration::from_secs(10), ac3_frechet),
        ("AC4 self-reconstruction", Duration::from_secs(15 * 60), ac4_self_reconstruction),
        ("AC5 texture transfer", Duration::from_secs(30 * 60), ac5_texture_transfer),
        ("AC6 workflow cardinality", Duration::from_secs(120), ac6_cardinality),
        ("AC7 downstream direction", Duration::from_secs(30 * 60), ac7_downstream),
        ("AC8 determinism", Duration::from_secs(5 * 60), ac8_determinism),
        ("AC9 throughput", Duration::from_secs(120), ac9_throughput),
    ];
    // optional filters, e.g. `cargo test --test acceptance -- AC2 AC3`
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.starts_with(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = run();
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > budget => Err(format!("{msg}; took {:.1}s, budget {}s", took.as_secs_f64(), budget.as_secs())),
            o => o,
        };
        match outcome {
            Ok(msg) => println!("PASS {name}: {msg} [{:.1}s]", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg} [{:.1}s]", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- AC1

type Build = Box<dyn Fn(&mut Tape<f64>, Var, &[Tensor<f64>]) -> sitta::Result<Var>>;

struct GradCase {
    name: &'static str,
    input: [usize; 4],
    /// Shapes of the constant operands handed to `build`.
    consts: Vec<[usize; 4]>,
    /// Maps a standard normal sample onto the op's domain.
    domain: fn(f64) -> f64,
    build: Build,
}

fn normal(x: f64) -> f64 {
    x
}
fn positive(x: f64) -> f64 {
    0.5 + x.abs()
}

/// Weighted sum with fixed random weights, so every output element gets a
/// distinct upstream gradient.
fn project(t: &mut Tape<f64>, y: Var, seed: u64) -> sitta::Result<Var> {
    let mut rng = Rng::new(seed ^ 0x9e37);
    let w = t.constant(Tensor::randn(t.shape(y), 1.0, &mut rng));
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

fn case(
    name: &'static str,
    input: [usize; 4],
    consts: Vec<[usize; 4]>,
    domain: fn(f64) -> f64,
    build: impl Fn(&mut Tape<f64>, Var, &[Var]) -> sitta::Result<Var> + 'static,
) -> GradCase {
    GradCase {
        name,
        input,
        consts,
        domain,
        build: Box::new(move |t, x, cs| {
            let vars: Vec<Var> = cs.iter().map(|c| t.constant(c.clone())).collect();
            let y = build(t, x, &vars)?;
            if t.shape(y).numel() == 1 {
                Ok(y)
            } else {
                project(t, y, 1)
            }
        }),
    }
}

fn grad_cases() -> Vec<GradCase> {
    let img = [2, 3, 5, 5];
    let chan = [1, 3, 1, 1];
    let mut v = vec![
        case("add", img, vec![img], normal, |t, x, c| t.add(x, c[0])),
        case("add/broadcast rhs", chan, vec![img], normal, move |t, x, c| {
            let xb = t.broadcast(x, img)?;
            t.add(c[0], xb)
        }),
        case("sub", img, vec![img], normal, |t, x, c| t.sub(c[0], x)),
        case("mul", img, vec![img], normal, |t, x, c| t.mul(x, c[0])),
        case("mul/broadcast", [2, 1, 5, 5], vec![img], normal, move |t, x, c| {
            let xb = t.broadcast(x, img)?;
            t.mul(c[0], xb)
        }),
        case("div/numerator", img, vec![img], normal, |t, x, c| {
            let d = t.square(c[0]);
            let d = t.add_scalar(d, 0.5);
            t.div(x, d)
        }),
        case("div/denominator", img, vec![img], positive, |t, x, c| t.div(c[0], x)),
        case("add_scalar", img, vec![], normal, |t, x, _| Ok(t.add_scalar(x, 0.7))),
        case("mul_scalar", img, vec![], normal, |t, x, _| Ok(t.mul_scalar(x, -1.3))),
        case("neg", img, vec![], normal, |t, x, _| Ok(t.neg(x))),
        case("sqrt", img, vec![], positive, |t, x, _| Ok(t.sqrt(x))),
        case("square", img, vec![], normal, |t, x, _| Ok(t.square(x))),
        case("abs", img, vec![], normal, |t, x, _| Ok(t.abs(x))),
        case("relu", img, vec![], normal, |t, x, _| Ok(t.relu(x))),
        case("leaky_relu", img, vec![], normal, |t, x, _| Ok(t.leaky_relu(x, 0.2))),
        case("tanh", img, vec![], normal, |t, x, _| Ok(t.tanh(x))),
        case("sigmoid", img, vec![], normal, |t, x, _| Ok(t.sigmoid(x))),
        case("softplus", img, vec![], normal, |t, x, _| Ok(t.softplus(x))),
        case("broadcast", [2, 1, 5, 1], vec![], normal, |t, x, _| t.broadcast(x, [2, 4, 5, 3])),
        case("sum_axes", img, vec![], normal, |t, x, _| Ok(t.sum_axes(x, [false, true, false, true]))),
        case("mean_axes", img, vec![], normal, |t, x, _| Ok(t.mean_axes(x, [true, false, true, false]))),
        case("sum", img, vec![], normal, |t, x, _| {
            let s = t.square(x);
            Ok(t.sum(s))
        }),
        case("mean", img, vec![], normal, |t, x, _| {
            let s = t.square(x);
            Ok(t.mean(s))
        }),
        case("global_avg_pool", img, vec![], normal, |t, x, _| Ok(t.global_avg_pool(x))),
        case("pad/zero", img, vec![], normal, |t, x, _| t.pad(x, PadMode::Zero(2))),
        case("pad/reflect", img, vec![], normal, |t, x, _| t.pad(x, PadMode::Reflect(2))),
        case("upsample_nearest", img, vec![], normal, |t, x, _| t.upsample_nearest(x, 2)),
        case("concat_channels", img, vec![[2, 2, 5, 5]], normal, |t, x, c| t.concat_channels(&[c[0], x, c[0]])),
        case("cross_entropy", [4, 5, 1, 1], vec![], normal, |t, x, _| t.cross_entropy(x, &[0, 3, 4, 1])),
        case("l1_distance", img, vec![img], normal, |t, x, c| t.l1_distance(x, c[0])),
        case("squared_distance", img, vec![img], normal, |t, x, c| t.squared_distance(c[0], x)),
    ];
    for (ci, co, stride, k, pad) in [
        (3, 4, 1, 3, PadMode::Zero(1)),
        (3, 4, 2, 4, PadMode::Zero(1)),
        (3, 4, 2, 3, PadMode::Reflect(1)),
        (3, 4, 1, 1, PadMode::None),
        (4, 2, 1, 3, PadMode::Reflect(1)),
    ] {
        let (xs, w, b) = ([2, ci, 7, 7], [co, ci, k, k], [co, 1, 1, 1]);
        v.push(case("conv2d/input", xs, vec![w, b], normal, move |t, x, c| {
            t.conv2d(x, c[0], Some(c[1]), stride, pad)
        }));
        v.push(case("conv2d/weight", w, vec![xs], normal, move |t, x, c| {
            t.conv2d(c[0], x, None, stride, pad)
        }));
        v.push(case("conv2d/bias", b, vec![xs, w], normal, move |t, x, c| {
            t.conv2d(c[0], c[1], Some(x), stride, pad)
        }));
    }
    let w3 = [4, 3, 3, 3];
    v.extend([
        case("upsample_conv3x3/input", [2, 3, 4, 5], vec![w3, [4, 1, 1, 1]], normal, |t, x, c| {
            t.upsample_conv3x3(x, c[0], Some(c[1]))
        }),
        case("upsample_conv3x3/weight", w3, vec![[2, 3, 4, 5]], normal, |t, x, c| t.upsample_conv3x3(c[0], x, None)),
        case("upsample_conv3x3/bias", [4, 1, 1, 1], vec![[2, 3, 4, 5], w3], normal, |t, x, c| {
            t.upsample_conv3x3(c[0], c[1], Some(x))
        }),
    ]);
    let feat = [2, 6, 4, 4];
    v.extend([
        case("pono/beta", feat, vec![], normal, |t, x, _| Ok(extract_moments(t, x)?.beta)),
        case("pono/gamma", feat, vec![], normal, |t, x, _| Ok(extract_moments(t, x)?.gamma)),
        case("pono/normalize", feat, vec![], normal, |t, x, _| Ok(pono_normalize(t, x)?.0)),
        case("pono/inject features", feat, vec![feat], normal, |t, x, c| {
            let m = extract_moments(t, c[0])?;
            inject_moments(t, x, &m)
        }),
        case("pono/inject moments", feat, vec![[2, 3, 8, 8]], normal, |t, x, c| {
            let m = extract_moments(t, x)?;
            inject_moments(t, c[0], &m)
        }),
    ]);
    let logits = [2, 1, 3, 3];
    let rgb = [1, 3, 16, 16];
    v.extend([
        case("loss/adversarial D real", logits, vec![logits], normal, |t, x, c| {
            loss_adversarial(t, x, c[0], Side::Discriminator)
        }),
        case("loss/adversarial D fake", logits, vec![logits], normal, |t, x, c| {
            loss_adversarial(t, c[0], x, Side::Discriminator)
        }),
        case("loss/adversarial G", logits, vec![logits], normal, |t, x, c| {
            loss_adversarial(t, c[0], x, Side::Generator)
        }),
        case("loss/identity", img, vec![img, img, img], normal, |t, x, c| loss_identity(t, x, c[0], c[1], c[2])),
        case("loss/identity target", img, vec![img, img, img], normal, |t, x, c| loss_identity(t, c[0], c[1], c[2], x)),
        case("loss/cycle", img, vec![img, img, img], normal, |t, x, c| loss_cycle(t, c[0], c[1], x, c[2])),
        case("loss/kl", [2, 8, 1, 1], vec![], normal, |t, x, _| Ok(loss_kl(t, x))),
        case("loss/perceptual", rgb, vec![rgb], normal, |t, x, c| {
            loss_perceptual(t, x, c[0], &FeaturePyramid::new(1234))
        }),
        case("loss/total", img, vec![img; 5], normal, |t, x, c| {
            let mut parts = Vec::new();
            for &ci in c {
                let p = t.mul(x, ci)?;
                parts.push(t.sum(p));
            }
            let terms = GeneratorTerms { adv: parts[0], idt: parts[1], rec: parts[2], kl: parts[3], perceptual: parts[4] };
            loss_total(t, &terms, &LossWeights::default())
        }),
    ]);
    v
}

fn tiny_model(seed: u64) -> SittaModel<f64> {
    let cfg = ModelConfig { texture_dim: 4, base_channels: 2, res_blocks: 1, image_side: 16 };
    SittaModel::<f32>::new(cfg, seed).unwrap().cast::<f64>()
}

/// Outputs of the paired forward pass and the patch discriminator, each
/// reduced by its own random projection, as functions of image A. Together
/// they reach every encoder, decoder and discriminator.
fn model_output(model: &SittaModel<f64>, t: &mut Tape<f64>, a: Var, b: &Tensor<f64>, which: usize) -> sitta::Result<Var> {
    let mut g = Graph::inference();
    std::mem::swap(&mut g.tape, t);
    let bv = g.input(b.clone());
    let out = model.forward_pair(&mut g, a, bv)?;
    let y = match which {
        0 => out.a2b,
        1 => out.aa,
        2 => out.aba,
        3 => out.texture_a,
        _ => model.discriminate(&mut g, DomainId::B, out.a2b)?,
    };
    let r = project(&mut g.tape, y, which as u64);
    std::mem::swap(&mut g.tape, t);
    r
}

const MODEL_OUTPUTS: [&str; 5] = ["model/a2b", "model/aa", "model/aba cycle", "model/texture code", "model/discriminator"];

fn ac1_gradients() -> Outcome {
    let mut worst = (0.0f64, "");
    let mut checks = 0;
    let mut failures = Vec::new();
    let mut record = |name: &'static str, seed: u64, err: sitta::Result<f64>| {
        checks += 1;
        match err {
            Ok(e) if e < GRAD_REL_TOL => {
                if e > worst.0 {
                    worst = (e, name);
                }
            }
            Ok(e) => failures.push(format!("{name} seed {seed}: {e:.2e}")),
            Err(e) => failures.push(format!("{name} seed {seed}: {e}")),
        }
    };
    for c in grad_cases() {
        for seed in 0..GRAD_SEEDS {
            let mut rng = Rng::new(1000 * seed + 17);
            let x = Tensor::<f64>::randn(c.input, 1.0, &mut rng).map(c.domain);
            let consts: Vec<_> = c.consts.iter().map(|&s| Tensor::<f64>::randn(s, 1.0, &mut rng)).collect();
            record(c.name, seed, grad_check(|t, v| (c.build)(t, v, &consts), &x, GRAD_EPS));
        }
    }
    for seed in 0..GRAD_SEEDS {
        let model = tiny_model(seed);
        let mut rng = Rng::new(seed + 50);
        let a = Tensor::<f64>::uniform([1, 3, 16, 16], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform([1, 3, 16, 16], -1.0, 1.0, &mut rng);
        for (which, name) in MODEL_OUTPUTS.iter().enumerate() {
            record(name, seed, grad_check(|t, v| model_output(&model, t, v, &b, which), &a, GRAD_EPS));
        }
    }
    let summary = format!("{checks} checks, worst relative error {:.2e} ({}), limit {GRAD_REL_TOL:e}", worst.0, worst.1);
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; failing: {}", failures.join(", ")))
    }
}

// ---------------------------------------------------------------- AC2

fn ac2_pono() -> Outcome {
    let mut rt = 0.0f64;
    let mut mean_err = 0.0f64;
    let mut std_err = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = Rng::new(seed);
        let x = Tensor::<f64>::randn([2, 16, 7, 9], 1.0, &mut rng);
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let (n, m) = pono_normalize(&mut t, xv).map_err(|e| e.to_string())?;
        let back = inject_moments(&mut t, n, &m).map_err(|e| e.to_string())?;
        rt = rt.max(t.value(back).max_abs_diff(&x));
        let nv = t.value(n).clone();
        let s = nv.shape();
        for b in 0..s.n() {
            for y in 0..s.h() {
                for xx in 0..s.w() {
                    let vals: Vec<f64> = (0..s.c()).map(|c| nv.at([b, c, y, xx])).collect();
                    let mu = vals.iter().sum::<f64>() / vals.len() as f64;
                    let sd = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
                    mean_err = mean_err.max(mu.abs());
                    std_err = std_err.max((sd - 1.0).abs());
                }
            }
        }
    }
    let mut t = Tape::<f64>::new();
    let c = t.constant(Tensor::full([1, 8, 4, 4], 0.37));
    let m = extract_moments(&mut t, c).map_err(|e| e.to_string())?;
    let floor = PONO_EPS.sqrt();
    let exact = t.value(m.gamma).data().iter().all(|&g| g == floor);
    check(
        rt < PONO_ROUNDTRIP_TOL && mean_err < PONO_MEAN_TOL && std_err < PONO_STD_TOL && exact,
        format!(
            "round trip {rt:.1e} (<{PONO_ROUNDTRIP_TOL:e}), mean {mean_err:.1e} (<{PONO_MEAN_TOL:e}), std {std_err:.1e} (<{PONO_STD_TOL:e}), constant-input gamma == sqrt(eps): {exact}"
        ),
    )
}

// ---------------------------------------------------------------- AC3

fn gaussian_1d(mean: f64, var: f64) -> GaussianStats {
    GaussianStats::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var), 1000).unwrap()
}

fn ac3_frechet() -> Outcome {
    let shift = frechet_distance(&gaussian_1d(0.0, 1.0), &gaussian_1d(1.0, 1.0)).map_err(|e| e.to_string())?;
    let scale = frechet_distance(&gaussian_1d(0.0, 1.0), &gaussian_1d(0.0, 4.0)).map_err(|e| e.to_string())?;
    let images: Vec<Tensor> = (0..12).map(|k| render_image(TextureKind::Noise, ShapeKind::Blob, 32, k)).collect();
    let stats = embed_for_fid(&images, &FeaturePyramid::new(1234)).map_err(|e| e.to_string())?;
    let same = frechet_distance(&stats, &stats).map_err(|e| e.to_string())?;
    check(
        (shift - 1.0).abs() < FRECHET_TOL && (scale - 1.0).abs() < FRECHET_TOL && same.abs() < FRECHET_TOL,
        format!("N(0,1)/N(1,1) = {shift}, N(0,1)/N(0,4) = {scale}, FID(S,S) = {same:e} (tol {FRECHET_TOL:e})"),
    )
}

// ---------------------------------------------------------------- AC4

fn ac4_self_reconstruction() -> Outcome {
    let image = render_image(TextureKind::Stripes, ShapeKind::Leaf, 64, 42);
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in SEEDS {
        let mut cfg = TrainConfig::default().with_side(64);
        cfg.iters = SELF_REC_ITERS;
        cfg.seed = seed;
        let (_, history) = train_pair(&image, &image, &cfg).map_err(|e| e.to_string())?;
        let early = history[10].idt;
        let last = history.last().expect("iterations ran").idt;
        let ratio = last / early;
        ok &= ratio < SELF_REC_RATIO;
        parts.push(format!("seed {seed}: {early:.3} -> {last:.3} ({:.0}%)", 100.0 * ratio));
    }
    check(ok, format!("{}; limit {:.0}%", parts.join(", "), 100.0 * SELF_REC_RATIO))
}

// ---------------------------------------------------------------- AC5

fn mean_distance(x: &Tensor, refs: &[Tensor]) -> f64 {
    refs.iter().map(|r| channel_histogram_distance(x, r, HISTOGRAM_BINS).unwrap()).sum::<f64>() / refs.len() as f64
}

fn ac5_texture_transfer() -> Outcome {
    let side = 64;
    let render = |t, seed| render_image(t, ShapeKind::Leaf, side, seed);
    let content_domain: Vec<Tensor> = (0..TRANSFER_HELD_OUT).map(|k| render(TextureKind::Stripes, 7000 + k)).collect();
    let texture_domain: Vec<Tensor> = (0..TRANSFER_HELD_OUT).map(|k| render(TextureKind::Dots, 8000 + k)).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in SEEDS {
        let a = render(TextureKind::Stripes, 1000 + seed);
        let b = render(TextureKind::Dots, 2000 + seed);
        let mut cfg = TrainConfig::default().with_side(side);
        cfg.iters = TRANSFER_ITERS;
        cfg.seed = seed;
        let (model, _) = train_pair_observed(&a, &b, &cfg, |_, _, _| ControlFlow::Continue(())).map_err(|e| e.to_string())?;
        let mut wins = 0;
        for k in 0..TRANSFER_HELD_OUT {
            let content = render(TextureKind::Stripes, 5000 + k);
            let out = model.translate(&content, &b, DomainId::B).map_err(|e| e.to_string())?;
            if mean_distance(&out, &texture_domain) < mean_distance(&out, &content_domain) {
                wins += 1;
            }
        }
        ok &= wins >= TRANSFER_MIN_WINS;
        parts.push(format!("seed {seed}: {wins}/{TRANSFER_HELD_OUT}"));
    }
    check(ok, format!("closer to texture domain: {}; need >= {TRANSFER_MIN_WINS}", parts.join(", ")))
}

// ---------------------------------------------------------------- AC6

fn write_set(dir: &Path, tag: &str, texture: TextureKind, n: usize, side: usize, seed0: u64) -> ImageSet {
    let sub = dir.join(tag);
    std::fs::create_dir_all(&sub).unwrap();
    let mut set = ImageSet::new(tag);
    for i in 0..n {
        let p = sub.join(format!("{tag}_{i}.png"));
        save_image(&render_image(texture, ShapeKind::Disc, side, seed0 + i as u64), &p).unwrap();
        set.push(p, tag);
    }
    set
}

fn small_job(dir: &Path, n_content: usize, n_texture: usize, mode: Mode, iters: usize) -> AugJob {
    let side = 32;
    let mut cfg = TrainConfig::default().with_side(side);
    cfg.iters = iters;
    cfg.seed = 3;
    AugJob {
        content_set: write_set(dir, "content", TextureKind::Stripes, n_content, side, 100),
        texture_set: write_set(dir, "texture", TextureKind::Dots, n_texture, side, 200),
        mode,
        label_policy: LabelPolicy::TextureLabel,
        train_cfg: cfg,
        output_dir: dir.join("out"),
    }
}

fn ac6_cardinality() -> Outcome {
    let d = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s2s = augment_single_to_single(&small_job(&d.path().join("s2s"), 3, 2, Mode::SingleToSingle, 20)).map_err(|e| e.to_string())?;
    let s2m = augment_single_to_multi(&small_job(&d.path().join("s2m"), 3, 2, Mode::SingleToMulti, 20)).map_err(|e| e.to_string())?;
    let on_disk = s2s.set.items.iter().filter(|(p, _)| p.exists()).count();
    check(
        s2s.set.len() == 6 && on_disk == 6 && s2s.records.len() == 6 && s2s.models_trained == 6 && s2m.models_trained == 2,
        format!(
            "single-to-single: {} images ({on_disk} on disk), {} models; single-to-multi: {} models, {} images",
            s2s.set.len(),
            s2s.models_trained,
            s2m.models_trained,
            s2m.set.len()
        ),
    )
}

// ---------------------------------------------------------------- AC7

fn ac7_downstream() -> Outcome {
    let d = tempfile::tempdir().map_err(|e| e.to_string())?;
    let setup = LongTailSetup::default();
    let mut data = setup.materialize(&d.path().join("data")).map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::default().with_side(setup.side);
    cfg.iters = TRANSFER_ITERS;
    data.sitta = Some(translate_minority(&data, &cfg, &d.path().join("sitta")).map_err(|e| e.to_string())?);
    let protocol = BenchProtocol {
        compositions: Composition::ALL.to_vec(),
        classifier: ClassifierSpec::default(),
        seeds: SEEDS.to_vec(),
    };
    let table = run_bench(&protocol, &data).map_err(|e| e.to_string())?;
    let mean = |c| table.mean(c).unwrap();
    let (base, rep, sitta) = (mean(Composition::Baseline), mean(Composition::Repeat), mean(Composition::Sitta));
    check(
        sitta >= rep && rep >= base && sitta - base >= BENCH_MARGIN,
        format!(
            "mean accuracy baseline {:.1}%, repeat {:.1}%, sitta {:.1}%, sitta+repeat {:.1}%; need sitta >= repeat >= baseline and a {:.0}-point lead",
            100.0 * base,
            100.0 * rep,
            100.0 * sitta,
            100.0 * mean(Composition::SittaPlusRepeat),
            100.0 * BENCH_MARGIN
        ),
    )
}

// ---------------------------------------------------------------- AC8

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn ac8_determinism() -> Outcome {
    let mut cfg = TrainConfig::default().with_side(64);
    cfg.iters = 30;
    cfg.seed = 11;
    let a = render_image(TextureKind::Stripes, ShapeKind::Leaf, 64, 1);
    let b = render_image(TextureKind::Dots, ShapeKind::Leaf, 64, 2);
    let ckpt = || write_checkpoint(&train_pair(&a, &b, &cfg).unwrap().0);
    let train_same = ckpt() == ckpt();

    // both runs write to the same directory, as a repeated invocation would
    let d = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = d.path().join("run");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        if root.exists() {
            std::fs::remove_dir_all(&root).map_err(|e| e.to_string())?;
        }
        let job = small_job(&root.join("aug"), 2, 2, Mode::SingleToMulti, 10);
        let aug = augment_single_to_multi(&job).map_err(|e| e.to_string())?;
        aug.write_manifest(&job.output_dir.join("manifest.csv")).map_err(|e| e.to_string())?;

        let setup = LongTailSetup { majority: 6, test_per_class: 4, seed: 5, ..LongTailSetup::default() };
        let mut data = setup.materialize(&root.join("bench")).map_err(|e| e.to_string())?;
        let mut tcfg = TrainConfig::default().with_side(64);
        tcfg.iters = 5;
        data.sitta = Some(translate_minority(&data, &tcfg, &root.join("bench/sitta")).map_err(|e| e.to_string())?);
        let protocol = BenchProtocol {
            compositions: Composition::ALL.to_vec(),
            classifier: ClassifierSpec { epochs: 2, ..ClassifierSpec::default() },
            seeds: vec![0, 1],
        };
        run_bench(&protocol, &data)
            .and_then(|t| t.write_csv(&root.join("bench/results.csv")))
            .map_err(|e| e.to_string())?;
        outputs.push(dir_bytes(&root));
    }
    let files = outputs[0].len();
    let differing: Vec<&str> = outputs[0]
        .iter()
        .zip(&outputs[1])
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let same = outputs[0].len() == outputs[1].len() && differing.is_empty();
    check(
        train_same && same,
        format!("train checkpoints identical: {train_same}; augment and bench outputs identical over {files} files: {same} {differing:?}"),
    )
}

// ---------------------------------------------------------------- AC9

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn ac9_throughput() -> Outcome {
    let cfg = TrainConfig::default();
    let side = cfg.image_side;
    let mut rng = Rng::new(9);
    let a = Tensor::<f32>::uniform([1, 3, side, side], -1.0, 1.0, &mut rng);
    let b = Tensor::<f32>::uniform([1, 3, side, side], -1.0, 1.0, &mut rng);
    let mut trainer = Trainer::<f32>::new(cfg).map_err(|e| e.to_string())?;
    trainer.step(&a, &b).map_err(|e| e.to_string())?;
    let mut steps = Vec::new();
    for _ in 0..3 {
        let t0 = Instant::now();
        trainer.step(&a, &b).map_err(|e| e.to_string())?;
        steps.push(t0.elapsed().as_secs_f64());
    }
    let mut fwd = Vec::new();
    for _ in 0..3 {
        let t0 = Instant::now();
        trainer.model.translate(&a, &b, DomainId::B).map_err(|e| e.to_string())?;
        fwd.push(t0.elapsed().as_secs_f64());
    }
    let (step, tr) = (median(steps), median(fwd));
    check(
        step < STEP_BOUND_S && tr < TRANSLATE_BOUND_S,
        format!("{side}x{side}: training iteration {step:.3}s (< {STEP_BOUND_S}s), translate {tr:.3}s (< {TRANSLATE_BOUND_S}s), median of 3"),
    )
}
