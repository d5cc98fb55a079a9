//! Acceptance criteria 1–9. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout (bypassing the test harness capture) and then
//! asserts the same verdict.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use puffnet_cli::args::{AblateInitArgs, AblatePeArgs, AblationArgs, DataArgs, RoundsArgs, SeedArg};
use puffnet_cli::commands::{ablate, rounds};
use puffnet_core::extractors::ContentExtractorConfig;
use puffnet_core::gradcheck::{check_probe, grad_check_with};
use puffnet_core::imageio::{load_png, save_png};
use puffnet_core::layers::MultiHeadAttention;
use puffnet_core::losses::{
    combine_extractor_terms, content_loss, identity_losses, style_loss, total_loss, ExtractorTerms,
    LossParts,
};
use puffnet_core::mac;
use puffnet_core::model::STYLE_EXTRACTOR_PREFIX;
use puffnet_core::stylizer::{attention_cost, attention_pass, EncoderLayer};
use puffnet_core::trainer::{loss_parts, loss_values, weighted_total, Dataset};
use puffnet_core::{
    synth, AttentionMode, ContentExtractor, LossReport, LossWeights, ModelConfig, OutEmbedMode,
    Parameters, PerceptualNet, PositionalEncoding, PuffNetModel, Result, Rng, Tensor, TrainConfig,
    Trainer,
};

const H: f32 = 1e-2;
const TOL: f64 = 1e-2;
const SAMPLES: usize = 60;

fn verdict(n: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "\ncriterion {n} ({title}): {} | {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{}", line.trim_end());
}

fn rand(shape: &[usize], seed: u64, lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), Rng::new(seed).uniform_vec(n, lo, hi)).unwrap()
}

fn leaf(shape: &[usize], seed: u64, lo: f32, hi: f32) -> Tensor {
    rand(shape, seed, lo, hi).to_param()
}

/// Values with magnitude in `[0.1, 1]` and random sign: at least `10·h`
/// from a relu kink.
fn off_kink(shape: &[usize], seed: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let mut r = Rng::new(seed);
    let data = (0..n)
        .map(|_| {
            let v = r.uniform(0.1, 1.0);
            if r.below(2) == 0 {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::param(shape.to_vec(), data)
}

#[test]
fn criterion_1_invertibility() {
    let t0 = Instant::now();
    let mut worst = 0.0f32;
    for i in 0..100u64 {
        let ex = ContentExtractor::new(&mut Rng::new(1000 + i), ContentExtractorConfig::default());
        let y = rand(&[1, 16, 32, 32], i, -1.0, 1.0);
        let back = ex.inn_inverse(&ex.inn_forward(&y).unwrap()).unwrap();
        let err = back.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        worst = worst.max(err);
    }
    let took = t0.elapsed();
    verdict(
        1,
        "invertibility",
        worst < 1e-4 && took < Duration::from_secs(5),
        &format!("max |inv(fwd(y)) - y| = {worst:.3e} over 100 inputs (< 1e-4), {took:.2?} (< 5 s)"),
    );
}

type Primitive = Box<dyn Fn(&Vec<Tensor>) -> Result<Tensor>>;

fn primitive_error(leaves: Vec<Tensor>, f: Primitive, seed: u64) -> f64 {
    let mut leaves = leaves;
    let shape = f(&leaves).unwrap().shape().to_vec();
    let probe = rand(&shape, seed ^ 0xabc, -1.0, 1.0);
    check_probe(&mut leaves, |p| f(p), &probe, H, SAMPLES, &mut Rng::new(seed))
        .unwrap()
        .max_rel_err()
}

fn primitives() -> Vec<(&'static str, Vec<Tensor>, Primitive)> {
    vec![
        ("matmul", vec![leaf(&[4, 5], 1, -1.0, 1.0), leaf(&[5, 3], 2, -1.0, 1.0)], Box::new(|p| p[0].matmul(&p[1]))),
        (
            "linear",
            vec![leaf(&[6, 4], 3, -1.0, 1.0), leaf(&[4, 5], 4, -1.0, 1.0), leaf(&[5], 5, -1.0, 1.0)],
            Box::new(|p| p[0].linear(&p[1], Some(&p[2]))),
        ),
        (
            "conv3x3",
            vec![leaf(&[1, 3, 6, 5], 6, -1.0, 1.0), leaf(&[4, 3, 3, 3], 7, -0.5, 0.5), leaf(&[4], 8, -1.0, 1.0)],
            Box::new(|p| p[0].conv2d(&p[1], Some(&p[2]), 1)),
        ),
        (
            "conv1x1",
            vec![leaf(&[1, 4, 5, 5], 9, -1.0, 1.0), leaf(&[3, 4, 1, 1], 10, -1.0, 1.0), leaf(&[3], 11, -1.0, 1.0)],
            Box::new(|p| p[0].conv2d(&p[1], Some(&p[2]), 1)),
        ),
        ("relu", vec![off_kink(&[40], 12)], Box::new(|p| Ok(p[0].relu()))),
        ("exp", vec![leaf(&[30], 13, -2.0, 2.0)], Box::new(|p| Ok(p[0].exp()))),
        (
            "clamp",
            vec![Tensor::param(vec![6], vec![-7.0, -3.0, 0.2, 2.5, 4.8, 9.0])],
            Box::new(|p| Ok(p[0].clamp(-5.0, 5.0))),
        ),
        (
            "mul_exp",
            vec![leaf(&[12], 14, -1.0, 1.0), leaf(&[12], 15, -1.0, 1.0)],
            Box::new(|p| p[0].mul_exp(&p[1])),
        ),
        ("div", vec![leaf(&[10], 16, -1.0, 1.0), leaf(&[10], 17, 0.5, 2.0)], Box::new(|p| p[0].div(&p[1]))),
        ("softmax", vec![leaf(&[4, 7], 18, -2.0, 2.0)], Box::new(|p| p[0].softmax())),
        (
            "layer_norm",
            vec![leaf(&[5, 8], 19, -2.0, 2.0), leaf(&[8], 20, 0.5, 1.5), leaf(&[8], 21, -0.5, 0.5)],
            Box::new(|p| p[0].layer_norm(&p[1], &p[2], 1e-5)),
        ),
        ("row_var", vec![leaf(&[4, 9], 22, -1.0, 1.0)], Box::new(|p| p[0].row_var())),
        ("mse", vec![leaf(&[20], 23, -1.0, 1.0), leaf(&[20], 24, -1.0, 1.0)], Box::new(|p| p[0].mse(&p[1]))),
        ("upsample2x", vec![leaf(&[1, 2, 3, 4], 25, -1.0, 1.0)], Box::new(|p| p[0].upsample2x())),
        ("avg_pool2x", vec![leaf(&[1, 2, 6, 4], 26, -1.0, 1.0)], Box::new(|p| p[0].avg_pool2x())),
        (
            "adaptive_avg_pool",
            vec![leaf(&[1, 3, 5, 7], 27, -1.0, 1.0)],
            Box::new(|p| p[0].adaptive_avg_pool(3, 4)),
        ),
        (
            "resize_bilinear",
            vec![leaf(&[1, 2, 4, 5], 28, -1.0, 1.0)],
            Box::new(|p| p[0].resize_bilinear(7, 3)),
        ),
        (
            "patches",
            vec![leaf(&[1, 3, 16, 8], 29, -1.0, 1.0)],
            Box::new(|p| p[0].to_patches(8)?.scale(2.0).from_patches(3, 16, 8, 8)),
        ),
        (
            "seq_grid",
            vec![leaf(&[6, 4], 30, -1.0, 1.0)],
            Box::new(|p| p[0].seq_to_grid(2, 3)?.square().grid_to_seq()),
        ),
    ]
}

#[test]
fn criterion_2_gradient_integrity() {
    let t0 = Instant::now();

    // (a) every primitive, plus the attention block as a composite.
    let mut part_a = Vec::new();
    for (i, (name, leaves, f)) in primitives().into_iter().enumerate() {
        part_a.push((name.to_string(), primitive_error(leaves, f, 100 + i as u64)));
    }
    let mut mha = MultiHeadAttention::new(&mut Rng::new(3), 16, 2).unwrap();
    let (q, kv) = (rand(&[5, 16], 31, -1.0, 1.0), rand(&[7, 16], 32, -1.0, 1.0));
    let probe = rand(&[5, 16], 33, -1.0, 1.0);
    let attn_err = check_probe(&mut mha, |m| Ok(m.forward(&q, &kv)?.output), &probe, H, SAMPLES, &mut Rng::new(34))
        .unwrap()
        .max_rel_err();
    part_a.push(("attention".into(), attn_err));
    let (worst_a_name, worst_a) = part_a
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap();

    // (b) the full weighted objective at 32×32, C = 32, 2 heads, 3 layers.
    let net = PerceptualNet::seeded(0);
    let w = LossWeights::default();
    let (c, s) = (synth::image(32, 32, 1), synth::image(32, 32, 2));
    let mut model = PuffNetModel::new(ModelConfig::default(), 0).unwrap();
    assert_eq!(
        (model.config.stylizer.width, model.config.stylizer.heads, model.config.stylizer.layers),
        (32, 2, 3)
    );
    let graph = |m: &PuffNetModel| total_loss(&loss_parts(m, &net, &w, &c, &s, &mut Rng::new(0))?, &w);
    let eval = |m: &PuffNetModel| Ok(weighted_total(&loss_values(m, &net, &w, &c, &s, &mut Rng::new(0))?, &w));
    let report = grad_check_with(&mut model, graph, eval, H, SAMPLES, &mut Rng::new(5)).unwrap();
    let worst_b = report.max_rel_err();
    let over = report.samples.iter().filter(|s| s.rel_err >= TOL).count();
    let ws = report.worst().unwrap().clone();

    // Diagnostic only: the worst coordinate with smaller steps.
    let mut scan = String::new();
    for h in [1e-3f32, 3e-4] {
        let p = model.named_params().into_iter().find(|(n, _)| *n == ws.param).unwrap().1;
        let mut at = |d: f32| {
            let mut v = p.to_vec();
            v[ws.index] += d;
            let t = Tensor::param(p.shape().to_vec(), v);
            model.visit_params_mut("", &mut |n, x| {
                if n == ws.param {
                    *x = t.clone();
                }
            });
            eval(&model).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * f64::from(h));
        model.visit_params_mut("", &mut |n, x| {
            if n == ws.param {
                *x = p.clone();
            }
        });
        scan.push_str(&format!(" fd(h={h})={fd:.4e}"));
    }
    let took = t0.elapsed();
    let pass = worst_a < TOL && worst_b < TOL && took < Duration::from_secs(120);
    verdict(
        2,
        "gradient integrity",
        pass,
        &format!(
            "(a) {} primitives, max rel err {worst_a:.2e} ({worst_a_name}); \
             (b) full loss max rel err {worst_b:.2e} over {SAMPLES} coords at h=1e-2, \
             {over} coords >= 1e-2, worst {}[{}] analytic={:.4e} fd={:.4e},{scan}; {took:.1?} (< 2 min)",
            part_a.len(),
            ws.param,
            ws.index,
            ws.analytic,
            ws.numeric,
        ),
    );
}

#[test]
fn criterion_3_complexity() {
    let mut ok = true;
    let mut rows = Vec::new();
    for c in [32usize, 192] {
        let layer = EncoderLayer::new(&mut Rng::new(c as u64), c, 2).unwrap();
        for l in [16usize, 64, 256] {
            let (x, sty, pos) = (rand(&[l, c], 1, -1.0, 1.0), rand(&[l, c], 2, -1.0, 1.0), rand(&[l, c], 3, -1.0, 1.0));
            let (l64, c64) = (l as u64, c as u64);
            let mut quads = [0u64; 2];
            for (i, (mode, n)) in [(AttentionMode::Cross, l64), (AttentionMode::ConcatSelf, 2 * l64)].into_iter().enumerate() {
                let (_, got) = mac::count(|| attention_pass(&layer, &x, &sty, &pos, mode).unwrap());
                let closed = attention_cost(l, c, mode);
                ok &= got.quadratic == 2 * n * n * c64 && got.projection == 4 * n * c64 * c64;
                ok &= closed.quadratic == got.quadratic && closed.projection == got.projection;
                quads[i] = got.quadratic;
            }
            ok &= quads[1] == 4 * quads[0];
            rows.push(format!("L={l},C={c}:{}x", quads[1] / quads[0]));
        }
    }
    verdict(
        3,
        "complexity",
        ok,
        &format!("counted MACs equal 2·n²·C and 4·n·C² exactly; concat/cross quadratic {}", rows.join(" ")),
    );
}

#[test]
fn criterion_4_loss_identities() {
    let net = PerceptualNet::seeded(0);
    let w = LossWeights::default();
    let img = rand(&[1, 3, 32, 32], 1, 0.0, 1.0);
    let other = synth::image(32, 32, 4);
    let lc = content_loss(&img, &img, &net).unwrap().item();
    let ls = style_loss(&img, &img, &net).unwrap().item();
    let (id1, id2) = identity_losses(&img, &img, &other, &other, &net).unwrap();
    let total = total_loss(&LossParts::from_values([1.0; 5]), &w).unwrap().item();
    let one = || Tensor::scalar(1.0);
    let fe = combine_extractor_terms(&ExtractorTerms { cc: one(), cs: one(), sc: one(), ss: one() }, &w)
        .unwrap()
        .item();
    let checks = [
        ("L_c(I,I)", lc, 0.0),
        ("L_s(I,I)", ls, 0.0),
        ("L_id1", id1.item(), 0.0),
        ("L_id2", id2.item(), 0.0),
        ("total(1)", total, 108.0),
        ("L_fe(1)", fe, 3.4),
    ];
    let pass = checks.iter().all(|(_, got, want)| (got - want).abs() < 1e-5);
    let detail = checks.iter().map(|(n, g, _)| format!("{n}={g}")).collect::<Vec<_>>().join(" ");
    verdict(4, "loss identities", pass, &format!("{detail} (tol 1e-5)"));
}

fn mean_total(r: &[LossReport]) -> f64 {
    r.iter().map(|r| f64::from(r.total)).sum::<f64>() / r.len() as f64
}

#[test]
fn criterion_5_overfit() {
    let t0 = Instant::now();
    let data = Dataset::from_images(vec![synth::image(64, 64, 1)], vec![synth::image(64, 64, 2)]).unwrap();
    let mut cfg = TrainConfig::with_iters(300);
    cfg.crop = 64;
    cfg.seed = 0;
    let mut trainer = Trainer::new(ModelConfig::default(), cfg, PerceptualNet::seeded(0)).unwrap();
    let reports = trainer.train(&data, 300, None, |_| {}).unwrap();
    let finite = reports.iter().all(|r| r.components().iter().chain([&r.total]).all(|v| v.is_finite()));
    let (first, last) = (mean_total(&reports[..20]), mean_total(&reports[280..]));
    let ratio = last / first;
    let took = t0.elapsed();
    verdict(
        5,
        "overfit",
        reports.len() == 300 && finite && ratio <= 0.5 && took < Duration::from_secs(600),
        &format!(
            "first-20 mean {first:.4}, last-20 mean {last:.4}, ratio {ratio:.4} (<= 0.5), finite={finite}, {took:.1?} (< 10 min)"
        ),
    );
}

fn snapshot(m: &PuffNetModel, prefix: &str) -> Vec<u32> {
    m.named_params()
        .into_iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .flat_map(|(_, t)| t.to_vec())
        .map(f32::to_bits)
        .collect()
}

fn small_config(total: u64) -> TrainConfig {
    let mut cfg = TrainConfig::with_iters(total);
    cfg.crop = 32;
    cfg
}

#[test]
fn criterion_6_freeze_schedule() {
    let cfg = small_config(100);
    assert_eq!(cfg.freeze_fraction, 0.12);
    let freeze = cfg.freeze_step();
    let data = Dataset::synthetic(4, 48).unwrap();
    let mut trainer = Trainer::new(ModelConfig::default(), cfg, PerceptualNet::seeded(0)).unwrap();
    let mut style_before = snapshot(&trainer.model, STYLE_EXTRACTOR_PREFIX);
    let mut enc_before = snapshot(&trainer.model, "stylizer.layers");
    let (mut moved_early, mut frozen_late, mut enc_every) = (0, true, true);
    for t in 1..=100u64 {
        trainer.train(&data, t, None, |_| {}).unwrap();
        let style = snapshot(&trainer.model, STYLE_EXTRACTOR_PREFIX);
        let enc = snapshot(&trainer.model, "stylizer.layers");
        if t < freeze {
            moved_early += usize::from(style != style_before);
        } else {
            frozen_late &= style == style_before;
        }
        enc_every &= enc != enc_before;
        style_before = style;
        enc_before = enc;
    }
    verdict(
        6,
        "freeze schedule",
        freeze == 12 && frozen_late && enc_every && moved_early == 11,
        &format!(
            "freeze step {freeze}; style extractor changed on {moved_early}/11 early steps, \
             bit-identical over steps 12..=100: {frozen_late}; encoder changed every step: {enc_every}"
        ),
    );
}

fn bits(r: &[LossReport]) -> Vec<[u32; 6]> {
    r.iter()
        .map(|r| {
            let c = r.components();
            [c[0], c[1], c[2], c[3], c[4], r.total].map(f32::to_bits)
        })
        .collect()
}

#[test]
fn criterion_7_determinism_and_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::synthetic(4, 48).unwrap();
    let run = |ckpt: Option<&Path>| {
        let mut cfg = small_config(100);
        cfg.checkpoint_every = 10;
        let mut t = Trainer::new(ModelConfig::default(), cfg, PerceptualNet::seeded(0)).unwrap();
        t.train(&data, 100, ckpt, |_| {}).unwrap()
    };
    let a = run(Some(dir.path()));
    let b = run(None);
    let same_runs = bits(&a) == bits(&b);

    let mut resumed = Trainer::resume(&dir.path().join("step000050.puff"), PerceptualNet::seeded(0)).unwrap();
    let tail = resumed.train(&data, 60, None, |_| {}).unwrap();
    let same_tail = bits(&tail) == bits(&a[50..60]) && tail.first().map(|r| r.step) == Some(51);
    let reference = puffnet_core::Checkpoint::load(&dir.path().join("step000060.puff")).unwrap();
    let same_state = resumed.checkpoint().params == reference.params && resumed.adam == reference.adam;
    verdict(
        7,
        "determinism and persistence",
        same_runs && same_tail && same_state,
        &format!(
            "two 100-step runs bit-identical: {same_runs}; resume at 50 reproduces losses 51..=60: {same_tail}; \
             parameters and moments at 60 match: {same_state}"
        ),
    );
}

fn trained_checkpoint(dir: &Path) -> std::path::PathBuf {
    let mut t = Trainer::new(ModelConfig::default(), small_config(20), PerceptualNet::seeded(0)).unwrap();
    t.train(&Dataset::synthetic(2, 48).unwrap(), 5, None, |_| {}).unwrap();
    let p = dir.join("model.puff");
    t.save(&p).unwrap();
    p
}

#[test]
fn criterion_8_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint(dir.path());
    let (c, s) = (dir.path().join("c.png"), dir.path().join("s.png"));
    save_png(&c, &synth::image(256, 256, 1)).unwrap();
    save_png(&s, &synth::image(256, 256, 2)).unwrap();
    let stylize = |out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_puffnet"))
            .env_remove(puffnet_cli::SEED_ENV)
            .arg("stylize")
            .arg("--content")
            .arg(&c)
            .arg("--style")
            .arg(&s)
            .arg("--ckpt")
            .arg(&ckpt)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap()
            .status
            .success()
    };
    let (o1, o2) = (dir.path().join("o1.png"), dir.path().join("o2.png"));
    let ran = stylize(&o1) && stylize(&o2);
    let img = load_png(&o1).unwrap();
    let shape_ok = img.shape() == [1, 3, 256, 256];
    let pixels_ok = img.data().iter().all(|v| (0.0..=1.0).contains(v));
    let identical = std::fs::read(&o1).unwrap() == std::fs::read(&o2).unwrap();
    verdict(
        8,
        "end-to-end shape and range",
        ran && shape_ok && pixels_ok && identical,
        &format!("exit ok: {ran}; output {:?}; pixels valid: {pixels_ok}; repeat byte-identical: {identical}", img.shape()),
    );
}

fn ablation_args(out: &Path) -> AblationArgs {
    AblationArgs {
        iters: 8,
        width: 32,
        heads: 2,
        layers: 3,
        data: DataArgs {
            content_dir: None,
            style_dir: None,
            crop: 32,
            lr: 0.0005,
            warmup: None,
            freeze_fraction: 0.12,
        },
        seed: SeedArg { seed: 0 },
        out: out.to_path_buf(),
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn complete(r: &puffnet_cli::report::Report) -> bool {
    ["final_content", "final_style", "final_total"].iter().all(|c| {
        r.column(c)
            .unwrap()
            .iter()
            .all(|v| v.parse::<f64>().is_ok_and(f64::is_finite))
    }) && r.get("config").is_some()
}

#[test]
fn criterion_9_ablation_harness() {
    let dir = tempfile::tempdir().unwrap();
    let init = |sub: &str| {
        let args = AblateInitArgs {
            modes: OutEmbedMode::ALL.to_vec(),
            run: ablation_args(&dir.path().join(sub)),
        };
        let r = ablate::run_init(&args, &mut Vec::new()).unwrap();
        (r, dir_bytes(&dir.path().join(sub)))
    };
    let (r1, f1) = init("init1");
    let (r2, f2) = init("init2");
    let init_ok = r1.rows.len() == 4
        && complete(&r1)
        && r1.column("init_check").unwrap().iter().all(|v| *v == "true")
        && f1 == f2
        && ["content", "style", "zero", "random"]
            .iter()
            .all(|m| f1.iter().any(|(n, _)| *n == format!("init_{m}.tsv")) && f1.iter().any(|(n, _)| *n == format!("init_{m}.png")));
    let _ = r2;

    let pe = |sub: &str| {
        let args = AblatePeArgs {
            pe: vec![PositionalEncoding::Cape, PositionalEncoding::Sinusoidal],
            run: ablation_args(&dir.path().join(sub)),
        };
        let r = ablate::run_pe(&args, &mut Vec::new()).unwrap();
        (r, dir_bytes(&dir.path().join(sub)))
    };
    let (p1, g1) = pe("pe1");
    let (_, g2) = pe("pe2");
    let pe_ok = p1.rows.len() == 2 && complete(&p1) && g1 == g2 && p1.column("steps").unwrap() == vec!["8", "8"];

    let ckpt = trained_checkpoint(dir.path());
    let (c, s) = (dir.path().join("c.png"), dir.path().join("s.png"));
    save_png(&c, &synth::image(64, 64, 5)).unwrap();
    save_png(&s, &synth::image(64, 64, 6)).unwrap();
    let out = rounds::run(
        &RoundsArgs {
            n: 10,
            content: c,
            style: s,
            ckpt,
            out: dir.path().join("rounds"),
            seed: SeedArg { seed: 0 },
        },
        &mut Vec::new(),
    )
    .unwrap();
    let rounds_ok = out.images.len() == 10
        && out.images.iter().all(|p| p.exists())
        && out.content_losses.len() == 10
        && out.content_losses.iter().all(|v| v.is_finite());
    verdict(
        9,
        "ablation harness",
        init_ok && pe_ok && rounds_ok,
        &format!(
            "ablate-init 4 modes complete and repeatable: {init_ok}; ablate-pe both encodings complete and repeatable: {pe_ok}; \
             rounds n=10 images and finite L_c series: {rounds_ok} (L_c {:.4e} -> {:.4e})",
            out.content_losses[0], out.content_losses[9]
        ),
    );
}
