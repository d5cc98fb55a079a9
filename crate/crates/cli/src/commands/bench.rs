use std::fs;
use std::io::Write;
use std::time::Instant;

use puffnet_core::mac;
use puffnet_core::stylizer::{attention_cost, attention_pass, AttentionMode, EncoderLayer};
use puffnet_core::{no_grad, synth, ModelConfig, PuffNetModel, Rng, Tensor};

use crate::args::BenchArgs;
use crate::report::{num, Report};
use crate::setup::{config_header, resolve_seed, stylize};
use crate::{echo, CliError, CliResult};

pub struct BenchOutcome {
    pub macs: Report,
    pub timing: Report,
}

fn rand(rng: &mut Rng, rows: usize, cols: usize) -> CliResult<Tensor> {
    Ok(Tensor::new(vec![rows, cols], rng.uniform_vec(rows * cols, -1.0, 1.0))?)
}

/// Closed-form against counted MACs for every `(L, C)`.
pub fn mac_table(lengths: &[usize], widths: &[usize], heads: usize, seed: u64) -> CliResult<Report> {
    let mut r = Report::new(&[
        "L",
        "C",
        "cross_quad_formula",
        "cross_quad_measured",
        "cross_proj_formula",
        "cross_proj_measured",
        "concat_quad_formula",
        "concat_quad_measured",
        "concat_proj_formula",
        "concat_proj_measured",
        "quad_ratio",
        "exact",
    ]);
    let root = Rng::new(seed);
    for &c in widths {
        if heads == 0 || c % heads != 0 {
            return Err(CliError::Usage(format!("width {c} is not a multiple of heads {heads}")));
        }
        let layer = EncoderLayer::new(&mut root.split(&format!("layer{c}")), c, heads)?;
        for &l in lengths {
            if l == 0 {
                return Err(CliError::Usage("sequence length must be positive".into()));
            }
            let mut rng = root.split(&format!("inputs{l}x{c}"));
            let (x, s, pos) = (rand(&mut rng, l, c)?, rand(&mut rng, l, c)?, rand(&mut rng, l, c)?);
            let mut row = vec![l.to_string(), c.to_string()];
            let mut exact = true;
            let mut quads = [0u64; 2];
            for (i, mode) in [AttentionMode::Cross, AttentionMode::ConcatSelf].into_iter().enumerate() {
                let (res, got) = mac::count(|| no_grad(|| attention_pass(&layer, &x, &s, &pos, mode)));
                res?;
                let want = attention_cost(l, c, mode);
                exact &= got.quadratic == want.quadratic && got.projection == want.projection;
                quads[i] = got.quadratic;
                row.extend([want.quadratic, got.quadratic, want.projection, got.projection].map(|v| v.to_string()));
            }
            row.push(num(quads[1] as f64 / quads[0] as f64));
            row.push(exact.to_string());
            r.row(row);
        }
    }
    Ok(r)
}

/// Wall-clock stylize passes of a fresh default model.
pub fn timing_table(res: &[usize], reps: usize, seed: u64) -> CliResult<Report> {
    let mut r = Report::new(&["resolution", "tokens", "reps", "mean_ms", "min_ms", "macs"]);
    let model = PuffNetModel::new(ModelConfig::default(), seed)?;
    for &n in res {
        if n == 0 || n % puffnet_core::PATCH != 0 {
            return Err(CliError::Usage(format!("resolution {n} must be a positive multiple of 8")));
        }
        let c = synth::image(n, n, 1);
        let s = synth::image(n, n, 2);
        let (_, counts) = mac::count(|| stylize(&model, &c, &s, seed));
        let mut times = Vec::with_capacity(reps.max(1));
        for _ in 0..reps.max(1) {
            let t0 = Instant::now();
            stylize(&model, &c, &s, seed)?;
            times.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        let tokens = (n / puffnet_core::PATCH).pow(2);
        r.row(vec![
            format!("{n}x{n}"),
            tokens.to_string(),
            times.len().to_string(),
            format!("{mean:.3}"),
            format!("{min:.3}"),
            counts.total().to_string(),
        ]);
    }
    Ok(r)
}

pub fn run(a: &BenchArgs, out: &mut dyn Write) -> CliResult<BenchOutcome> {
    let seed = resolve_seed(&a.seed)?;
    let cfg = serde_json::json!({
        "L": a.lengths, "C": a.widths, "res": a.res, "reps": a.reps, "heads": a.heads,
    });
    let header = config_header("bench", seed, cfg);
    echo(out, &header);
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let mut macs = mac_table(&a.lengths, &a.widths, a.heads, seed)?.with_header(&header);
    let all_exact = macs.column("exact").is_some_and(|c| c.iter().all(|v| *v == "true"));
    macs.meta("all_exact", all_exact);
    macs.write(&a.out.join("macs.tsv"))?;
    let mut timing = timing_table(&a.res, a.reps, seed)?.with_header(&header);
    timing.meta("note", "wall-clock columns vary between runs");
    timing.write(&a.out.join("timing.tsv"))?;
    let _ = write!(out, "{}", macs.render());
    let _ = write!(out, "{}", timing.render());
    let _ = writeln!(out, "wrote={}", a.out.display());
    Ok(BenchOutcome { macs, timing })
}
