use std::fs;
use std::io::Write;
use std::path::Path;

use puffnet_core::imageio::save_png;
use puffnet_core::stylizer::RANDOM_EMBED_SCALE;
use puffnet_core::trainer::{Dataset, RunConfig};
use puffnet_core::{
    no_grad, LossReport, ModelConfig, OutEmbedMode, PositionalEncoding, PuffNetModel, Rng, Tensor,
    TrainConfig, Trainer,
};

use crate::args::{AblateInitArgs, AblatePeArgs, AblationArgs};
use crate::commands::train::loss_table;
use crate::report::{num, Report};
use crate::setup::{config_header, dataset, model_config_from, perceptual, resolve_seed, stylize, train_config};
use crate::{echo, kv, CliError, CliResult};

/// One short training run and what it left behind.
pub struct RunSummary {
    pub name: String,
    pub reports: Vec<LossReport>,
    pub init_check: bool,
    pub pos_varies: bool,
}

struct Shared {
    data: Dataset,
    sample: (Tensor, Tensor),
    other_content: Tensor,
    seed: u64,
    cfg: TrainConfig,
    header: Vec<(String, String)>,
}

fn shared(run: &AblationArgs, out_dir: &Path) -> CliResult<Shared> {
    let seed = resolve_seed(&run.seed)?;
    let cfg = train_config(&run.data, run.iters, seed, 0)?;
    let data = dataset(&cfg)?;
    let pick = Rng::new(seed).split("sample");
    let sample = data.batch(1, cfg.crop, &pick)?;
    let mut other_content = data.batch(2, cfg.crop, &pick)?.0;
    if other_content.data() == sample.0.data() {
        other_content = other_content.scale(0.5).add_scalar(0.25);
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    save_png(&out_dir.join("input_content.png"), &sample.0)?;
    save_png(&out_dir.join("input_style.png"), &sample.1)?;
    Ok(Shared {
        data,
        sample,
        other_content,
        seed,
        cfg,
        header: Vec::new(),
    })
}

/// Whether the step-0 output stream matches what `mode` prescribes.
fn init_matches(model: &PuffNetModel, c: &Tensor, s: &Tensor, seed: u64) -> CliResult<bool> {
    let mut rng = Rng::new(seed).split("stylize");
    let trace = no_grad(|| model.stylize_traced(c, s, Some(&mut rng)))?;
    let init = trace.stylize.eps_o_init.data();
    Ok(match model.config.stylizer.out_embed {
        OutEmbedMode::Content => init == trace.stylize.eps_c.tokens.data(),
        OutEmbedMode::Style => init == trace.stylize.eps_s.tokens.data(),
        OutEmbedMode::Zero => init.iter().all(|&v| v == 0.0),
        OutEmbedMode::Random => {
            init.iter().all(|v| v.abs() <= RANDOM_EMBED_SCALE) && init.iter().any(|&v| v != 0.0)
        }
    })
}

fn positional(model: &PuffNetModel, content: &Tensor) -> CliResult<Vec<f32>> {
    no_grad(|| -> CliResult<Vec<f32>> {
        let eps_c = model.stylizer.patchify(&model.extract_content(content)?)?;
        Ok(model.stylizer.positional(&eps_c)?.to_vec())
    })
}

fn one_run(
    name: String,
    prefix: &str,
    model_cfg: ModelConfig,
    sh: &Shared,
    out_dir: &Path,
    out: &mut dyn Write,
) -> CliResult<RunSummary> {
    let cfg = &sh.cfg;
    let (psi, _) = perceptual(None)?;
    let mut trainer = Trainer::new(model_cfg, cfg.clone(), psi)?;
    let (c, s) = &sh.sample;
    let init_check = init_matches(&trainer.model, c, s, sh.seed)?;
    if model_cfg.stylizer.out_embed == OutEmbedMode::Content && !init_check {
        return Err(CliError::Failed("content initialisation does not reproduce the content sequence".into()));
    }
    let _ = writeln!(out, "run={name}");
    let reports = trainer.train(&sh.data, cfg.total_iters, None, |r| {
        let _ = writeln!(out, "{}", r.tsv_row());
    })?;
    let pos_varies = positional(&trainer.model, c)? != positional(&trainer.model, &sh.other_content)?;

    let mut curve = loss_table(&reports).with_header(&sh.header);
    curve.meta("run", &name);
    curve.write(&out_dir.join(format!("{prefix}_{name}.tsv")))?;
    let img = stylize(&trainer.model, c, s, sh.seed)?;
    save_png(&out_dir.join(format!("{prefix}_{name}.png")), &img)?;
    Ok(RunSummary {
        name,
        reports,
        init_check,
        pos_varies,
    })
}

fn summary_table(runs: &[RunSummary], first_column: &str) -> Report {
    let mut r = Report::new(&[
        first_column,
        "steps",
        "final_content",
        "final_style",
        "final_total",
        "init_check",
        "pos_varies_with_content",
    ]);
    for run in runs {
        let last = run.reports.last();
        let pick = |f: fn(&LossReport) -> f32| last.map_or("nan".to_string(), |l| num(f(l)));
        r.row(vec![
            run.name.clone(),
            run.reports.len().to_string(),
            pick(|l| l.content),
            pick(|l| l.style),
            pick(|l| l.total),
            run.init_check.to_string(),
            run.pos_varies.to_string(),
        ]);
    }
    r
}

fn run_config(model: ModelConfig, cfg: &TrainConfig) -> serde_json::Value {
    serde_json::to_value(RunConfig {
        model,
        train: cfg.clone(),
    })
    .expect("serializable")
}

/// Identical short trainings, one per output-embedding initialisation.
pub fn run_init(a: &AblateInitArgs, out: &mut dyn Write) -> CliResult<Report> {
    if a.modes.is_empty() {
        return Err(CliError::Usage("no modes given".into()));
    }
    let r = &a.run;
    let base = model_config_from(r.width, r.heads, r.layers, PositionalEncoding::Cape, OutEmbedMode::Content)?;
    let mut sh = shared(r, &r.out)?;
    let mut header = config_header("ablate-init", sh.seed, run_config(base, &sh.cfg));
    header.push(kv("modes", a.modes.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")));
    echo(out, &header);
    sh.header = header.clone();
    let mut runs = Vec::new();
    for &mode in &a.modes {
        let mut mc = base;
        mc.stylizer.out_embed = mode;
        runs.push(one_run(mode.name().into(), "init", mc, &sh, &r.out, out)?);
    }
    let report = summary_table(&runs, "mode").with_header(&header);
    report.write(&r.out.join("ablate_init.tsv"))?;
    let _ = write!(out, "{}", report.render());
    Ok(report)
}

/// Identical short trainings with each positional encoding.
pub fn run_pe(a: &AblatePeArgs, out: &mut dyn Write) -> CliResult<Report> {
    if a.pe.is_empty() {
        return Err(CliError::Usage("no encodings given".into()));
    }
    let r = &a.run;
    let base = model_config_from(r.width, r.heads, r.layers, PositionalEncoding::Cape, OutEmbedMode::Content)?;
    let mut sh = shared(r, &r.out)?;
    let mut header = config_header("ablate-pe", sh.seed, run_config(base, &sh.cfg));
    header.push(kv("pe", a.pe.iter().map(|p| p.name()).collect::<Vec<_>>().join(",")));
    echo(out, &header);
    sh.header = header.clone();
    let mut runs = Vec::new();
    for &pe in &a.pe {
        let mut mc = base;
        mc.stylizer.positional = pe;
        runs.push(one_run(pe.name().into(), "pe", mc, &sh, &r.out, out)?);
    }
    let mut report = summary_table(&runs, "pe").with_header(&header);
    for run in &runs {
        let total = run.reports.last().map_or(f32::NAN, |l| l.total);
        report.meta(&format!("final_total_{}", run.name), num(total));
    }
    report.write(&r.out.join("ablate_pe.tsv"))?;
    let _ = write!(out, "{}", report.render());
    Ok(report)
}
