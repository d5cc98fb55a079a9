use std::fs;
use std::io::Write;
use std::path::PathBuf;

use puffnet_core::imageio::{load_png, save_png};
use puffnet_core::losses::content_loss;
use puffnet_core::no_grad;
use puffnet_core::trainer::load_model;

use crate::args::RoundsArgs;
use crate::report::{num, Report};
use crate::setup::{config_header, perceptual, prepare_pair, resolve_seed, stylize};
use crate::{echo, kv, CliError, CliResult};

pub struct RoundsOutcome {
    pub images: Vec<PathBuf>,
    /// `L_c(round_k, I_c)` for `k = 1..=n`.
    pub content_losses: Vec<f32>,
    pub report: Report,
}

/// Stylizes, then feeds each saved output back in as the next content.
/// Every round reads the previous PNG, so round 1 matches `stylize`.
pub fn run(a: &RoundsArgs, out: &mut dyn Write) -> CliResult<RoundsOutcome> {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let seed = resolve_seed(&a.seed)?;
    let model = load_model(&a.ckpt)?;
    let (psi, psi_name) = perceptual(None)?;
    let mut header = config_header("rounds", seed, serde_json::to_value(model.config).expect("serializable"));
    header.push(kv("n", a.n));
    header.push(kv("content", a.content.display()));
    header.push(kv("style", a.style.display()));
    header.push(kv("ckpt", a.ckpt.display()));
    header.push(kv("psi", psi_name));
    echo(out, &header);
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;

    let (original, style) = prepare_pair(&a.content, &a.style)?;
    let mut report = Report::new(&["round", "file", "content_loss"]);
    let mut images = Vec::with_capacity(a.n);
    let mut content_losses = Vec::with_capacity(a.n);
    let mut current = original.clone();
    for k in 1..=a.n {
        let path = a.out.join(format!("round_{k:02}.png"));
        save_png(&path, &stylize(&model, &current, &style, seed)?)?;
        current = load_png(&path)?;
        let lc = no_grad(|| content_loss(&current, &original, &psi))?.item();
        let _ = writeln!(out, "round={k}\tcontent_loss={lc}");
        report.row(vec![k.to_string(), path.display().to_string(), num(lc)]);
        images.push(path);
        content_losses.push(lc);
    }
    let report = report.with_header(&header);
    report.write(&a.out.join("rounds.tsv"))?;
    Ok(RoundsOutcome {
        images,
        content_losses,
        report,
    })
}
