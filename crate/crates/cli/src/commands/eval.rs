use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use puffnet_core::losses::{content_loss, style_loss};
use puffnet_core::trainer::load_model;
use puffnet_core::{no_grad, PerceptualNet, PuffNetModel, Tensor};

use crate::args::EvalArgs;
use crate::report::{num, Report};
use crate::setup::{config_header, perceptual, prepare_pair, resolve_seed, stylize};
use crate::{echo, kv, CliError, CliResult};

/// Anything that turns a (content, style) pair into an output image.
pub trait Stylize {
    fn stylize(&self, content: &Tensor, style: &Tensor) -> CliResult<Tensor>;
}

pub struct ModelStylizer {
    pub model: PuffNetModel,
    pub seed: u64,
}

impl Stylize for ModelStylizer {
    fn stylize(&self, content: &Tensor, style: &Tensor) -> CliResult<Tensor> {
        stylize(&self.model, content, style, self.seed)
    }
}

/// Returns the content unchanged.
pub struct IdentityStylizer;

impl Stylize for IdentityStylizer {
    fn stylize(&self, content: &Tensor, _style: &Tensor) -> CliResult<Tensor> {
        Ok(content.clone())
    }
}

/// `(content, style)` paths, one tab-separated pair per non-blank line.
/// Lines starting with `#` are skipped.
pub fn read_manifest(path: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (c, s) = line.split_once('\t').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected `content<TAB>style`", path.display(), i + 1))
        })?;
        pairs.push((base.join(c.trim()), base.join(s.trim())));
    }
    if pairs.is_empty() {
        return Err(CliError::Usage(format!("{}: no pairs", path.display())));
    }
    Ok(pairs)
}

/// One row per pair plus a final `mean` row.
pub fn evaluate(
    stylizer: &impl Stylize,
    pairs: &[(PathBuf, PathBuf)],
    psi: &PerceptualNet,
) -> CliResult<Report> {
    let mut r = Report::new(&["pair", "content", "style", "content_loss", "style_loss"]);
    let (mut sum_c, mut sum_s) = (0.0f64, 0.0f64);
    for (i, (cp, sp)) in pairs.iter().enumerate() {
        for p in [cp, sp] {
            if !p.exists() {
                return Err(CliError::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "missing image")));
            }
        }
        let (c, s) = prepare_pair(cp, sp)?;
        let out = stylizer.stylize(&c, &s)?;
        let (lc, ls) = no_grad(|| -> CliResult<(f32, f32)> {
            Ok((content_loss(&out, &c, psi)?.item(), style_loss(&out, &s, psi)?.item()))
        })?;
        sum_c += f64::from(lc);
        sum_s += f64::from(ls);
        r.row(vec![
            i.to_string(),
            cp.display().to_string(),
            sp.display().to_string(),
            num(lc),
            num(ls),
        ]);
    }
    let n = pairs.len() as f64;
    r.row(vec!["mean".into(), "-".into(), "-".into(), num(sum_c / n), num(sum_s / n)]);
    Ok(r)
}

pub fn run(a: &EvalArgs, out: &mut dyn Write) -> CliResult<Report> {
    let seed = resolve_seed(&a.seed)?;
    let pairs = read_manifest(&a.pairs)?;
    let model = load_model(&a.ckpt)?;
    let (psi, psi_name) = perceptual(a.psi.as_deref())?;
    let mut header = config_header("eval", seed, serde_json::to_value(model.config).expect("serializable"));
    header.push(kv("pairs", a.pairs.display()));
    header.push(kv("ckpt", a.ckpt.display()));
    header.push(kv("psi", psi_name));
    echo(out, &header);
    let report = evaluate(&ModelStylizer { model, seed }, &pairs, &psi)?.with_header(&header);
    report.write(&a.out)?;
    let _ = writeln!(out, "wrote={}", a.out.display());
    Ok(report)
}
