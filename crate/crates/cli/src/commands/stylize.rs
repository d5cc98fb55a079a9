use std::io::Write;

use puffnet_core::imageio::save_png;
use puffnet_core::trainer::load_model;

use crate::args::StylizeArgs;
use crate::setup::{config_header, prepare_pair, resolve_seed, stylize};
use crate::{echo, kv, CliResult};

pub fn run(a: &StylizeArgs, out: &mut dyn Write) -> CliResult<()> {
    let seed = resolve_seed(&a.seed)?;
    let model = load_model(&a.ckpt)?;
    let mut header = config_header("stylize", seed, serde_json::to_value(model.config).expect("serializable"));
    header.push(kv("content", a.content.display()));
    header.push(kv("style", a.style.display()));
    header.push(kv("ckpt", a.ckpt.display()));
    let (c, s) = prepare_pair(&a.content, &a.style)?;
    header.push(kv("size", format!("{}x{}", c.shape()[3], c.shape()[2])));
    echo(out, &header);
    let img = stylize(&model, &c, &s, seed)?;
    save_png(&a.out, &img)?;
    let _ = writeln!(out, "wrote={}", a.out.display());
    Ok(())
}
