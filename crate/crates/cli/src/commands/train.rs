use std::fs;
use std::io::Write;
use std::path::PathBuf;

use puffnet_core::trainer::RunConfig;
use puffnet_core::{LossReport, Trainer};

use crate::args::TrainArgs;
use crate::report::{num, Report};
use crate::setup::{config_header, dataset, model_config, perceptual, resolve_seed, train_config};
use crate::{echo, kv, CliError, CliResult};

pub struct TrainOutcome {
    pub reports: Vec<LossReport>,
    pub final_checkpoint: PathBuf,
}

pub fn loss_table(reports: &[LossReport]) -> Report {
    let mut r = Report::new(&["step", "lr", "content", "style", "extractor", "id1", "id2", "total"]);
    for l in reports {
        let mut row = vec![l.step.to_string(), num(l.lr)];
        row.extend(l.components().iter().map(|&v| num(v)));
        row.push(num(l.total));
        r.row(row);
    }
    r
}

pub fn run(a: &TrainArgs, out: &mut dyn Write) -> CliResult<TrainOutcome> {
    let (psi, psi_name) = perceptual(None)?;
    let mut trainer = match &a.resume {
        Some(path) => Trainer::resume(path, psi)?,
        None => {
            let seed = resolve_seed(&a.seed)?;
            let cfg = train_config(&a.data, a.iters, seed, a.checkpoint_every)?;
            Trainer::new(model_config(&a.model)?, cfg, psi)?
        }
    };
    let run_cfg: RunConfig = trainer.run_config();
    let mut header = config_header("train", run_cfg.train.seed, serde_json::to_value(&run_cfg).expect("serializable"));
    header.push(kv("psi", &psi_name));
    header.push(kv("data", if run_cfg.train.content_dir.is_some() { "dirs" } else { "synthetic" }));
    header.push(kv("start_step", trainer.step));
    echo(out, &header);

    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let data = dataset(&trainer.config)?;
    let until = trainer.config.total_iters;
    let reports = trainer.train(&data, until, Some(&a.out), |r| {
        let _ = writeln!(out, "{}", r.tsv_row());
    })?;
    let final_checkpoint = a.out.join("final.puff");
    trainer.save(&final_checkpoint)?;
    loss_table(&reports).with_header(&header).write(&a.out.join("losses.tsv"))?;
    let _ = writeln!(out, "checkpoint={}", final_checkpoint.display());
    Ok(TrainOutcome {
        reports,
        final_checkpoint,
    })
}
