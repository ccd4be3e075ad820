//! `kgfed train`

use kgfed::config::ExperimentConfig;
use kgfed::embedding::checkpoint::Manifest;
use kgfed::evaluation::Split;
use kgfed::federation::{build_shards, Federation};

use crate::evaluate::{metrics_csv, print_table, report_all};
use crate::io::{read_partition, write, RunDir};
use crate::Result;

pub fn run(config: &ExperimentConfig, resume: bool, snapshots: bool) -> Result<()> {
    config.validate()?;
    let out = &config.out_dir;
    let saved = out.join("checkpoints").join("progress.txt");
    let run = if resume && saved.exists() {
        let run = RunDir::open(out)?;
        if run.config.hash() != config.hash() {
            log::warn!("resuming with the configuration saved in {}", out.display());
        }
        run
    } else {
        let (vocab, graphs) = read_partition(&config.data_dir)?;
        let shards = build_shards(&graphs, config.seed)?;
        RunDir::create(out, config, vocab, shards)?
    };
    let config = &run.config;
    let manifest = Manifest { seed: config.seed, config_hash: config.hash() };
    let ckpt = run.checkpoints();

    let mut fed = Federation::new(run.shards.clone(), run.vocab.entities.len(), config.round_config(), config.mode)?;
    if resume && saved.exists() {
        fed.resume(&ckpt)?;
        log::info!("resumed at round {}", fed.server.round);
    }
    while !fed.finished() {
        let evaluated = fed.history.len();
        fed.run_round()?;
        if fed.history.len() > evaluated {
            fed.save(&ckpt, &manifest)?;
            if snapshots {
                fed.save(&ckpt.join("snapshots").join(format!("round{}", fed.server.round)), &manifest)?;
            }
        }
    }
    fed.restore_best();
    fed.save(&ckpt, &manifest)?;

    for &view in config.mode.views() {
        write(&out.join(format!("history_{view}.csv")), fed.history_csv(view))?;
    }
    let reports = report_all(&fed, Split::Test)?;
    write(&out.join("test_metrics.csv"), metrics_csv(Split::Test, &reports))?;
    let best = fed.best.as_ref().map_or(0, |b| b.round);
    print_table(&format!("{} {} test metrics (best round {best})", config.mode, config.model), &reports);
    Ok(())
}
