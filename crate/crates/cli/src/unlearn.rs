//! `kgfed unlearn`

use std::path::{Path, PathBuf};

use kgfed::embedding::checkpoint::Manifest;
use kgfed::federation::{Mode, View};
use kgfed::unlearning::{measure, report_csv, retrain_baseline, run_federated_unlearning, sample_forget_spec, Phase, ReportRow};

use crate::evaluate::load;
use crate::io::{write, RunDir};
use crate::{CliError, ConfigArgs, Result};

pub struct Options {
    pub proportion: Option<f64>,
    pub seed: Option<u64>,
    pub clients: Option<Vec<usize>>,
    pub retrain: bool,
    pub out: Option<PathBuf>,
}

pub fn run(run_dir: &Path, args: &ConfigArgs, opts: Options) -> Result<()> {
    let run = RunDir::open(run_dir)?;
    if run.config.mode != Mode::FedLU {
        return Err(CliError::Usage(format!("unlearning needs a fedlu run, {} was trained with {}", run_dir.display(), run.config.mode)));
    }
    let mut config = args.resolve(Some(run.config.clone()))?;
    if let Some(p) = opts.proportion {
        config.forget_proportion = p;
    }
    if let Some(s) = opts.seed {
        config.seed = s;
    }
    config.validate()?;
    let k = run.shards.len();
    let clients = opts.clients.unwrap_or_else(|| (0..k).collect());
    if let Some(&bad) = clients.iter().find(|&&c| c >= k) {
        return Err(CliError::Usage(format!("--clients: no client {bad} (run has {k})")));
    }
    let out = opts.out.unwrap_or_else(|| run_dir.join("unlearn"));
    let manifest = Manifest { seed: config.seed, config_hash: config.hash() };

    let mut fed = load(&run, &run.checkpoints())?;
    let spec = sample_forget_spec(&run.shards, &clients, config.forget_proportion, config.seed)?;
    for &c in &spec.clients() {
        let shard = &run.shards[c];
        let global = |ts: &[kgfed::kg::Triple]| ts.iter().map(|&t| shard.to_global(t)).collect::<Vec<_>>();
        write(&out.join(format!("forget_client{c}.tsv")), run.vocab.render(&global(&spec.forget[c])))?;
        write(&out.join(format!("retain_client{c}.tsv")), run.vocab.render(&global(&spec.retain[c])))?;
    }

    let mut rows: Vec<ReportRow> = Vec::new();
    for view in [View::Local, View::Global] {
        rows.extend(measure(&fed, &spec, Phase::Raw, view)?);
    }
    if opts.retrain {
        let retrained = retrain_baseline(&run.shards, run.vocab.entities.len(), &spec, run.config.round_config(), Mode::FedLU)?;
        retrained.save(&out.join("retrained"), &manifest)?;
        for view in [View::Local, View::Global] {
            rows.extend(measure(&retrained, &spec, Phase::Retrained, view)?);
        }
    }
    run_federated_unlearning(&mut fed, &spec, &config.unlearn_config())?;
    fed.save(&out.join("unlearned"), &manifest)?;
    for view in [View::Local, View::Global] {
        rows.extend(measure(&fed, &spec, Phase::Unlearned, view)?);
    }
    write(&out.join("config.txt"), config.dump())?;
    write(&out.join("unlearn_report.csv"), report_csv(&rows))?;
    print_report(&rows);
    Ok(())
}

fn print_report(rows: &[ReportRow]) {
    for view in [View::Local, View::Global] {
        println!("{view} view, macro average over unlearning clients");
        println!("  {:<10} {:>9} {:>9} {:>9} {:>9}", "phase", "forget H1", "forget MRR", "test H1", "test MRR");
        for phase in [Phase::Raw, Phase::Retrained, Phase::Unlearned] {
            let pick = |split| rows.iter().find(|r| r.phase == phase && r.view == view && r.split == split);
            if let (Some(f), Some(t)) = (pick(kgfed::evaluation::Split::Forget), pick(kgfed::evaluation::Split::Test)) {
                let (f, t) = (&f.report.macro_avg, &t.report.macro_avg);
                println!(
                    "  {:<10} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
                    phase.to_string(),
                    100.0 * f.hits1,
                    100.0 * f.mrr,
                    100.0 * t.hits1,
                    100.0 * t.mrr
                );
            }
        }
    }
}
