//! `kgfed evaluate` and the metric tables shared with `train`.

use std::fmt::Write as _;
use std::path::Path;

use kgfed::evaluation::{MetricsReport, Split};
use kgfed::federation::{Federation, View};

use crate::io::{write, RunDir};
use crate::{CliError, Result};

/// `view,client_id,split,hits1,hits3,hits10,mrr` with macro and micro rows,
/// metrics in percent.
pub fn metrics_csv(split: Split, reports: &[(View, MetricsReport)]) -> String {
    let mut out = String::from("view,client_id,split,hits1,hits3,hits10,mrr\n");
    for (view, r) in reports {
        let rows = r
            .clients
            .iter()
            .enumerate()
            .map(|(k, m)| (k.to_string(), m))
            .chain([("macro".to_owned(), &r.macro_avg), ("micro".to_owned(), &r.micro_avg)]);
        for (client, m) in rows {
            let [h1, h3, h10, mrr] = m.values().map(|v| 100.0 * v);
            let _ = writeln!(out, "{view},{client},{split},{h1:.4},{h3:.4},{h10:.4},{mrr:.4}");
        }
    }
    out
}

pub fn print_table(title: &str, reports: &[(View, MetricsReport)]) {
    println!("{title}");
    println!("  {:<8} {:>8} {:>8} {:>8} {:>8}", "view", "Hits@1", "Hits@3", "Hits@10", "MRR");
    for (view, r) in reports {
        let [h1, h3, h10, mrr] = r.macro_avg.values().map(|v| 100.0 * v);
        println!("  {:<8} {h1:>8.2} {h3:>8.2} {h10:>8.2} {mrr:>8.2}", view.to_string());
    }
}

pub fn report_all(fed: &Federation, split: Split) -> Result<Vec<(View, MetricsReport)>> {
    fed.mode.views().iter().map(|&v| Ok((v, fed.evaluate(v, split)?))).collect()
}

/// Rebuilds the run's federation and loads a saved state into it.
pub fn load(run: &RunDir, checkpoint: &Path) -> Result<Federation> {
    let c = &run.config;
    let mut fed = Federation::new(run.shards.clone(), run.vocab.entities.len(), c.round_config(), c.mode)?;
    fed.resume(checkpoint)?;
    Ok(fed)
}

pub fn run(run_dir: &Path, checkpoint: Option<&Path>, split: &str, out: Option<&Path>) -> Result<()> {
    let split: Split = split.parse().map_err(|_| CliError::Usage(format!("--split must be valid or test, got `{split}`")))?;
    if split == Split::Forget {
        return Err(CliError::Usage("forgetting sets are evaluated by `kgfed unlearn`".into()));
    }
    let run = RunDir::open(run_dir)?;
    let checkpoint = checkpoint.map_or_else(|| run.checkpoints(), Path::to_owned);
    let fed = load(&run, &checkpoint)?;
    let reports = report_all(&fed, split)?;
    print_table(&format!("{} {} ({split}, round {})", run.config.mode, run.config.model, fed.server.round), &reports);
    if let Some(out) = out {
        write(out, metrics_csv(split, &reports))?;
    }
    Ok(())
}
