//! Saving and resuming a [`Federation`].
//!
//! ```text
//! <dir>/progress.txt              round, early-stopping counters
//! <dir>/history.txt               exact history rows
//! <dir>/server.emb                global entity table
//! <dir>/client<k>/{local_entity,relation,global_entity}.emb
//! <dir>/best/...                  same layout for the best evaluation
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{ClientTables, Federation, HistoryRow, Param, Snapshot};
use crate::embedding::checkpoint::{self, Manifest};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluation::Metrics;

fn write_tables(dir: &Path, global: &EmbeddingTable, clients: &[ClientTables], manifest: &Manifest) -> Result<()> {
    checkpoint::write(&dir.join("server.emb"), global, None, manifest)?;
    for (k, c) in clients.iter().enumerate() {
        let cdir = dir.join(format!("client{k}"));
        for (name, p) in [("local_entity", &c.local_entity), ("relation", &c.relation), ("global_entity", &c.global_entity)] {
            checkpoint::write(&cdir.join(format!("{name}.emb")), &p.table, Some(&p.adam), manifest)?;
        }
    }
    Ok(())
}

fn read_param(path: &Path, expected: &Param) -> Result<Param> {
    let (table, adam) = checkpoint::read(path)?;
    let bad = |reason: &str| Error::Checkpoint { path: path.to_owned(), reason: reason.into() };
    if !table.same_shape(&expected.table) || table.kind != expected.table.kind {
        return Err(bad("table shape does not match the shard"));
    }
    Ok(Param { table, adam: adam.ok_or_else(|| bad("missing optimizer state"))? })
}

fn read_tables(dir: &Path, like: &Federation) -> Result<(EmbeddingTable, Vec<ClientTables>)> {
    let path = dir.join("server.emb");
    let (global, _) = checkpoint::read(&path)?;
    if !global.same_shape(&like.server.global) {
        return Err(Error::Checkpoint { path, reason: "global table shape mismatch".into() });
    }
    let clients = like
        .clients
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let cdir = dir.join(format!("client{k}"));
            Ok(ClientTables {
                local_entity: read_param(&cdir.join("local_entity.emb"), &c.tables.local_entity)?,
                relation: read_param(&cdir.join("relation.emb"), &c.tables.relation)?,
                global_entity: read_param(&cdir.join("global_entity.emb"), &c.tables.global_entity)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((global, clients))
}

fn history_text(rows: &[HistoryRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let m = r.metrics;
        let client = r.client.map_or("macro".to_owned(), |k| k.to_string());
        out += &format!(
            "{} {} {client} {} {} {} {} {} {}\n",
            r.round, r.view, r.split, m.hits1, m.hits3, m.hits10, m.mrr, m.queries
        );
    }
    out
}

fn parse_history(text: &str, path: &Path) -> Result<Vec<HistoryRow>> {
    let bad = |line: usize| Error::Checkpoint { path: path.to_owned(), reason: format!("bad history line {line}") };
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 9 {
                return Err(bad(i + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1));
            Ok(HistoryRow {
                round: f[0].parse().map_err(|_| bad(i + 1))?,
                view: f[1].parse()?,
                client: if f[2] == "macro" { None } else { Some(f[2].parse().map_err(|_| bad(i + 1))?) },
                split: f[3].parse()?,
                metrics: Metrics {
                    hits1: num(f[4])?,
                    hits3: num(f[5])?,
                    hits10: num(f[6])?,
                    mrr: num(f[7])?,
                    queries: f[8].parse().map_err(|_| bad(i + 1))?,
                },
            })
        })
        .collect()
}

impl Federation {
    /// Writes the current state, the best snapshot and the history.
    pub fn save(&self, dir: &Path, manifest: &Manifest) -> Result<()> {
        fs::create_dir_all(dir)?;
        let current: Vec<ClientTables> = self.clients.iter().map(|c| c.tables.clone()).collect();
        write_tables(dir, &self.server.global, &current, manifest)?;
        let mut progress = format!(
            "mode={}\nround={}\nbad_evals={}\nstopped={}\n",
            self.mode, self.server.round, self.bad_evals, self.stopped
        );
        let best_dir = dir.join("best");
        if let Some(best) = &self.best {
            progress += &format!("best_round={}\nbest_mrr={}\n", best.round, best.mrr);
            write_tables(&best_dir, &best.global, &best.clients, manifest)?;
        } else if best_dir.exists() {
            fs::remove_dir_all(&best_dir)?;
        }
        fs::write(dir.join("progress.txt"), progress)?;
        fs::write(dir.join("history.txt"), history_text(&self.history))?;
        Ok(())
    }

    /// Replaces this (freshly built) federation's state with the one saved
    /// in `dir`. Shards, mode and config must match the saved run.
    pub fn resume(&mut self, dir: &Path) -> Result<()> {
        let path = dir.join("progress.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::Checkpoint { path: path.clone(), reason: e.to_string() })?;
        let kv: HashMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
        let bad = |key: &str| Error::Checkpoint { path: path.clone(), reason: format!("missing or invalid `{key}`") };
        let get = |key: &str| kv.get(key).copied().ok_or_else(|| bad(key));
        if get("mode")? != self.mode.to_string() {
            return Err(Error::Checkpoint { path: path.clone(), reason: "saved with a different mode".into() });
        }
        let round: usize = get("round")?.parse().map_err(|_| bad("round"))?;
        let bad_evals: usize = get("bad_evals")?.parse().map_err(|_| bad("bad_evals"))?;
        let stopped: bool = get("stopped")?.parse().map_err(|_| bad("stopped"))?;
        let best = match kv.get("best_round") {
            Some(r) => {
                let (global, clients) = read_tables(&dir.join("best"), self)?;
                Some(Snapshot {
                    round: r.parse().map_err(|_| bad("best_round"))?,
                    mrr: get("best_mrr")?.parse().map_err(|_| bad("best_mrr"))?,
                    global,
                    clients,
                })
            }
            None => None,
        };
        let (global, clients) = read_tables(dir, self)?;
        let hpath = dir.join("history.txt");
        let history = parse_history(&fs::read_to_string(&hpath)?, &hpath)?;

        self.server.global = global;
        self.server.round = round;
        for (c, tables) in self.clients.iter_mut().zip(clients) {
            c.tables = tables;
        }
        self.best = best;
        self.bad_evals = bad_evals;
        self.stopped = stopped;
        self.history = history;
        Ok(())
    }
}
