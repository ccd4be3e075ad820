//! Client/server simulation: entity mappings, avatar exchange, local rounds
//! with mutual distillation, aggregation, the baselines and early stopping.
//!
//! Every client keeps a local entity table, a relation table that never
//! leaves the client, and a global entity table (its "avatar" of the server
//! table). Per round the server sends each sampled client the rows of the
//! entities it holds, the client trains, and the server averages the returned
//! avatars entity by entity.

mod persist;
mod shard;
mod step;

pub use shard::ClientShard;
pub use step::{batch_objective, for_each_batch, score_group, step, Batching, Group, Objective, Param, Scratch, StepSpec};

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use crate::embedding::{init_table, AdamConfig, Corruption, EmbeddingTable, ModelKind, Role, Scorer};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Metrics, MetricsReport, ModelView, Split};
use crate::kg::SplitDataset;
use crate::losses::{LossWeights, Provenance};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    FedLU,
    FedE,
    FedProx,
    Independent,
    Centralized,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::FedLU, Mode::FedE, Mode::FedProx, Mode::Independent, Mode::Centralized];

    /// Views this mode is evaluated on; the first drives early stopping.
    pub fn views(self) -> &'static [View] {
        match self {
            Mode::FedLU => &[View::Local, View::Global],
            Mode::FedE | Mode::FedProx => &[View::Global],
            Mode::Independent | Mode::Centralized => &[View::Local],
        }
    }

    pub fn communicates(self) -> bool {
        matches!(self, Mode::FedLU | Mode::FedE | Mode::FedProx)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::FedLU => "fedlu",
            Mode::FedE => "fede",
            Mode::FedProx => "fedprox",
            Mode::Independent => "independent",
            Mode::Centralized => "centralized",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidMode(s.to_owned()))
    }
}

/// Which entity table a client is evaluated with. Both use the client's
/// relation table; the global view uses the server table's rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Local,
    Global,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Local => "local",
            View::Global => "global",
        })
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(View::Local),
            "global" => Ok(View::Global),
            _ => Err(Error::Shape(format!("unknown view `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    pub rounds: usize,
    pub fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub corruption: Corruption,
    pub weights: LossWeights,
    pub eval_interval: usize,
    pub patience: usize,
    pub seed: u64,
    /// Whether the global-table step of mutual distillation also updates
    /// the shared relation table. Without it, local tables with zero
    /// distillation weight train exactly like independent ones.
    pub relations_in_global_step: bool,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::TransE,
            dim: 256,
            margin: 9.0,
            lr: 1e-4,
            rounds: 100,
            fraction: 1.0,
            local_epochs: 3,
            batch_size: 1024,
            negatives: 256,
            corruption: Corruption::Tail,
            weights: LossWeights::default(),
            eval_interval: 5,
            patience: 3,
            seed: 0,
            relations_in_global_step: true,
        }
    }
}

impl RoundConfig {
    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dim == 0 || (self.model.is_complex() && self.dim % 2 != 0) {
            out.push(format!("dim={} is invalid for {}", self.dim, self.model));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            out.push(format!("fraction={} must lie in (0, 1]", self.fraction));
        }
        if self.local_epochs == 0 {
            out.push("local_epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        if self.negatives == 0 {
            out.push("negatives must be at least 1".into());
        }
        if self.eval_interval == 0 {
            out.push("eval_interval must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("lr={} must be positive", self.lr));
        }
        let w = self.weights;
        if [w.distill, w.soft, w.prox].iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            out.push("loss weights must be non-negative".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn scorer(&self) -> Scorer {
        Scorer::new(self.model, self.margin)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..Default::default() }
    }

    fn batching(&self, epochs: usize) -> Batching {
        Batching { epochs, batch_size: self.batch_size, negatives: self.negatives, corruption: self.corruption }
    }
}

/// Local -> global entity maps of all clients plus the number of clients
/// holding each global entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMapping {
    pub clients: Vec<Vec<u32>>,
    pub counts: Vec<u32>,
}

pub fn make_mappings(shards: &[ClientShard], entity_count: usize) -> EntityMapping {
    let mut counts = vec![0; entity_count];
    for s in shards {
        for &e in &s.entities {
            counts[e as usize] += 1;
        }
    }
    EntityMapping { clients: shards.iter().map(|s| s.entities.clone()).collect(), counts }
}

/// The rows of `global` a client holds, in its local order.
pub fn distribute_avatar(global: &EmbeddingTable, map: &[u32]) -> EmbeddingTable {
    global.gather(map)
}

/// Per-entity mean of the returned avatars. Entities no contributor holds
/// keep their row from `previous`.
pub fn aggregate(previous: &EmbeddingTable, contributions: &[(&[u32], &EmbeddingTable)]) -> EmbeddingTable {
    let mut next = previous.clone();
    let mut counts = vec![0u32; previous.rows()];
    for (map, avatar) in contributions {
        for (local, &g) in map.iter().enumerate() {
            let g = g as usize;
            let src = avatar.row(local);
            let dst = next.row_mut(g);
            if counts[g] == 0 {
                dst.copy_from_slice(src);
            } else {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
            counts[g] += 1;
        }
    }
    for (g, &c) in counts.iter().enumerate() {
        if c > 1 {
            let inv = c as f64;
            next.row_mut(g).iter_mut().for_each(|x| *x /= inv);
        }
    }
    next
}

/// `max(1, round(fraction * k))` distinct clients, ascending.
pub fn sample_clients(k: usize, fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    let m = ((fraction * k as f64).round() as usize).clamp(1, k.max(1)).min(k);
    if m == k {
        return (0..k).collect();
    }
    let mut r = rng::stream(seed, &[tag::SAMPLE_CLIENTS, round as u64]);
    let mut picked = index::sample(&mut r, k, m).into_vec();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientTables {
    pub local_entity: Param,
    pub relation: Param,
    pub global_entity: Param,
}

impl ClientTables {
    pub fn set_lr(&mut self, lr: f64) {
        for p in [&mut self.local_entity, &mut self.relation, &mut self.global_entity] {
            p.adam.config.lr = lr;
        }
    }

    pub fn reset_optimizers(&mut self) {
        self.local_entity.reset_optimizer();
        self.relation.reset_optimizer();
        self.global_entity.reset_optimizer();
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub shard: ClientShard,
    pub tables: ClientTables,
}

impl ClientState {
    /// Both entity tables start as the client's rows of `global`.
    pub fn new(shard: ClientShard, global: &EmbeddingTable, config: &RoundConfig) -> Result<Self> {
        let projected = distribute_avatar(global, &shard.entities);
        let seed = rng::derive(config.seed, &[tag::INIT, shard.id as u64]);
        let relation = init_table(shard.relations.len(), config.model, Role::Relation, config.dim, seed)?;
        let adam = config.adam();
        let tables = ClientTables {
            local_entity: Param::new(projected.clone(), adam),
            relation: Param::new(relation, adam),
            global_entity: Param::new(projected, adam),
        };
        Ok(Self { shard, tables })
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::new(&self.tables.local_entity.table, &self.tables.relation.table)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub global: EmbeddingTable,
    pub round: usize,
}

/// One round of client-side training. For modes that communicate, the
/// avatar replaces the client's global table first and the trained global
/// table is returned.
pub fn local_round(
    client: &mut ClientState,
    avatar: Option<EmbeddingTable>,
    config: &RoundConfig,
    mode: Mode,
    round: usize,
) -> Result<EmbeddingTable> {
    let t = &mut client.tables;
    if let Some(avatar) = avatar {
        if !avatar.same_shape(&t.global_entity.table) {
            return Err(Error::Shape("avatar does not match the client's entity count".into()));
        }
        t.global_entity.table = avatar;
    }
    let anchor = (mode == Mode::FedProx).then(|| t.global_entity.table.clone());
    let mut scratch = Scratch::new(&t.local_entity.table, &t.relation.table);
    let mut r = rng::stream(config.seed, &[tag::TRAIN, client.shard.id as u64, round as u64]);
    let base = StepSpec {
        scorer: config.scorer(),
        objective: Objective::Learn,
        weights: config.weights,
        teacher: None,
        anchor: None,
        update_relation: true,
        provenance: Provenance::Local,
    };
    let shard = &client.shard;
    for_each_batch(&shard.splits.train, shard, config.batching(config.local_epochs), &mut r, |groups| {
        match mode {
            Mode::FedLU => {
                let spec = StepSpec { update_relation: config.relations_in_global_step, ..base };
                mutual_step(t, groups, &spec, &mut scratch)
            }
            Mode::FedE | Mode::FedProx => {
                let spec = StepSpec { anchor: anchor.as_ref(), provenance: Provenance::Global, ..base };
                step(&mut t.global_entity, &mut t.relation, groups, &spec, &mut scratch).map(drop)
            }
            Mode::Independent | Mode::Centralized => {
                step(&mut t.local_entity, &mut t.relation, groups, &base, &mut scratch).map(drop)
            }
        }
    })?;
    Ok(t.global_entity.table.clone())
}

/// The local table (and relations) learn with the global table as teacher,
/// then the global table learns with the updated local table as teacher.
/// `base.update_relation` decides whether the second step moves the
/// relations too.
pub fn mutual_step(t: &mut ClientTables, groups: &[Group], base: &StepSpec, scratch: &mut Scratch) -> Result<()> {
    let local = StepSpec {
        teacher: Some(&t.global_entity.table),
        update_relation: true,
        provenance: Provenance::Local,
        ..*base
    };
    step(&mut t.local_entity, &mut t.relation, groups, &local, scratch)?;
    let global = StepSpec {
        teacher: Some(&t.local_entity.table),
        update_relation: base.update_relation,
        provenance: Provenance::Global,
        ..*base
    };
    step(&mut t.global_entity, &mut t.relation, groups, &global, scratch)?;
    Ok(())
}

/// One evaluated row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub round: usize,
    pub view: View,
    /// `None` for the macro average.
    pub client: Option<usize>,
    pub split: Split,
    pub metrics: Metrics,
}

/// Tables of the best evaluation so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub round: usize,
    pub mrr: f64,
    pub global: EmbeddingTable,
    pub clients: Vec<ClientTables>,
}

/// A training run that can be advanced round by round, saved and resumed.
#[derive(Debug, Clone)]
pub struct Federation {
    pub mode: Mode,
    pub config: RoundConfig,
    pub mapping: EntityMapping,
    /// The shards metrics are reported for.
    pub shards: Vec<ClientShard>,
    pub server: ServerState,
    /// One per shard, or a single client over the union when centralized.
    pub clients: Vec<ClientState>,
    pub history: Vec<HistoryRow>,
    pub best: Option<Snapshot>,
    pub bad_evals: usize,
    pub stopped: bool,
}

impl Federation {
    pub fn new(shards: Vec<ClientShard>, entity_count: usize, config: RoundConfig, mode: Mode) -> Result<Self> {
        config.validate()?;
        let global = init_table(entity_count, config.model, Role::Entity, config.dim, config.seed)?;
        let clients = if mode == Mode::Centralized {
            let union = SplitDataset {
                train: shards.iter().flat_map(|s| s.global_splits().train).collect(),
                valid: shards.iter().flat_map(|s| s.global_splits().valid).collect(),
                test: shards.iter().flat_map(|s| s.global_splits().test).collect(),
            };
            vec![ClientState::new(ClientShard::new(0, &union), &global, &config)?]
        } else {
            shards.iter().map(|s| ClientState::new(s.clone(), &global, &config)).collect::<Result<_>>()?
        };
        Ok(Self {
            mode,
            config,
            mapping: make_mappings(&shards, entity_count),
            shards,
            server: ServerState { global, round: 0 },
            clients,
            history: Vec::new(),
            best: None,
            bad_evals: 0,
            stopped: false,
        })
    }

    pub fn finished(&self) -> bool {
        self.stopped || self.server.round >= self.config.rounds
    }

    /// Trains one round and evaluates when the interval (or the last round)
    /// is reached.
    pub fn run_round(&mut self) -> Result<()> {
        let t = self.server.round;
        let sampled = if self.mode.communicates() {
            sample_clients(self.clients.len(), self.config.fraction, self.config.seed, t)
        } else {
            (0..self.clients.len()).collect()
        };
        let (config, mode, global) = (&self.config, self.mode, &self.server.global);
        let trained: Vec<(usize, EmbeddingTable)> = self
            .clients
            .par_iter_mut()
            .enumerate()
            .filter(|(k, _)| sampled.binary_search(k).is_ok())
            .map(|(k, c)| {
                let avatar = mode.communicates().then(|| distribute_avatar(global, &c.shard.entities));
                Ok((k, local_round(c, avatar, config, mode, t)?))
            })
            .collect::<Result<_>>()?;
        if mode.communicates() {
            let contributions: Vec<(&[u32], &EmbeddingTable)> =
                trained.iter().map(|(k, a)| (self.clients[*k].shard.entities.as_slice(), a)).collect();
            self.server.global = aggregate(&self.server.global, &contributions);
        }
        self.server.round = t + 1;
        log::debug!("{} round {} done ({} clients)", self.mode, t + 1, sampled.len());
        if self.server.round % self.config.eval_interval == 0 || self.server.round == self.config.rounds {
            self.checkpoint_eval()?;
        }
        Ok(())
    }

    fn checkpoint_eval(&mut self) -> Result<()> {
        let round = self.server.round;
        // Selection uses the mean over the views the mode reports.
        let views = self.mode.views();
        let mut mrr = 0.0;
        for &view in views {
            let report = self.evaluate(view, Split::Valid)?;
            mrr += report.macro_avg.mrr / views.len() as f64;
            self.record(round, view, Split::Valid, &report);
        }
        log::info!("{} round {round}: valid macro MRR {:.4}", self.mode, mrr);
        if self.best.as_ref().is_none_or(|b| mrr > b.mrr) {
            self.best = Some(Snapshot {
                round,
                mrr,
                global: self.server.global.clone(),
                clients: self.clients.iter().map(|c| c.tables.clone()).collect(),
            });
            self.bad_evals = 0;
        } else {
            self.bad_evals += 1;
            if self.bad_evals >= self.config.patience {
                log::info!("{} stopping early at round {round}", self.mode);
                self.stopped = true;
            }
        }
        Ok(())
    }

    pub fn record(&mut self, round: usize, view: View, split: Split, report: &MetricsReport) {
        for (k, m) in report.clients.iter().enumerate() {
            self.history.push(HistoryRow { round, view, client: Some(k), split, metrics: *m });
        }
        self.history.push(HistoryRow { round, view, client: None, split, metrics: report.macro_avg });
    }

    /// Runs the remaining rounds and restores the best evaluated tables.
    pub fn run(&mut self) -> Result<()> {
        while !self.finished() {
            self.run_round()?;
        }
        self.restore_best();
        Ok(())
    }

    pub fn restore_best(&mut self) {
        if let Some(best) = &self.best {
            self.server.global = best.global.clone();
            for (c, tables) in self.clients.iter_mut().zip(&best.clients) {
                c.tables = tables.clone();
            }
        }
    }

    /// Entity and relation tables shard `k` is evaluated with.
    pub fn client_tables(&self, k: usize, view: View) -> (EmbeddingTable, EmbeddingTable) {
        let shard = &self.shards[k];
        if self.mode == Mode::Centralized {
            let c = &self.clients[0];
            let ents: Vec<u32> = shard.entities.iter().map(|&g| c.shard.local_entity(g).unwrap()).collect();
            let rels: Vec<u32> = shard.relations.iter().map(|&g| c.shard.local_relation(g).unwrap()).collect();
            return (c.tables.local_entity.table.gather(&ents), c.tables.relation.table.gather(&rels));
        }
        let c = &self.clients[k];
        let entities = match view {
            View::Local => c.tables.local_entity.table.clone(),
            View::Global => distribute_avatar(&self.server.global, &shard.entities),
        };
        (entities, c.tables.relation.table.clone())
    }

    pub fn evaluate(&self, view: View, split: Split) -> Result<MetricsReport> {
        let per_client = (0..self.shards.len())
            .map(|k| {
                let shard = &self.shards[k];
                let triples = match split {
                    Split::Valid => &shard.splits.valid,
                    Split::Test => &shard.splits.test,
                    Split::Forget => return Err(Error::Shape("no forgetting set during training".into())),
                };
                self.evaluate_client(k, view, triples)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricsReport::new(per_client))
    }

    /// Metrics of shard `k` on arbitrary triples (local ids).
    pub fn evaluate_client(&self, k: usize, view: View, triples: &[crate::kg::Triple]) -> Result<Metrics> {
        let (entities, relations) = self.client_tables(k, view);
        let v = ModelView { kind: self.config.model, entities: &entities, relations: &relations };
        let shard = &self.shards[k];
        evaluate(&v, triples, &shard.pool, &shard.filter)
    }

    /// History rows of one view as CSV, metrics scaled to percent.
    pub fn history_csv(&self, view: View) -> String {
        history_csv(self.history.iter().filter(|r| r.view == view))
    }
}

pub fn history_csv<'a>(rows: impl Iterator<Item = &'a HistoryRow>) -> String {
    let mut out = String::from("round,client_id,split,hits1,hits3,hits10,mrr\n");
    for r in rows {
        let client = r.client.map_or("macro".to_owned(), |k| k.to_string());
        let m = r.metrics;
        out += &format!(
            "{},{client},{},{:.4},{:.4},{:.4},{:.4}\n",
            r.round,
            r.split,
            100.0 * m.hits1,
            100.0 * m.hits3,
            100.0 * m.hits10,
            100.0 * m.mrr
        );
    }
    out
}

/// Builds client shards from per-client graphs split 8:1:1.
pub fn build_shards(graphs: &[crate::kg::KnowledgeGraph], seed: u64) -> Result<Vec<ClientShard>> {
    graphs
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let splits = crate::kg::split_dataset(g, (8, 1, 1), rng::derive(seed, &[k as u64]))?;
            Ok(ClientShard::new(k, &splits))
        })
        .collect()
}

/// Trains from scratch to completion.
pub fn run_federated_training(
    shards: Vec<ClientShard>,
    entity_count: usize,
    config: RoundConfig,
    mode: Mode,
) -> Result<Federation> {
    let mut fed = Federation::new(shards, entity_count, config, mode)?;
    fed.run()?;
    Ok(fed)
}
