//! Triple-level federated unlearning.
//!
//! A client forgets a subset of its training triples in two phases. The
//! interference phase treats the forgotten triples as negatives (hard
//! confusion) and pulls their scores toward those of their corruptions (soft
//! confusion), for both the local and the global table, each distilling
//! from the other. The decay phase then runs ordinary mutual distillation
//! over the retained triples to recover generalization. The server
//! aggregates the resulting global tables of the unlearning clients.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluation::{Metrics, MetricsReport, Split};
use crate::federation::{
    aggregate, distribute_avatar, for_each_batch, mutual_step, Batching, ClientShard, ClientState, Federation, Mode,
    Objective, RoundConfig, Scratch, StepSpec, View,
};
use crate::kg::Triple;
use crate::losses::{Interference, LossWeights, Provenance};
use crate::rng::{self, tag};

/// Forgetting and retaining sets per client, in local ids. Clients with an
/// empty forgetting set do not take part.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ForgetSpec {
    pub forget: Vec<Vec<Triple>>,
    pub retain: Vec<Vec<Triple>>,
}

impl ForgetSpec {
    /// Ids of the clients that unlearn.
    pub fn clients(&self) -> Vec<usize> {
        (0..self.forget.len()).filter(|&k| !self.forget[k].is_empty()).collect()
    }
}

/// `ceil(proportion * |train|)` triples drawn without replacement, and the
/// rest. Both keep the order of `train`.
pub fn sample_forget_set(train: &[Triple], proportion: f64, seed: u64) -> Result<(Vec<Triple>, Vec<Triple>)> {
    if !(proportion > 0.0 && proportion < 1.0) {
        return Err(Error::InvalidProportion(proportion));
    }
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let n = ((proportion * train.len() as f64).ceil() as usize).min(train.len());
    let mut picked = vec![false; train.len()];
    for i in index::sample(&mut rng::stream(seed, &[tag::FORGET]), train.len(), n) {
        picked[i] = true;
    }
    let (forget, retain): (Vec<_>, Vec<_>) = train.iter().zip(&picked).partition(|(_, &p)| p);
    Ok((forget.into_iter().map(|(t, _)| *t).collect(), retain.into_iter().map(|(t, _)| *t).collect()))
}

/// Forgetting sets for the listed clients; every other client keeps its
/// whole training set.
pub fn sample_forget_spec(shards: &[ClientShard], clients: &[usize], proportion: f64, seed: u64) -> Result<ForgetSpec> {
    let mut spec = ForgetSpec::default();
    for s in shards {
        if clients.contains(&s.id) {
            let (f, r) = sample_forget_set(&s.splits.train, proportion, rng::derive(seed, &[s.id as u64]))?;
            spec.forget.push(f);
            spec.retain.push(r);
        } else {
            spec.forget.push(Vec::new());
            spec.retain.push(s.splits.train.clone());
        }
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnlearnConfig {
    /// Interference epochs per round.
    pub interference_epochs: usize,
    /// Decay epochs per round.
    pub decay_epochs: usize,
    pub rounds: usize,
    pub weights: LossWeights,
    pub terms: Interference,
    pub batch_size: usize,
    pub negatives: usize,
    /// Adam learning rate while unlearning.
    pub lr: f64,
    /// Start unlearning from zeroed Adam moments instead of the ones left
    /// by training.
    pub reset_optimizer: bool,
    pub seed: u64,
}

impl UnlearnConfig {
    /// Unlearning settings taken from a training configuration.
    pub fn from_training(config: &RoundConfig) -> Self {
        Self {
            interference_epochs: 5,
            decay_epochs: 5,
            rounds: 1,
            weights: config.weights,
            terms: Interference::default(),
            batch_size: config.batch_size,
            negatives: config.negatives,
            lr: config.lr,
            reset_optimizer: false,
            seed: config.seed,
        }
    }

    fn batching(&self, epochs: usize, config: &RoundConfig) -> Batching {
        Batching { epochs, batch_size: self.batch_size, negatives: self.negatives, corruption: config.corruption }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rounds == 0 {
            out.push("unlearn_rounds must be at least 1".into());
        }
        if self.batch_size == 0 {
            out.push("unlearn_batch_size must be at least 1".into());
        }
        if self.negatives == 0 {
            out.push("unlearn negatives must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("unlearn_lr={} must be positive", self.lr));
        }
        out
    }
}

fn base_spec(config: &RoundConfig, weights: LossWeights, objective: Objective) -> StepSpec<'static> {
    StepSpec {
        scorer: config.scorer(),
        objective,
        weights,
        teacher: None,
        anchor: None,
        update_relation: config.relations_in_global_step,
        provenance: Provenance::Local,
    }
}

/// Confusion-loss descent over the forgetting set for both entity tables.
pub fn interference_step(
    client: &mut ClientState,
    forget: &[Triple],
    config: &RoundConfig,
    unlearn: &UnlearnConfig,
    round: usize,
) -> Result<()> {
    let mut r = rng::stream(unlearn.seed, &[tag::UNLEARN, client.shard.id as u64, round as u64, 0]);
    let spec = base_spec(config, unlearn.weights, Objective::Interfere(unlearn.terms));
    let mut scratch = client.scratch();
    let (shard, tables) = (&client.shard, &mut client.tables);
    for_each_batch(forget, shard, unlearn.batching(unlearn.interference_epochs, config), &mut r, |groups| {
        mutual_step(tables, groups, &spec, &mut scratch)
    })
}

/// Mutual distillation over the retaining set.
pub fn decay_step(
    client: &mut ClientState,
    retain: &[Triple],
    config: &RoundConfig,
    unlearn: &UnlearnConfig,
    round: usize,
) -> Result<()> {
    let mut r = rng::stream(unlearn.seed, &[tag::UNLEARN, client.shard.id as u64, round as u64, 1]);
    let spec = base_spec(config, unlearn.weights, Objective::Learn);
    let mut scratch: Scratch = client.scratch();
    let (shard, tables) = (&client.shard, &mut client.tables);
    for_each_batch(retain, shard, unlearn.batching(unlearn.decay_epochs, config), &mut r, |groups| {
        mutual_step(tables, groups, &spec, &mut scratch)
    })
}

/// Runs the unlearning rounds on a trained federation in place. Clients
/// outside the spec's unlearning set are not touched.
pub fn run_federated_unlearning(fed: &mut Federation, spec: &ForgetSpec, unlearn: &UnlearnConfig) -> Result<()> {
    if fed.mode != Mode::FedLU {
        return Err(Error::InvalidMode(format!("{} (unlearning needs fedlu tables)", fed.mode)));
    }
    let unlearning = spec.clients();
    if unlearning.is_empty() {
        return Err(Error::NoUnlearningClients);
    }
    if spec.forget.len() != fed.clients.len() {
        return Err(Error::Shape(format!("forget spec has {} clients, federation {}", spec.forget.len(), fed.clients.len())));
    }
    let config = fed.config;
    for &k in &unlearning {
        let tables = &mut fed.clients[k].tables;
        if unlearn.reset_optimizer {
            tables.reset_optimizers();
        }
        tables.set_lr(unlearn.lr);
    }
    for round in 0..unlearn.rounds {
        let global = &fed.server.global;
        let trained: Vec<(usize, EmbeddingTable)> = fed
            .clients
            .par_iter_mut()
            .enumerate()
            .filter(|(k, _)| unlearning.binary_search(k).is_ok())
            .map(|(k, c)| {
                c.tables.global_entity.table = distribute_avatar(global, &c.shard.entities);
                interference_step(c, &spec.forget[k], &config, unlearn, round)?;
                decay_step(c, &spec.retain[k], &config, unlearn, round)?;
                Ok((k, c.tables.global_entity.table.clone()))
            })
            .collect::<Result<_>>()?;
        let contributions: Vec<(&[u32], &EmbeddingTable)> =
            trained.iter().map(|(k, a)| (fed.clients[*k].shard.entities.as_slice(), a)).collect();
        fed.server.global = aggregate(&fed.server.global, &contributions);
        log::info!("unlearning round {} done for clients {:?}", round + 1, unlearning);
    }
    // Any later training continues at the training rate.
    for &k in &unlearning {
        fed.clients[k].tables.set_lr(config.lr);
    }
    Ok(())
}

/// Trains from scratch on shards whose training sets are the retaining
/// sets. Filters still contain the forgotten triples.
pub fn retrain_baseline(
    shards: &[ClientShard],
    entity_count: usize,
    spec: &ForgetSpec,
    config: RoundConfig,
    mode: Mode,
) -> Result<Federation> {
    let retained = shards.iter().zip(&spec.retain).map(|(s, r)| s.with_train(r.clone())).collect();
    crate::federation::run_federated_training(retained, entity_count, config, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Raw,
    Retrained,
    Unlearned,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Raw => "raw",
            Phase::Retrained => "retrained",
            Phase::Unlearned => "unlearned",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Phase::Raw),
            "retrained" => Ok(Phase::Retrained),
            "unlearned" => Ok(Phase::Unlearned),
            _ => Err(Error::Shape(format!("unknown phase `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub phase: Phase,
    pub view: View,
    pub split: Split,
    /// Per unlearning client, in the order of [`ForgetSpec::clients`].
    pub report: MetricsReport,
    pub clients: Vec<usize>,
}

/// Forget-set and test-set metrics of the unlearning clients.
pub fn measure(fed: &Federation, spec: &ForgetSpec, phase: Phase, view: View) -> Result<[ReportRow; 2]> {
    let clients = spec.clients();
    let per = |split: Split| -> Result<ReportRow> {
        let metrics = clients
            .iter()
            .map(|&k| {
                let triples = match split {
                    Split::Forget => &spec.forget[k],
                    _ => &fed.shards[k].splits.test,
                };
                fed.evaluate_client(k, view, triples)
            })
            .collect::<Result<Vec<Metrics>>>()?;
        Ok(ReportRow { phase, view, split, report: MetricsReport::new(metrics), clients: clients.clone() })
    };
    Ok([per(Split::Forget)?, per(Split::Test)?])
}

/// `phase,view,client_id,split,hits1,hits3,hits10,mrr`, metrics in percent.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("phase,view,client_id,split,hits1,hits3,hits10,mrr\n");
    for row in rows {
        let labelled = row
            .clients
            .iter()
            .map(|k| k.to_string())
            .zip(&row.report.clients)
            .chain(std::iter::once(("macro".to_owned(), &row.report.macro_avg)));
        for (client, m) in labelled {
            out += &format!(
                "{},{},{client},{},{:.4},{:.4},{:.4},{:.4}\n",
                row.phase,
                row.view,
                row.split,
                100.0 * m.hits1,
                100.0 * m.hits3,
                100.0 * m.hits10,
                100.0 * m.mrr
            );
        }
    }
    out
}
