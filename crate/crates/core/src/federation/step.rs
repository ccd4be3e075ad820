//! Batch objectives over embedding tables and the optimizer steps built on
//! them. Shared by training and unlearning.

use rand::seq::SliceRandom;

use crate::embedding::{
    accumulate_gradients, adam_step, sample_negatives, AdamConfig, AdamState, Corruption, EmbeddingTable, Scorer,
    SparseGrad,
};
use crate::error::Result;
use crate::kg::Triple;
use crate::losses::{interference_loss, joint_local_loss, proximal_term, Interference, LossWeights, Provenance, ScoredBatch};
use crate::rng::Rng;

use super::ClientShard;

/// A table with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub table: EmbeddingTable,
    pub adam: AdamState,
}

impl Param {
    pub fn new(table: EmbeddingTable, config: AdamConfig) -> Self {
        let adam = AdamState::new(&table, config);
        Self { table, adam }
    }

    /// Zeroes the Adam moments and step counts.
    pub fn reset_optimizer(&mut self) {
        self.adam = AdamState::new(&self.table, self.adam.config);
    }
}

/// A positive triple with its sampled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Prediction loss, plus distillation when a teacher is given.
    Learn,
    /// Confusion losses on triples to forget, plus distillation.
    Interfere(Interference),
}

/// Everything besides the tables that defines one batch objective.
#[derive(Debug, Clone, Copy)]
pub struct StepSpec<'a> {
    pub scorer: Scorer,
    pub objective: Objective,
    pub weights: LossWeights,
    /// Entity table whose scores serve as the distillation target.
    pub teacher: Option<&'a EmbeddingTable>,
    /// Anchor of the proximal term.
    pub anchor: Option<&'a EmbeddingTable>,
    pub update_relation: bool,
    pub provenance: Provenance,
}

/// Reusable gradient buffers for one client.
#[derive(Debug, Clone)]
pub struct Scratch {
    pub entity: SparseGrad,
    pub relation: SparseGrad,
    gh: Vec<f64>,
    gr: Vec<f64>,
    gt: Vec<f64>,
}

impl Scratch {
    pub fn new(entities: &EmbeddingTable, relations: &EmbeddingTable) -> Self {
        Self {
            entity: SparseGrad::like(entities),
            relation: SparseGrad::like(relations),
            gh: vec![0.0; entities.width()],
            gr: vec![0.0; relations.width()],
            gt: vec![0.0; entities.width()],
        }
    }

    fn clear(&mut self) {
        self.entity.clear();
        self.relation.clear();
    }
}

fn logit(scorer: &Scorer, e: &EmbeddingTable, r: &EmbeddingTable, t: Triple) -> f64 {
    scorer.logit(e.row(t.head as usize), r.row(t.relation as usize), e.row(t.tail as usize))
}

pub fn score_group(scorer: &Scorer, e: &EmbeddingTable, r: &EmbeddingTable, g: &Group, provenance: Provenance) -> ScoredBatch {
    ScoredBatch {
        positive: logit(scorer, e, r, g.positive),
        negatives: g.negatives.iter().map(|&t| logit(scorer, e, r, t)).collect(),
        provenance,
    }
}

/// Mean objective over `groups`; gradients w.r.t. `entities` and
/// `relations` are left in `scratch` (which is cleared first).
pub fn batch_objective(
    entities: &EmbeddingTable,
    relations: &EmbeddingTable,
    groups: &[Group],
    spec: &StepSpec,
    scratch: &mut Scratch,
) -> Result<f64> {
    scratch.clear();
    if groups.is_empty() {
        return Ok(0.0);
    }
    let b = groups.len() as f64;
    let kind = spec.scorer.kind;
    let teacher = spec.teacher.filter(|_| spec.weights.distill != 0.0);
    let other_side = match spec.provenance {
        Provenance::Local => Provenance::Global,
        Provenance::Global => Provenance::Local,
    };
    let mut total = 0.0;
    for g in groups {
        let student = score_group(&spec.scorer, entities, relations, g, spec.provenance);
        let teacher = teacher.map(|t| score_group(&spec.scorer, t, relations, g, other_side));
        let loss = match spec.objective {
            Objective::Learn => joint_local_loss(&student, teacher.as_ref(), &spec.weights)?,
            Objective::Interfere(terms) => interference_loss(&student, teacher.as_ref(), &spec.weights, terms)?,
        };
        total += loss.value / b;
        let coeffs = std::iter::once(loss.grad.positive).chain(loss.grad.negatives.iter().copied());
        for (t, c) in std::iter::once(&g.positive).chain(&g.negatives).zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let (h, r, tl) = (t.head as usize, t.relation as usize, t.tail as usize);
            scratch.gh.fill(0.0);
            scratch.gr.fill(0.0);
            scratch.gt.fill(0.0);
            accumulate_gradients(
                kind,
                entities.row(h),
                relations.row(r),
                entities.row(tl),
                c / b,
                &mut scratch.gh,
                &mut scratch.gr,
                &mut scratch.gt,
            );
            scratch.entity.add(h, &scratch.gh);
            scratch.entity.add(tl, &scratch.gt);
            scratch.relation.add(r, &scratch.gr);
        }
    }
    if let Some(anchor) = spec.anchor {
        let rows = scratch.entity.touched();
        total += proximal_term(entities, anchor, &rows, spec.weights.prox, Some(&mut scratch.entity))?;
    }
    Ok(total)
}

/// One Adam step on `entity` (and `relation` when the spec allows it).
pub fn step(entity: &mut Param, relation: &mut Param, groups: &[Group], spec: &StepSpec, scratch: &mut Scratch) -> Result<f64> {
    let loss = batch_objective(&entity.table, &relation.table, groups, spec, scratch)?;
    adam_step(&mut entity.table, &scratch.entity, &mut entity.adam)?;
    if spec.update_relation {
        adam_step(&mut relation.table, &scratch.relation, &mut relation.adam)?;
    }
    Ok(loss)
}

/// Sampling parameters for [`for_each_batch`].
#[derive(Debug, Clone, Copy)]
pub struct Batching {
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub corruption: Corruption,
}

/// Runs `epochs` shuffled passes over `triples`, handing each batch (with
/// freshly sampled negatives) to `f`.
pub fn for_each_batch(
    triples: &[Triple],
    shard: &ClientShard,
    batching: Batching,
    rng: &mut Rng,
    mut f: impl FnMut(&[Group]) -> Result<()>,
) -> Result<()> {
    if triples.is_empty() {
        return Ok(());
    }
    let mut order: Vec<Triple> = triples.to_vec();
    for _ in 0..batching.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batching.batch_size.max(1)) {
            let groups = chunk
                .iter()
                .map(|&t| {
                    let negatives = sample_negatives(t, batching.negatives, &shard.known, &shard.pool, batching.corruption, rng)?;
                    Ok(Group { positive: t, negatives })
                })
                .collect::<Result<Vec<_>>>()?;
            f(&groups)?;
        }
    }
    Ok(())
}
