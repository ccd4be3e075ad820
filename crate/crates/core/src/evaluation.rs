//! Filtered link-prediction ranking and Hits@N / MRR aggregation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::embedding::{score, EmbeddingTable, ModelKind};
use crate::error::{Error, Result};
use crate::kg::{FilterIndex, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Head,
    Tail,
}

/// Which triples a metric row was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Valid,
    Test,
    Forget,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Forget => "forget",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "forget" => Ok(Split::Forget),
            _ => Err(Error::Shape(format!("unknown split `{s}`"))),
        }
    }
}

/// The tables one evaluation reads from.
#[derive(Debug, Clone, Copy)]
pub struct ModelView<'a> {
    pub kind: ModelKind,
    pub entities: &'a EmbeddingTable,
    pub relations: &'a EmbeddingTable,
}

impl ModelView<'_> {
    fn score(&self, t: Triple) -> f64 {
        score(
            self.kind,
            self.entities.row(t.head as usize),
            self.relations.row(t.relation as usize),
            self.entities.row(t.tail as usize),
        )
    }
}

/// `1 + #higher + floor(#ties / 2)`, ties counted among the other scores.
pub fn rank_from_scores(answer: f64, others: impl IntoIterator<Item = f64>) -> usize {
    let (mut higher, mut ties) = (0, 0);
    for s in others {
        if s > answer {
            higher += 1;
        } else if s == answer {
            ties += 1;
        }
    }
    1 + higher + ties / 2
}

/// Filtered rank of the true answer of `triple` among `candidates`.
/// Candidates that form another known triple are skipped.
pub fn rank_query(
    view: &ModelView,
    triple: Triple,
    direction: Direction,
    candidates: &[u32],
    filter: &FilterIndex,
) -> Result<usize> {
    let answer = match direction {
        Direction::Head => triple.head,
        Direction::Tail => triple.tail,
    };
    if !candidates.contains(&answer) {
        return Err(Error::MissingAnswer(answer));
    }
    let known = match direction {
        Direction::Head => filter.heads(triple.relation, triple.tail),
        Direction::Tail => filter.tails(triple.head, triple.relation),
    };
    let substitute = |e: u32| match direction {
        Direction::Head => Triple { head: e, ..triple },
        Direction::Tail => Triple { tail: e, ..triple },
    };
    let others = candidates
        .iter()
        .filter(|&&e| e != answer && known.binary_search(&e).is_err())
        .map(|&e| view.score(substitute(e)));
    Ok(rank_from_scores(view.score(triple), others))
}

/// Hits@N and MRR as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mrr: f64,
    pub queries: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        if ranks.is_empty() {
            return Self::default();
        }
        let n = ranks.len() as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Self {
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            queries: ranks.len(),
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.hits1, self.hits3, self.hits10, self.mrr]
    }
}

/// Ranks head and tail queries for every triple in `test`.
pub fn evaluate(view: &ModelView, test: &[Triple], candidates: &[u32], filter: &FilterIndex) -> Result<Metrics> {
    let ranks: Vec<[usize; 2]> = test
        .par_iter()
        .map(|&t| {
            Ok([
                rank_query(view, t, Direction::Head, candidates, filter)?,
                rank_query(view, t, Direction::Tail, candidates, filter)?,
            ])
        })
        .collect::<Result<_>>()?;
    Ok(Metrics::from_ranks(ranks.as_flattened()))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub clients: Vec<Metrics>,
    /// Unweighted mean over clients.
    pub macro_avg: Metrics,
    /// Mean over all queries of all clients.
    pub micro_avg: Metrics,
}

impl MetricsReport {
    pub fn new(clients: Vec<Metrics>) -> Self {
        let k = clients.len().max(1) as f64;
        let total: usize = clients.iter().map(|m| m.queries).sum();
        let mut macro_avg = Metrics { queries: total, ..Default::default() };
        let mut micro_avg = macro_avg;
        for m in &clients {
            let w = if total == 0 { 0.0 } else { m.queries as f64 / total as f64 };
            macro_avg.hits1 += m.hits1 / k;
            macro_avg.hits3 += m.hits3 / k;
            macro_avg.hits10 += m.hits10 / k;
            macro_avg.mrr += m.mrr / k;
            micro_avg.hits1 += m.hits1 * w;
            micro_avg.hits3 += m.hits3 * w;
            micro_avg.hits10 += m.hits10 * w;
            micro_avg.mrr += m.mrr * w;
        }
        Self { clients, macro_avg, micro_avg }
    }
}
