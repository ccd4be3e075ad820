//! Heterogeneous federated dataset construction.
//!
//! Relations are grouped into `k` clusters, either by spectral clustering of
//! their entity co-occurrence graph or by a seeded round-robin deal, and each
//! cluster's triples become one client's shard. Shards are relation-disjoint
//! but may share entities.

mod eigen;
mod kmeans;
mod stats;

pub use eigen::SymmetricEigen;
pub use kmeans::kmeans;
pub use stats::{shard_stats, ShardStat, ShardStats};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::rng;

/// Symmetric relation co-occurrence counts with a zero diagonal.
///
/// Entry `(a, b)` counts the entities whose set of incident relations
/// contains both `a` and `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoOccurrenceMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl CoOccurrenceMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.counts[a * self.n + b]
    }

    pub fn row(&self, a: usize) -> &[u64] {
        &self.counts[a * self.n..(a + 1) * self.n]
    }

    /// Unnormalised Laplacian `D - M`, row-major.
    pub fn laplacian(&self) -> Vec<f64> {
        let n = self.n;
        let mut l: Vec<f64> = self.counts.iter().map(|&c| -(c as f64)).collect();
        for i in 0..n {
            l[i * n + i] = self.row(i).iter().map(|&c| c as f64).sum();
        }
        l
    }
}

pub fn build_cooccurrence(kg: &KnowledgeGraph) -> CoOccurrenceMatrix {
    let n = kg.relation_space();
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); kg.entity_space()];
    for t in kg.triples() {
        incident[t.head as usize].push(t.relation);
        incident[t.tail as usize].push(t.relation);
    }
    let mut counts = vec![0u64; n * n];
    for rels in &mut incident {
        rels.sort_unstable();
        rels.dedup();
        for (i, &a) in rels.iter().enumerate() {
            for &b in &rels[i + 1..] {
                counts[a as usize * n + b as usize] += 1;
                counts[b as usize * n + a as usize] += 1;
            }
        }
    }
    CoOccurrenceMatrix { n, counts }
}

/// Assignment of every relation id to one of `k` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationClustering {
    labels: Vec<usize>,
    k: usize,
}

impl RelationClustering {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || k > labels.len() {
            return Err(Error::InvalidClusterCount { k, relations: labels.len() });
        }
        let mut sizes = vec![0usize; k];
        for &c in &labels {
            if c >= k {
                return Err(Error::InvalidClusterCount { k, relations: labels.len() });
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster(empty));
        }
        Ok(Self { labels, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn label(&self, relation: u32) -> Option<usize> {
        self.labels.get(relation as usize).copied()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Spectral clustering of relations: k-means over the rows of the
/// eigenvectors belonging to the `k` smallest Laplacian eigenvalues.
pub fn spectral_partition(m: &CoOccurrenceMatrix, k: usize, seed: u64) -> Result<RelationClustering> {
    let n = m.size();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, relations: n });
    }
    let eig = SymmetricEigen::jacobi(&m.laplacian(), n);
    let features: Vec<f64> = (0..n)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| eig.vectors[i * n + j])
        .collect();
    let labels = kmeans(&features, k, k, &mut rng::stream(seed, &[rng::tag::KMEANS]));
    RelationClustering::new(labels, k)
}

/// Deals shuffled relations round-robin, so cluster sizes differ by at most one.
pub fn random_partition(relation_count: usize, k: usize, seed: u64) -> Result<RelationClustering> {
    if k == 0 || k > relation_count {
        return Err(Error::InvalidClusterCount { k, relations: relation_count });
    }
    let mut order: Vec<usize> = (0..relation_count).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::tag::PARTITION]));
    let mut labels = vec![0; relation_count];
    for (slot, &r) in order.iter().enumerate() {
        labels[r] = slot % k;
    }
    RelationClustering::new(labels, k)
}

/// Splits `kg` into one shard per cluster, preserving triple order.
pub fn distribute(kg: &KnowledgeGraph, clustering: &RelationClustering) -> Result<Vec<KnowledgeGraph>> {
    let mut shards: Vec<Vec<Triple>> = vec![Vec::new(); clustering.k()];
    for t in kg.triples() {
        let c = clustering.label(t.relation).ok_or(Error::UncoveredRelation(t.relation))?;
        shards[c].push(*t);
    }
    Ok(shards.into_iter().map(KnowledgeGraph::new).collect())
}
