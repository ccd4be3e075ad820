//! Per-shard graph statistics: sizes, degrees, clustering coefficients.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct ShardStat {
    pub relations: usize,
    pub entities: usize,
    pub triples: usize,
    pub avg_degree: f64,
    pub avg_clustering: f64,
    /// degree -> number of entities with that degree.
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Local clustering coefficient per entity, keyed by entity id.
    pub clustering: HashMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardStats {
    pub shards: Vec<ShardStat>,
    /// Entities present in at least two shards.
    pub overlapping_entities: usize,
}

impl ShardStats {
    /// `shard_id,relations,entities,triples,avg_degree,avg_clustering_coeff`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("shard_id,relations,entities,triples,avg_degree,avg_clustering_coeff\n");
        for (i, s) in self.shards.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{:.6},{:.6}",
                s.relations, s.entities, s.triples, s.avg_degree, s.avg_clustering
            );
        }
        out
    }
}

impl ShardStat {
    pub fn degree_csv(&self) -> String {
        let mut out = String::from("degree,entities\n");
        for (d, c) in &self.degree_histogram {
            let _ = writeln!(out, "{d},{c}");
        }
        out
    }
}

pub fn shard_stats(shards: &[KnowledgeGraph]) -> ShardStats {
    let mut membership: HashMap<u32, usize> = HashMap::new();
    let stats = shards
        .iter()
        .map(|shard| {
            let entities = shard.entities();
            for &e in &entities {
                *membership.entry(e).or_default() += 1;
            }
            single(shard, &entities)
        })
        .collect();
    ShardStats {
        shards: stats,
        overlapping_entities: membership.values().filter(|&&c| c >= 2).count(),
    }
}

fn single(shard: &KnowledgeGraph, entities: &[u32]) -> ShardStat {
    let local: HashMap<u32, usize> = entities.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let n = entities.len();

    let mut degree = vec![0usize; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in shard.triples() {
        let h = local[&t.head];
        let tl = local[&t.tail];
        degree[h] += 1;
        if h != tl {
            degree[tl] += 1;
            adj[h].push(tl);
            adj[tl].push(h);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    let triangles = triangles_per_node(&adj);
    let coeffs: Vec<f64> = (0..n)
        .map(|i| {
            let d = adj[i].len();
            if d < 2 {
                0.0
            } else {
                2.0 * triangles[i] as f64 / (d * (d - 1)) as f64
            }
        })
        .collect();

    let mut degree_histogram = BTreeMap::new();
    for &d in &degree {
        *degree_histogram.entry(d).or_default() += 1;
    }
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let degrees: Vec<f64> = degree.iter().map(|&d| d as f64).collect();

    ShardStat {
        relations: shard.relations().len(),
        entities: n,
        triples: shard.len(),
        avg_degree: mean(&degrees),
        avg_clustering: mean(&coeffs),
        degree_histogram,
        clustering: entities.iter().copied().zip(coeffs).collect(),
    }
}

/// Triangle count through each node of a simple undirected graph, using
/// degree ordering so each triangle is found once.
fn triangles_per_node(adj: &[Vec<usize>]) -> Vec<u64> {
    let n = adj.len();
    let rank = |v: usize| (adj[v].len(), v);
    let forward: Vec<Vec<usize>> = (0..n)
        .map(|u| adj[u].iter().copied().filter(|&v| rank(v) > rank(u)).collect())
        .collect();
    let mut count = vec![0u64; n];
    let mut mark = vec![false; n];
    for u in 0..n {
        for &v in &forward[u] {
            mark[v] = true;
        }
        for &v in &forward[u] {
            for &w in &forward[v] {
                if mark[w] {
                    count[u] += 1;
                    count[v] += 1;
                    count[w] += 1;
                }
            }
        }
        for &v in &forward[u] {
            mark[v] = false;
        }
    }
    count
}
