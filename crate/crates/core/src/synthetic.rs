//! Seeded synthetic knowledge graphs with planted structure.
//!
//! Entities get latent positions; each relation is a translation in latent
//! space and a fact `(h, r, t)` links `h` to one of the entities nearest to
//! `z_h + tau_r`, with heads restricted to those whose target stays inside
//! the latent box. Relations are grouped, each group draws its entities from
//! its own community, and a set of bridge entities belongs to every
//! community. Relation co-occurrence is therefore block-structured, and
//! splitting by relation group yields clients with overlapping but
//! differently distributed entities.
//!
//! With `heterogeneity > 0` each community sees its own jittered copy of
//! the latent positions, so a bridge entity plays a different role in each
//! community and no single embedding fits all of them exactly.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::kg::{KnowledgeGraph, Triple};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    /// Number of relation groups (and entity communities).
    pub groups: usize,
    /// Fraction of entities shared by all communities.
    pub bridge_fraction: f64,
    pub latent_dim: usize,
    /// Relation shifts are uniform in `[-shift, shift]` per latent axis.
    pub shift: f64,
    /// Tails are drawn uniformly from this many nearest entities.
    pub fan_out: usize,
    /// Half-width of the uniform per-community jitter of latent positions.
    pub heterogeneity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            entities: 2000,
            relations: 20,
            triples: 10_000,
            groups: 3,
            bridge_fraction: 0.2,
            latent_dim: 3,
            shift: 0.8,
            fan_out: 2,
            heterogeneity: 0.0,
            seed: 0,
        }
    }
}

/// Group of relation `r` (relations are dealt round-robin).
pub fn relation_group(spec: &SyntheticSpec, r: u32) -> usize {
    r as usize % spec.groups
}

pub fn generate(spec: &SyntheticSpec) -> KnowledgeGraph {
    let mut rng = rng::stream(spec.seed, &[tag::SYNTHETIC]);
    let d = spec.latent_dim;
    let latent: Vec<f64> = (0..spec.entities * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shifts: Vec<f64> = (0..spec.relations * d).map(|_| rng.gen_range(-spec.shift..=spec.shift)).collect();

    let mut order: Vec<u32> = (0..spec.entities as u32).collect();
    order.shuffle(&mut rng);
    let bridges = (spec.bridge_fraction * spec.entities as f64).round() as usize;
    let mut pools: Vec<Vec<u32>> = vec![order[..bridges].to_vec(); spec.groups];
    for (i, &e) in order[bridges..].iter().enumerate() {
        pools[i % spec.groups].push(e);
    }
    for p in &mut pools {
        p.sort_unstable();
    }

    let views: Vec<Vec<f64>> = (0..spec.groups)
        .map(|_| {
            if spec.heterogeneity > 0.0 {
                latent.iter().map(|z| z + rng.gen_range(-spec.heterogeneity..=spec.heterogeneity)).collect()
            } else {
                latent.clone()
            }
        })
        .collect();

    let mut triples = std::collections::BTreeSet::new();
    let mut scratch: Vec<(f64, u32)> = Vec::new();
    let mut attempts = 0;
    while triples.len() < spec.triples && attempts < spec.triples * 100 {
        attempts += 1;
        let r = rng.gen_range(0..spec.relations as u32);
        let group = relation_group(spec, r);
        let (pool, latent) = (&pools[group], &views[group]);
        let h = pool[rng.gen_range(0..pool.len())];
        let zh = &latent[h as usize * d..(h as usize + 1) * d];
        let tau = &shifts[r as usize * d..(r as usize + 1) * d];
        // Heads whose target leaves the latent box would all land on the
        // same boundary entities.
        if (0..d).any(|i| (zh[i] + tau[i]).abs() > 1.0) {
            continue;
        }
        scratch.clear();
        for &e in pool.iter().filter(|&&e| e != h) {
            let ze = &latent[e as usize * d..(e as usize + 1) * d];
            let dist: f64 = (0..d).map(|i| (zh[i] + tau[i] - ze[i]).powi(2)).sum();
            scratch.push((dist, e));
        }
        let k = spec.fan_out.min(scratch.len());
        if k == 0 {
            continue;
        }
        scratch.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (_, t) = scratch[rng.gen_range(0..k)];
        triples.insert(Triple::new(h, r, t));
    }
    KnowledgeGraph::new(triples.into_iter().collect())
}
