#![allow(dead_code)]

use kgfed::federation::{build_shards, ClientShard, RoundConfig};
use kgfed::partition::{build_cooccurrence, distribute, spectral_partition};
use kgfed::synthetic::{generate, SyntheticSpec};

/// A three-client federation small enough for debug-speed tests.
pub fn small_federation(seed: u64) -> (Vec<ClientShard>, usize) {
    let kg = generate(&SyntheticSpec { entities: 150, relations: 6, triples: 450, seed, ..Default::default() });
    let clustering = spectral_partition(&build_cooccurrence(&kg), 3, seed).unwrap();
    let graphs = distribute(&kg, &clustering).unwrap();
    (build_shards(&graphs, seed).unwrap(), kg.entity_space())
}

pub fn small_config(seed: u64) -> RoundConfig {
    RoundConfig {
        dim: 8,
        margin: 1.0,
        lr: 1e-2,
        rounds: 4,
        batch_size: 64,
        negatives: 8,
        local_epochs: 1,
        eval_interval: 2,
        seed,
        ..Default::default()
    }
}
