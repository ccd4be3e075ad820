//! `kgfed partition`

use std::path::Path;

use kgfed::kg::load_triples;
use kgfed::partition::{build_cooccurrence, distribute, random_partition, shard_stats, spectral_partition};

use crate::io::{read, write, write_vocab};
use crate::{CliError, Method, Result};

pub fn run(input: &Path, k: usize, method: Method, seed: u64, out: &Path) -> Result<()> {
    let loaded = load_triples(&read(input)?).map_err(|e| CliError::Input { path: input.to_owned(), reason: e.to_string() })?;
    let kg = &loaded.graph;
    let clustering = match method {
        Method::Spectral => spectral_partition(&build_cooccurrence(kg), k, seed)?,
        Method::Random => random_partition(kg.relation_space(), k, seed)?,
    };
    let shards = distribute(kg, &clustering)?;
    let prefix = match method {
        Method::Spectral => 'C',
        Method::Random => 'R',
    };

    write_vocab(out, &loaded.vocab)?;
    let mut listing = String::new();
    for (i, shard) in shards.iter().enumerate() {
        let name = format!("{prefix}{k}_{i}.tsv");
        write(&out.join(&name), loaded.vocab.render(shard.triples()))?;
        listing += &name;
        listing.push('\n');
    }
    write(&out.join("shards.txt"), listing)?;

    let mut clusters = String::from("relation\tshard\n");
    for (r, label) in clustering.labels().iter().enumerate() {
        let name = loaded.vocab.relations.name(r as u32).unwrap_or("?");
        clusters += &format!("{name}\t{label}\n");
    }
    write(&out.join("relation_clusters.tsv"), clusters)?;

    let stats = shard_stats(&shards);
    write(&out.join("stats.csv"), stats.to_csv())?;
    for (i, s) in stats.shards.iter().enumerate() {
        write(&out.join(format!("degree_{i}.csv")), s.degree_csv())?;
    }

    println!("{} triples, {} relations -> {k} shards ({} entities shared)", kg.len(), kg.relation_space(), stats.overlapping_entities);
    for (i, s) in stats.shards.iter().enumerate() {
        println!("  shard {i}: {} relations, {} entities, {} triples", s.relations, s.entities, s.triples);
    }
    Ok(())
}
