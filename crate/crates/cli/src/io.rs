//! File helpers and the on-disk layout of data and run directories.
//!
//! ```text
//! <data>/entities.tsv  relations.tsv  shards.txt  <shard>.tsv ...
//! <run>/config.txt  entities.tsv  relations.tsv
//! <run>/splits/client<k>_{train,valid,test}.tsv
//! <run>/checkpoints/...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use kgfed::config::ExperimentConfig;
use kgfed::federation::ClientShard;
use kgfed::kg::{KnowledgeGraph, Labels, SplitDataset, Triple, Vocabulary};

use crate::{CliError, Result};

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_owned(), source })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn input(path: &Path, e: kgfed::Error) -> CliError {
    CliError::Input { path: path.to_owned(), reason: e.to_string() }
}

pub fn read_vocab(dir: &Path) -> Result<Vocabulary> {
    let labels = |name: &str| {
        let path = dir.join(name);
        Labels::parse_dump(&read(&path)?).map_err(|e| input(&path, e))
    };
    Ok(Vocabulary { entities: labels("entities.tsv")?, relations: labels("relations.tsv")? })
}

pub fn write_vocab(dir: &Path, vocab: &Vocabulary) -> Result<()> {
    write(&dir.join("entities.tsv"), vocab.entities.dump())?;
    write(&dir.join("relations.tsv"), vocab.relations.dump())
}

/// Parses labelled triples that must already be in `vocab`.
pub fn read_known_triples(path: &Path, vocab: &Vocabulary) -> Result<Vec<Triple>> {
    let mut extended = vocab.clone();
    let (graph, _) = extended.ingest(&read(path)?).map_err(|e| input(path, e))?;
    if extended.entities.len() != vocab.entities.len() || extended.relations.len() != vocab.relations.len() {
        return Err(CliError::Input { path: path.to_owned(), reason: "labels missing from the vocabulary".into() });
    }
    Ok(graph.into_triples())
}

/// Shard graphs of a partition directory, in `shards.txt` order.
pub fn read_partition(dir: &Path) -> Result<(Vocabulary, Vec<KnowledgeGraph>)> {
    let vocab = read_vocab(dir)?;
    let listing = read(&dir.join("shards.txt"))?;
    let graphs = listing
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|name| Ok(KnowledgeGraph::new(read_known_triples(&dir.join(name.trim()), &vocab)?)))
        .collect::<Result<Vec<_>>>()?;
    if graphs.is_empty() {
        return Err(CliError::Input { path: dir.join("shards.txt"), reason: "no shards listed".into() });
    }
    Ok((vocab, graphs))
}

const PARTS: [&str; 3] = ["train", "valid", "test"];

fn split_path(run: &Path, k: usize, part: &str) -> PathBuf {
    run.join("splits").join(format!("client{k}_{part}.tsv"))
}

/// A self-contained training run: configuration, vocabulary and the exact
/// client splits.
pub struct RunDir {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub vocab: Vocabulary,
    pub shards: Vec<ClientShard>,
}

impl RunDir {
    pub fn create(path: &Path, config: &ExperimentConfig, vocab: Vocabulary, shards: Vec<ClientShard>) -> Result<Self> {
        write(&path.join("config.txt"), config.dump())?;
        write_vocab(path, &vocab)?;
        for s in &shards {
            let g = s.global_splits();
            for (part, triples) in PARTS.iter().zip([&g.train, &g.valid, &g.test]) {
                write(&split_path(path, s.id, part), vocab.render(triples))?;
            }
        }
        Ok(Self { path: path.to_owned(), config: config.clone(), vocab, shards })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let cpath = path.join("config.txt");
        let config = ExperimentConfig::parse(&read(&cpath)?)?;
        let vocab = read_vocab(path)?;
        let mut shards = Vec::new();
        while split_path(path, shards.len(), "train").exists() {
            let k = shards.len();
            let [train, valid, test] = PARTS.map(|part| read_known_triples(&split_path(path, k, part), &vocab));
            shards.push(ClientShard::new(k, &SplitDataset { train: train?, valid: valid?, test: test? }));
        }
        if shards.is_empty() {
            return Err(CliError::Input { path: path.join("splits"), reason: "no client splits found".into() });
        }
        Ok(Self { path: path.to_owned(), config, vocab, shards })
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.path.join("checkpoints")
    }
}
