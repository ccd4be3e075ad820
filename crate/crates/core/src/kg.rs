//! Triples, vocabularies, dataset splits and filtered-evaluation indexes.
//!
//! Triple files are UTF-8, tab separated, one `head<TAB>relation<TAB>tail`
//! fact per line. Blank lines are skipped and duplicate facts are dropped
//! (and counted) rather than rejected.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// An integer-coded fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub const fn new(head: u32, relation: u32, tail: u32) -> Self {
        Self { head, relation, tail }
    }
}

/// Dense label <-> id bijection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Labels {
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let mut labels = Self::default();
        for name in names {
            labels.intern(&name);
        }
        labels
    }

    /// Returns the id of `name`, assigning the next free id on first sight.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `label<TAB>id` per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, name) in self.names.iter().enumerate() {
            let _ = writeln!(out, "{name}\t{id}");
        }
        out
    }

    /// Parses the output of [`Labels::dump`]. Ids must be dense and in order.
    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut labels = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::Parse { line: lineno + 1, found: fields.len() });
            }
            let id: usize = fields[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line: lineno + 1, found: fields.len() })?;
            if id != labels.len() {
                return Err(Error::Parse { line: lineno + 1, found: fields.len() });
            }
            labels.intern(fields[0]);
        }
        Ok(labels)
    }
}

/// Entity and relation id spaces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: Labels,
    pub relations: Labels,
}

impl Vocabulary {
    /// Parses triple text into this vocabulary, extending it with unseen
    /// labels in first-appearance order. Returns the graph and the number of
    /// duplicate lines dropped.
    pub fn ingest(&mut self, text: &str) -> Result<(KnowledgeGraph, usize)> {
        let mut seen = HashSet::new();
        let mut triples = Vec::new();
        let mut duplicates = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: lineno + 1, found: fields.len() });
            }
            let head = self.entities.intern(fields[0]);
            let relation = self.relations.intern(fields[1]);
            let tail = self.entities.intern(fields[2]);
            let triple = Triple::new(head, relation, tail);
            if seen.insert(triple) {
                triples.push(triple);
            } else {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            log::warn!("dropped {duplicates} duplicate triple(s)");
        }
        Ok((KnowledgeGraph { triples }, duplicates))
    }

    /// Renders triples back to labelled TSV.
    pub fn render(&self, triples: &[Triple]) -> String {
        let mut out = String::new();
        for t in triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.entities.name(t.head).unwrap_or("?"),
                self.relations.name(t.relation).unwrap_or("?"),
                self.entities.name(t.tail).unwrap_or("?"),
            );
        }
        out
    }
}

/// Outcome of [`load_triples`].
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: KnowledgeGraph,
    pub vocab: Vocabulary,
    pub duplicates: usize,
}

/// Parses a triple TSV into a fresh vocabulary.
pub fn load_triples(source: &str) -> Result<LoadedGraph> {
    let mut vocab = Vocabulary::default();
    let (graph, duplicates) = vocab.ingest(source)?;
    Ok(LoadedGraph { graph, vocab, duplicates })
}

/// A duplicate-free ordered collection of triples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
}

impl KnowledgeGraph {
    /// Builds a graph, dropping repeated triples (first occurrence wins).
    pub fn new(triples: Vec<Triple>) -> Self {
        let mut seen = HashSet::with_capacity(triples.len());
        let triples = triples.into_iter().filter(|t| seen.insert(*t)).collect();
        Self { triples }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn into_triples(self) -> Vec<Triple> {
        self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Sorted ids of every entity that occurs in a triple.
    pub fn entities(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.triples.iter().flat_map(|t| [t.head, t.tail]).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Sorted ids of every relation that occurs in a triple.
    pub fn relations(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.triples.iter().map(|t| t.relation).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// One past the largest relation id.
    pub fn relation_space(&self) -> usize {
        self.triples.iter().map(|t| t.relation as usize + 1).max().unwrap_or(0)
    }

    /// One past the largest entity id.
    pub fn entity_space(&self) -> usize {
        self.triples
            .iter()
            .map(|t| t.head.max(t.tail) as usize + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Disjoint train/valid/test collections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl SplitDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Shuffles and splits by `ratios`: train gets the floor of its share,
/// valid the floor of its share, test the remainder. Graphs with fewer than
/// ten triples borrow from train so that every split holds at least one.
pub fn split_dataset(kg: &KnowledgeGraph, ratios: (u32, u32, u32), seed: u64) -> Result<SplitDataset> {
    let n = kg.len();
    if n < 3 {
        return Err(Error::TooFewTriples(n));
    }
    let total = (ratios.0 + ratios.1 + ratios.2) as usize;
    let mut n_train = n * ratios.0 as usize / total;
    let mut n_valid = n * ratios.1 as usize / total;
    if n_valid == 0 {
        n_valid = 1;
        n_train -= 1;
    }
    if n - n_train - n_valid == 0 {
        n_train -= 1;
    }

    let mut triples = kg.triples().to_vec();
    triples.shuffle(&mut rng::stream(seed, &[rng::tag::SPLIT]));
    let test = triples.split_off(n_train + n_valid);
    let valid = triples.split_off(n_train);
    Ok(SplitDataset { train: triples, valid, test })
}

/// Membership test over a fixed set of triples.
#[derive(Debug, Clone, Default)]
pub struct TripleSet(HashSet<Triple>);

impl TripleSet {
    pub fn contains(&self, t: &Triple) -> bool {
        self.0.contains(t)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<'a> FromIterator<&'a Triple> for TripleSet {
    fn from_iter<I: IntoIterator<Item = &'a Triple>>(iter: I) -> Self {
        Self(iter.into_iter().copied().collect())
    }
}

/// Known-true answers per query over one client's train, valid and test.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    tails: HashMap<(u32, u32), Vec<u32>>,
    heads: HashMap<(u32, u32), Vec<u32>>,
}

impl FilterIndex {
    pub fn new<'a, I: IntoIterator<Item = &'a Triple>>(triples: I) -> Self {
        let mut index = Self::default();
        for t in triples {
            index.tails.entry((t.head, t.relation)).or_default().push(t.tail);
            index.heads.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        for v in index.tails.values_mut().chain(index.heads.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        index
    }

    /// Sorted true tails of `(head, relation, ?)`.
    pub fn tails(&self, head: u32, relation: u32) -> &[u32] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// Sorted true heads of `(?, relation, tail)`.
    pub fn heads(&self, relation: u32, tail: u32) -> &[u32] {
        self.heads.get(&(relation, tail)).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.tails(t.head, t.relation).binary_search(&t.tail).is_ok()
    }
}

pub fn build_filter_index(splits: &SplitDataset) -> FilterIndex {
    FilterIndex::new(splits.all())
}
