use crate::kg::{FilterIndex, SplitDataset, Triple, TripleSet};

/// One client's data, re-indexed to dense local entity and relation ids.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub id: usize,
    /// Local entity index -> global entity id, ascending.
    pub entities: Vec<u32>,
    /// Local relation index -> global relation id, ascending.
    pub relations: Vec<u32>,
    /// Splits in local ids.
    pub splits: SplitDataset,
    /// Train, valid and test of the original shard, in local ids.
    pub filter: FilterIndex,
    /// Triples negatives must avoid (the training set).
    pub known: TripleSet,
    /// All local entity ids, used as candidates and as the negative pool.
    pub pool: Vec<u32>,
}

impl ClientShard {
    /// Builds a shard from splits expressed in global ids.
    pub fn new(id: usize, global: &SplitDataset) -> Self {
        let mut entities: Vec<u32> = global.all().flat_map(|t| [t.head, t.tail]).collect();
        entities.sort_unstable();
        entities.dedup();
        let mut relations: Vec<u32> = global.all().map(|t| t.relation).collect();
        relations.sort_unstable();
        relations.dedup();

        let local = |t: &Triple| Triple {
            head: entities.binary_search(&t.head).unwrap() as u32,
            relation: relations.binary_search(&t.relation).unwrap() as u32,
            tail: entities.binary_search(&t.tail).unwrap() as u32,
        };
        let splits = SplitDataset {
            train: global.train.iter().map(local).collect(),
            valid: global.valid.iter().map(local).collect(),
            test: global.test.iter().map(local).collect(),
        };
        let filter = FilterIndex::new(splits.all());
        let known = splits.train.iter().collect();
        let pool = (0..entities.len() as u32).collect();
        Self { id, entities, relations, splits, filter, known, pool }
    }

    /// Same entities, relations and filter, but a different training set
    /// (in local ids).
    pub fn with_train(&self, train: Vec<Triple>) -> Self {
        let known = train.iter().collect();
        Self { splits: SplitDataset { train, ..self.splits.clone() }, known, ..self.clone() }
    }

    pub fn to_global(&self, t: Triple) -> Triple {
        Triple {
            head: self.entities[t.head as usize],
            relation: self.relations[t.relation as usize],
            tail: self.entities[t.tail as usize],
        }
    }

    pub fn local_entity(&self, global: u32) -> Option<u32> {
        self.entities.binary_search(&global).ok().map(|i| i as u32)
    }

    pub fn local_relation(&self, global: u32) -> Option<u32> {
        self.relations.binary_search(&global).ok().map(|i| i as u32)
    }

    /// Splits translated back to global ids.
    pub fn global_splits(&self) -> SplitDataset {
        let map = |v: &[Triple]| v.iter().map(|&t| self.to_global(t)).collect();
        SplitDataset { train: map(&self.splits.train), valid: map(&self.splits.valid), test: map(&self.splits.test) }
    }
}
