//! Embedding tables and the TransE / ComplEx / RotatE scoring functions.
//!
//! Complex-valued kinds store each row as `[re_0..re_h, im_0..im_h]`.
//! RotatE relation rows hold `h` phase angles instead, so the unit-modulus
//! constraint holds by construction.

mod adam;
pub mod checkpoint;
mod model;
mod negatives;

pub use adam::{adam_step, AdamConfig, AdamState, SparseGrad};
pub use model::{accumulate_gradients, score, score_gradients, Scorer};
pub use negatives::{sample_negatives, Corruption};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TransE,
    ComplEx,
    RotatE,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::TransE, ModelKind::ComplEx, ModelKind::RotatE];

    pub fn is_complex(self) -> bool {
        !matches!(self, ModelKind::TransE)
    }

    /// Distance models get the additive margin in their logits.
    pub fn is_distance(self) -> bool {
        !matches!(self, ModelKind::ComplEx)
    }

    /// Stored row width for a table of this kind at dimension `dim`.
    pub fn width(self, role: Role, dim: usize) -> usize {
        match (self, role) {
            (ModelKind::RotatE, Role::Relation) => dim / 2,
            _ => dim,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ModelKind::TransE => 0,
            ModelKind::ComplEx => 1,
            ModelKind::RotatE => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::TransE => "transe",
            ModelKind::ComplEx => "complex",
            ModelKind::RotatE => "rotate",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "complex" => Ok(ModelKind::ComplEx),
            "rotate" => Ok(ModelKind::RotatE),
            _ => Err(Error::InvalidModel(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Entity,
    Relation,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Entity => 0,
            Role::Relation => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Role::Entity),
            1 => Some(Role::Relation),
            _ => None,
        }
    }
}

/// Row-major `rows x width` matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub kind: ModelKind,
    pub role: Role,
    pub dim: usize,
    rows: usize,
    width: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(count: usize, kind: ModelKind, role: Role, dim: usize) -> Self {
        let width = kind.width(role, dim);
        Self { kind, role, dim, rows: count, width, data: vec![0.0; count * width] }
    }

    pub fn from_data(kind: ModelKind, role: Role, dim: usize, rows: usize, data: Vec<f64>) -> Result<Self> {
        let width = kind.width(role, dim);
        if data.len() != rows * width {
            return Err(Error::Shape(format!("{} values for {rows} rows of width {width}", data.len())));
        }
        Ok(Self { kind, role, dim, rows, width, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// New table made of `rows[i]` of `self`, in order.
    pub fn gather(&self, rows: &[u32]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.width);
        for &r in rows {
            data.extend_from_slice(self.row(r as usize));
        }
        Self { data, rows: rows.len(), ..*self }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.width == other.width
    }
}

/// Uniform `[-6/sqrt(dim), 6/sqrt(dim)]` entries; RotatE relation phases
/// uniform in `(-pi, pi]`.
pub fn init_table(count: usize, kind: ModelKind, role: Role, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 || (kind.is_complex() && dim % 2 != 0) {
        return Err(Error::Shape(format!("dimension {dim} is invalid for {kind}")));
    }
    let mut table = EmbeddingTable::zeros(count, kind, role, dim);
    let mut r = rng::stream(seed, &[rng::tag::INIT, role.code() as u64]);
    if kind == ModelKind::RotatE && role == Role::Relation {
        let pi = std::f64::consts::PI;
        for x in table.data_mut() {
            // gen_range(-pi..pi) is [-pi, pi); reflect to (-pi, pi].
            *x = -r.gen_range(-pi..pi);
        }
    } else {
        let bound = 6.0 / (dim as f64).sqrt();
        for x in table.data_mut() {
            *x = r.gen_range(-bound..=bound);
        }
    }
    Ok(table)
}
