//! Lazy (sparse) Adam.
//!
//! Only rows that received a gradient in a step are updated, and only their
//! moments decay. Each row keeps its own step counter for bias correction.

use super::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: Vec<u64>,
}

impl AdamState {
    pub fn new(table: &EmbeddingTable, config: AdamConfig) -> Self {
        let n = table.data().len();
        Self { config, m: vec![0.0; n], v: vec![0.0; n], steps: vec![0; table.rows()] }
    }
}

/// Gradient buffer shaped like a table that remembers which rows were touched.
#[derive(Debug, Clone)]
pub struct SparseGrad {
    width: usize,
    data: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

impl SparseGrad {
    pub fn new(rows: usize, width: usize) -> Self {
        Self { width, data: vec![0.0; rows * width], touched: Vec::new(), mark: vec![false; rows] }
    }

    pub fn like(table: &EmbeddingTable) -> Self {
        Self::new(table.rows(), table.width())
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        if !self.mark[i] {
            self.mark[i] = true;
            self.touched.push(i);
        }
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    /// Adds `values` into row `i`.
    pub fn add(&mut self, i: usize, values: &[f64]) {
        for (g, v) in self.row_mut(i).iter_mut().zip(values) {
            *g += v;
        }
    }

    /// Touched rows in ascending order.
    pub fn touched(&self) -> Vec<usize> {
        let mut rows = self.touched.clone();
        rows.sort_unstable();
        rows
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.mark[i] = false;
            self.data[i * self.width..(i + 1) * self.width].fill(0.0);
        }
        self.touched.clear();
    }
}

/// One Adam update over the touched rows of `grads`. Fails before modifying
/// anything if a touched row holds a non-finite gradient.
pub fn adam_step(table: &mut EmbeddingTable, grads: &SparseGrad, state: &mut AdamState) -> Result<()> {
    let w = table.width();
    if grads.width != w || grads.mark.len() != table.rows() || state.steps.len() != table.rows() {
        return Err(Error::Shape("gradient, table and optimizer state disagree".into()));
    }
    let rows = grads.touched();
    if let Some(&bad) = rows.iter().find(|&&i| grads.row(i).iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFiniteGradient(bad));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    for i in rows {
        state.steps[i] += 1;
        let t = state.steps[i] as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let g = grads.row(i);
        let params = table.row_mut(i);
        for j in 0..w {
            let k = i * w + j;
            state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g[j];
            state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = state.m[k] / c1;
            let v_hat = state.v[k] / c2;
            params[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
