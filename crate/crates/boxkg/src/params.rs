//! Dense parameter tables and sparse gradient buffers.
//!
//! Every learnable quantity in the model lives in a named [`Table`] inside a
//! [`Params`] map. Gradients are accumulated per (table, row) into a
//! [`GradBuffer`] so the optimizer can update only touched rows.

use std::collections::{BTreeMap, HashMap};

use crate::error::{BoxKgError, Result};

/// Well-known parameter table names.
pub mod tables {
    pub const CONCEPT_CENTER: &str = "concept_center";
    pub const CONCEPT_PREOFF: &str = "concept_preoff";
    pub const ONTO_TAU: &str = "onto_rel_tau";
    pub const ONTO_PREDELTA: &str = "onto_rel_predelta";
    pub const PROJ_W1: &str = "proj_w1";
    pub const PROJ_B1: &str = "proj_b1";
    pub const PROJ_W2: &str = "proj_w2";
    pub const PROJ_B2: &str = "proj_b2";
    pub const ENTITY_VEC: &str = "entity_vec";
    pub const INST_REL: &str = "inst_rel";
    pub const BRIDGE_W: &str = "bridge_w";
    pub const BRIDGE_B: &str = "bridge_b";
}

/// A row-major matrix of f64 parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Table {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn filled(rows: usize, dim: usize, value: f64) -> Self {
        Table {
            rows,
            dim,
            data: vec![value; rows * dim],
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Named collection of parameter tables. BTreeMap keeps iteration order
/// stable for checkpoints and determinism tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    pub tables: BTreeMap<String, Table>,
}

impl Params {
    pub fn insert(&mut self, name: &str, table: Table) {
        self.tables.insert(name.to_string(), table);
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .get(name)
            .ok_or_else(|| BoxKgError::MissingTable(name.to_string()))
    }

    pub fn table_mut(&mut self, name: &str) -> Result<&mut Table> {
        self.tables
            .get_mut(name)
            .ok_or_else(|| BoxKgError::MissingTable(name.to_string()))
    }

    pub fn row(&self, name: &str, i: usize) -> Result<&[f64]> {
        let t = self.table(name)?;
        if i >= t.rows {
            return Err(BoxKgError::IdOutOfRange {
                kind: "row",
                id: i as u32,
                len: t.rows,
            });
        }
        Ok(t.row(i))
    }
}

/// Sparse per-row gradient accumulator.
#[derive(Debug, Default, Clone)]
pub struct GradBuffer {
    pub tables: HashMap<String, HashMap<usize, Vec<f64>>>,
}

impl GradBuffer {
    pub fn row_mut(&mut self, table: &str, row: usize, dim: usize) -> &mut Vec<f64> {
        self.tables
            .entry(table.to_string())
            .or_default()
            .entry(row)
            .or_insert_with(|| vec![0.0; dim])
    }

    pub fn add(&mut self, table: &str, row: usize, dim: usize, idx: usize, val: f64) {
        self.row_mut(table, row, dim)[idx] += val;
    }

    pub fn add_row(&mut self, table: &str, row: usize, vals: &[f64]) {
        let acc = self.row_mut(table, row, vals.len());
        for (a, v) in acc.iter_mut().zip(vals) {
            *a += *v;
        }
    }

    pub fn get(&self, table: &str, row: usize) -> Option<&Vec<f64>> {
        self.tables.get(table).and_then(|t| t.get(&row))
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Scale every accumulated gradient in place.
    pub fn scale(&mut self, s: f64) {
        for rows in self.tables.values_mut() {
            for g in rows.values_mut() {
                for x in g.iter_mut() {
                    *x *= s;
                }
            }
        }
    }
}
