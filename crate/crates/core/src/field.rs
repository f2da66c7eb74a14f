use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gasket::{vertex_count, GasketGraph};

/// Real-valued function on the vertices of a level-m gasket graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexField {
    level: usize,
    values: Vec<f64>,
}

impl VertexField {
    pub fn new(level: usize, values: Vec<f64>) -> Result<Self> {
        let expected = vertex_count(level);
        if values.len() != expected {
            return Err(Error::FieldLength {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { level, values })
    }

    pub fn zeros(level: usize) -> Self {
        Self {
            level,
            values: vec![0.0; vertex_count(level)],
        }
    }

    pub fn constant(level: usize, c: f64) -> Self {
        Self {
            level,
            values: vec![c; vertex_count(level)],
        }
    }

    pub fn from_fn(g: &GasketGraph, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            level: g.level(),
            values: (0..g.num_vertices()).map(f).collect(),
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_graph(&self, g: &GasketGraph) -> Result<()> {
        if self.level != g.level() {
            return Err(Error::LevelMismatch {
                graph: g.level(),
                field: self.level,
            });
        }
        Ok(())
    }

    /// True when the values at the three boundary vertices are exactly zero.
    pub fn is_zero_trace(&self, g: &GasketGraph) -> bool {
        g.boundary_ids().iter().all(|&id| self.values[id] == 0.0)
    }

    pub fn zero_boundary(&mut self, g: &GasketGraph) {
        for id in g.boundary_ids() {
            self.values[id] = 0.0;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            level: self.level,
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        debug_assert_eq!(self.level, other.level);
        Self {
            level: self.level,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            level: self.level,
            values: self.values.iter().map(|v| v.abs()).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Restriction to a coarser level (an id prefix).
    pub fn restrict(&self, level: usize) -> Result<Self> {
        if level > self.level {
            return Err(Error::InvalidArgument(format!(
                "cannot restrict level {} field to finer level {level}",
                self.level
            )));
        }
        Ok(Self {
            level,
            values: self.values[..vertex_count(level)].to_vec(),
        })
    }
}
