use serde::{Deserialize, Serialize};

use super::mat::Mat;
use crate::error::{Error, Result};

/// Location of one named tensor inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter storage plus its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub layout: Vec<ParamSlot>,
    pub values: Vec<f64>,
}

impl ParamVector {
    /// Lay out `shapes` contiguously, in order, zero-initialised.
    pub fn zeros(shapes: &[(String, usize, usize)]) -> Self {
        let mut layout = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for (name, rows, cols) in shapes {
            layout.push(ParamSlot {
                name: name.clone(),
                offset,
                rows: *rows,
                cols: *cols,
            });
            offset += rows * cols;
        }
        Self {
            layout,
            values: vec![0.0; offset],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<&ParamSlot> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        let slot = self.slot(name).unwrap_or_else(|| panic!("no parameter named {name}"));
        &self.values[slot.range()]
    }

    pub fn slice_mut(&mut self, name: &str) -> &mut [f64] {
        let range = self
            .slot(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
            .range();
        &mut self.values[range]
    }

    pub fn mat(&self, slot: &ParamSlot) -> Mat {
        Mat::from_vec(slot.rows, slot.cols, self.values[slot.range()].to_vec())
    }

    /// Layout covers the array exactly, without overlap, and every value is finite.
    pub fn validate(&self) -> Result<()> {
        let mut expected = 0;
        for s in &self.layout {
            if s.offset != expected {
                return Err(Error::invalid(format!("slot {} at offset {} (expected {expected})", s.name, s.offset)));
            }
            expected += s.len();
        }
        if expected != self.values.len() {
            return Err(Error::invalid(format!(
                "layout covers {expected} values but the vector holds {}",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("parameter {i} is not finite")));
        }
        Ok(())
    }

    /// Boolean mask selecting every slot whose name starts with `prefix`.
    pub fn mask_prefix(&self, prefix: &str) -> Vec<bool> {
        let mut mask = vec![false; self.values.len()];
        for s in self.layout.iter().filter(|s| s.name.starts_with(prefix)) {
            mask[s.range()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}
