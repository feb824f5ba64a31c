use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("row {row} maps to column {col} but only {cols} columns exist")]
    ColumnOutOfRange { row: usize, col: usize, cols: usize },
    #[error("column order breaks at row {row}: {prev} -> {next}")]
    NotMonotone { row: usize, prev: usize, next: usize },
    #[error("column {col} has no rows")]
    EmptyColumn { col: usize },
}

/// Binary point-to-unit matrix stored sparsely: `row_unit[i]` is the column
/// holding row i's single 1. Column j stands for the j-th collapsed unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    pub row_unit: Vec<usize>,
    /// Unit id (segment or cell) of each column.
    pub unit_ids: Vec<usize>,
}

impl AssignmentMatrix {
    /// Collapses consecutive duplicate labels into columns.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut row_unit = Vec::with_capacity(labels.len());
        let mut unit_ids: Vec<usize> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            if i == 0 || labels[i - 1] != l {
                unit_ids.push(l);
            }
            row_unit.push(unit_ids.len() - 1);
        }
        AssignmentMatrix { row_unit, unit_ids }
    }

    pub fn rows(&self) -> usize {
        self.row_unit.len()
    }

    pub fn cols(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn dense(&self) -> Vec<Vec<u8>> {
        self.row_unit
            .iter()
            .map(|&c| {
                let mut row = vec![0u8; self.cols()];
                row[c] = 1;
                row
            })
            .collect()
    }

    /// Unit id of every row.
    pub fn labels(&self) -> Vec<usize> {
        self.row_unit.iter().map(|&c| self.unit_ids[c]).collect()
    }

    /// Row range of every column, in column order.
    pub fn runs(&self) -> Vec<Range<usize>> {
        let mut runs: Vec<Range<usize>> = Vec::with_capacity(self.cols());
        for (i, &c) in self.row_unit.iter().enumerate() {
            if c == runs.len() {
                runs.push(i..i + 1);
            } else {
                runs[c].end = i + 1;
            }
        }
        runs
    }

    /// Checks the contiguous, in-order column layout the GPS encoder relies on.
    pub fn validate(&self) -> Result<(), AssignmentError> {
        let mut prev = 0usize;
        for (row, &c) in self.row_unit.iter().enumerate() {
            if c >= self.cols() {
                return Err(AssignmentError::ColumnOutOfRange { row, col: c, cols: self.cols() });
            }
            let ok = if row == 0 { c == 0 } else { c == prev || c == prev + 1 };
            if !ok {
                return Err(AssignmentError::NotMonotone { row, prev, next: c });
            }
            prev = c;
        }
        if self.cols() > 0 && prev + 1 != self.cols() {
            return Err(AssignmentError::EmptyColumn { col: prev + 1 });
        }
        Ok(())
    }

    /// Keeps rows `0..n`, dropping columns left without rows.
    pub fn truncate_rows(&self, n: usize) -> Self {
        let row_unit: Vec<usize> = self.row_unit[..n.min(self.rows())].to_vec();
        let cols = row_unit.last().map_or(0, |&c| c + 1);
        AssignmentMatrix {
            row_unit,
            unit_ids: self.unit_ids[..cols].to_vec(),
        }
    }
}
