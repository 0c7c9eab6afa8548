use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Sorted positive observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    /// Sorts the values and checks they are finite and positive.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("sample is empty");
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return invalid(format!("observations must be positive and finite, got {bad}"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Empirical distribution function `G_n(x)`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.n() as f64
    }

    /// Distinct values with their multiplicities.
    pub fn distinct(&self) -> (Vec<f64>, Vec<usize>) {
        let mut xs: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for &v in &self.values {
            if xs.last() == Some(&v) {
                *counts.last_mut().unwrap() += 1;
            } else {
                xs.push(v);
                counts.push(1);
            }
        }
        (xs, counts)
    }

    /// Multiplies every observation by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * c).collect())
    }
}
