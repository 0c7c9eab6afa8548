use serde::{Deserialize, Serialize};

use crate::sample::Sample;

/// A piecewise-constant function: `values[j]` on the cell between
/// `locations[j]` and `locations[j + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub locations: Vec<f64>,
    pub values: Vec<f64>,
    /// Cells are `[a, b)` when true and `(a, b]` otherwise.
    pub right_continuous: bool,
}

impl StepFunction {
    /// Value at `x`; zero outside the cells.
    pub fn eval(&self, x: f64) -> f64 {
        let locs = &self.locations;
        if locs.len() < 2 || x < locs[0] || x > locs[locs.len() - 1] {
            return 0.0;
        }
        let j = if self.right_continuous {
            locs.partition_point(|&b| b <= x).saturating_sub(1)
        } else {
            locs.partition_point(|&b| b < x).saturating_sub(1)
        };
        self.values[j.min(self.values.len() - 1)]
    }
}

/// The Grenander estimator: left derivative of the least concave majorant
/// of the empirical distribution function, by pool-adjacent-violators.
/// Cells are left-open, right-closed, starting at zero.
pub fn grenander(sample: &Sample) -> StepFunction {
    let (xs, counts) = sample.distinct();
    let n = sample.n() as f64;
    // blocks: (right end, total length, total mass)
    let mut blocks: Vec<(f64, f64, f64)> = Vec::with_capacity(xs.len());
    let mut left = 0.0;
    for (&x, &c) in xs.iter().zip(&counts) {
        blocks.push((x, x - left, c as f64 / n));
        left = x;
        while blocks.len() >= 2 {
            let (_, l1, m1) = blocks[blocks.len() - 2];
            let (r2, l2, m2) = blocks[blocks.len() - 1];
            // slopes must be nonincreasing; pool when the later one is steeper
            if m2 * l1 >= m1 * l2 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (r2, l1 + l2, m1 + m2);
            } else {
                break;
            }
        }
    }
    let mut locations = vec![0.0];
    let mut values = Vec::with_capacity(blocks.len());
    for (r, l, m) in blocks {
        locations.push(r);
        values.push(m / l);
    }
    StepFunction {
        locations,
        values,
        right_continuous: false,
    }
}
