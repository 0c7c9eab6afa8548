//! Data-parallel map helpers.
//!
//! Every Monte Carlo loop in the crate goes through [`map_indexed`]. With the
//! `parallel` feature (on by default) and [`ExecPolicy::Parallel`] the work is
//! spread over the rayon pool; otherwise it runs on the calling thread. Output
//! order is the index order in both cases, so reductions downstream are
//! deterministic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// True when work will actually be dispatched to rayon.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// Evaluates `f(0), ..., f(len - 1)` and returns the results in index order.
pub fn map_indexed<T, F>(policy: ExecPolicy, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if policy.is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    let _ = policy;
    (0..len).map(f).collect()
}
