//! Chance-constrained optimization with sample-only uncertainty.
//!
//! The distribution of a constraint function `f(w1, w2, u)` is embedded in a
//! reproducing kernel Hilbert space, and the decision `u` is chosen to bring
//! that embedding close (in maximum mean discrepancy) to the embedding of a
//! desired distribution built from a small scenario program.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod constraint;
pub mod desired;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kernel;
pub mod objective;
pub mod oracle;
pub mod poly;
pub mod reduced_set;
pub mod scenario;
pub mod solvers;

pub use error::{Error, Result};

/// Median of `values` (average of the two middle elements for even length).
/// Reorders the slice.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}
