//! Day-ahead battery storage and grid set-point scheduling.
//!
//! Two solvers share one physical model ([`system`]):
//! * [`grad_opt`]: projected Adam on a penalty formulation, optimizing set
//!   points together with time-varying cost multipliers;
//! * [`sac`]: a Soft Actor-Critic agent acting in [`env`], whose actions
//!   pass through a power-balance safety layer.
//!
//! Inputs come from [`profiles`], perturbed by [`uncertainty`]; [`harness`]
//! runs paired comparisons and writes reports.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod grad_opt;
pub mod harness;
pub mod profiles;
pub mod sac;
pub mod system;
pub mod uncertainty;

use sha2::{Digest, Sha256};

/// Hex SHA-256 over the little-endian bytes of the given series.
pub(crate) fn hash_series(series: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for s in series {
        h.update((s.len() as u64).to_le_bytes());
        for v in *s {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
