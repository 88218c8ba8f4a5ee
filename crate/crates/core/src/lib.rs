//! Joint offloading decisions and MU-MIMO beamforming for a multi-user
//! mobile-edge-computing cell.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod beamforming;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod oracle;
pub mod scenario;
pub mod sdr;
pub mod system_model;
