//! Threshold secret sharing over GF(2^8) and threshold-rate arithmetic.
//!
//! The compartmented scheme is built by nesting: the protocol splits the
//! storage-level secret across parts with [`split`], and each part's wrapped
//! key across that part's peers with another [`split`].

pub mod gf256;
mod shamir;
mod threshold;

use thiserror::Error;

pub use gf256::{gf_add, gf_div, gf_inv, gf_mul};
pub use shamir::{reconstruct, split, SchemeId, Share, ThresholdSpec, MAX_SHARES, SCHEME_ID_LEN};
pub use threshold::{compute_threshold, split_rates, ThresholdRates};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SharingError {
    #[error("invalid threshold spec: {0}")]
    InvalidSpec(String),
    #[error("{n} shares exceed the GF(256) capacity of {}", MAX_SHARES)]
    CapacityExceeded { n: usize },
    #[error("secret is empty")]
    EmptySecret,
    #[error("need {needed} shares, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("duplicate share index {0}")]
    DuplicateShareIndex(u8),
    #[error("shares belong to different sharing instances")]
    SchemeMismatch,
    #[error("share payload lengths differ")]
    LengthMismatch,
    #[error("threshold rate {0} outside (0, 1]")]
    InvalidRate(f64),
    #[error("malformed share: {0}")]
    Malformed(String),
}
