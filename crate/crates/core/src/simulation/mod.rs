//! Monte-Carlo evaluation of reconstruction rates: synthetic chat
//! populations, an in-memory network running the real protocol, and sweep
//! drivers producing CSV.

mod experiment;
mod network;
mod population;

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::protocol::ProtocolError;
use crate::sharing::SharingError;
use crate::storage::StorageError;

pub use experiment::{
    bucketize, figure_preset, run_experiment, run_scenario, run_trial, simulation_backend, trial_seed, write_csv,
    RateReport, ScenarioConfig, TrialOutcome, CSV_HEADER, SIM_KDF_ITERATIONS,
};
pub use network::{Network, RecoveryOptions, RecoveryRun, SIM_PASSWORD};
pub use population::{generate_population, mark_inactive, peer_name, ChatSpec, Population, PopulationSpec, SizeBucket};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sharing(#[from] SharingError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
