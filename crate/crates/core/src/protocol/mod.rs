//! Share distribution and the recovery choreography between the recovering
//! user, the server and the peers.
//!
//! Every actor is a plain state machine: methods consume a message (or a
//! command) and return the messages to send. Routing is left to the caller,
//! see `simulation::Network` for an in-memory mailbox.

mod account;
mod distribute;
mod message;
mod peer;
mod server;
mod session;

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::sharing::SharingError;
use crate::storage::{PartId, StorageError, UserId};

pub use account::Account;
pub use distribute::{distribute_shares, unwrap_part_key, wrap_part_key, Distribution, DistributionConfig};
pub use message::{
    rid_statement, server_id, InitializeRecoveryBody, MessageKind, ProtocolMessage, RecoveryConfirmedBody,
    RecoveryFinishedBody, RecoveryRequestBody, Rid, ShareDeliveryBody, SystemMessageBody, SystemRecord, SERVER_ID,
};
pub use peer::{AuditRecord, Peer};
pub use server::{BackupUpload, Credentials, RecoveryGrant, Server, ServerKeys};
pub use session::{IngestOutcome, RecoverySession, SessionStatus};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("no public keys registered for peer {0}")]
    MissingPeerKey(UserId),
    #[error("the storage has no peers")]
    NoPeers,
    #[error("part {0} has no peers")]
    EmptyPart(PartId),
    #[error("ownership proof rejected")]
    OwnershipRejected,
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown or inactive recovery session {0}")]
    UnknownSession(message::Rid),
    #[error("recovery session {0} is no longer valid")]
    StaleSession(message::Rid),
    #[error("confirmation rejected: {0}")]
    ConfirmationRejected(String),
    #[error("{0} is not a peer of the recovering user")]
    NotAPeer(UserId),
    #[error("signature does not verify")]
    BadSignature,
    #[error("server authentication failed")]
    AuthenticationFailed,
    #[error("reconstruction produced corrupt data: {0}")]
    ReconstructionCorrupt(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error(transparent)]
    Sharing(#[from] SharingError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}
