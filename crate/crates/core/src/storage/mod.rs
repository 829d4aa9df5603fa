//! Storage / StoragePart / Chatroom data model, sealing under derived keys,
//! chatroom partitioning and the disk-overhead estimate.

mod partition;
mod sealed;
mod types;

use thiserror::Error;

use crate::crypto::CryptoError;

pub use partition::{collect_part_peers, collect_peers, part_peer_occurrences, partition_chatrooms};
pub use sealed::{open_part, open_storage, seal_part, seal_storage, BlobKind, SealedBlob, MAGIC, VERSION};
pub use types::{
    Chatroom, ChatroomId, Digest32, HeldShare, PartEntry, PartId, PeerKeys, RecoveryKeys, ShareScheme, Storage,
    StoragePart, UserId,
};

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("malformed sealed blob: {0}")]
    MalformedBlob(String),
    #[error("expected a {expected:?} blob, found {found:?}")]
    WrongBlobKind { expected: BlobKind, found: BlobKind },
    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl StorageError {
    pub fn is_authentication_failure(&self) -> bool {
        matches!(self, StorageError::Crypto(CryptoError::AuthenticationFailure))
    }
}

/// Encrypted link from the storage to one part (id, key, hash, share).
pub const PART_LINK_BYTES: i64 = 580;
/// Encrypted part excluding its chat list and chat keys.
pub const PART_BYTES: i64 = 610;
/// One encrypted share.
pub const SHARE_BYTES: i64 = 90;
/// Encrypted last-distribution marker.
pub const LAST_DISTRIBUTION_BYTES: i64 = 180;
/// One encrypted chat key.
pub const CHAT_KEY_BYTES: i64 = 380;

/// Extra bytes needed for `parts` compartments and one share per peer:
/// `parts * (580 + 610) + peers * 90 - 180`.
pub fn estimate_overhead(parts: u64, unique_peers: u64) -> i64 {
    parts as i64 * (PART_LINK_BYTES + PART_BYTES) + unique_peers as i64 * SHARE_BYTES - LAST_DISTRIBUTION_BYTES
}

/// Bytes spent on one encrypted key per chat.
pub fn chat_key_baseline(chats: u64) -> i64 {
    chats as i64 * CHAT_KEY_BYTES
}
