use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::StorageError;
use crate::codec::impl_base64_serde;
use crate::crypto::{
    Ciphertext, CryptoBackend, CryptoError, EncKeyPair, EncPublicKey, SigKeyPair, SigPublicKey, SymmetricKey,
};
use crate::sharing::Share;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                $name(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }
    };
}

string_id!(
    /// A user or peer of the network.
    UserId
);
string_id!(ChatroomId);
string_id!(PartId);

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn try_from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes.try_into().map(Digest32).map_err(|_| CryptoError::InvalidInput("digest must be 32 bytes".into()))
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({:02x}{:02x}{:02x}{:02x}..)", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

impl_base64_serde!(Digest32);

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Chatroom {
    pub id: ChatroomId,
    pub participants: BTreeSet<UserId>,
    /// Chat keys `k_c`, newest last.
    pub key_history: Vec<SymmetricKey>,
}

impl Chatroom {
    pub fn new(
        id: ChatroomId,
        participants: impl IntoIterator<Item = UserId>,
        key: SymmetricKey,
    ) -> Result<Self, StorageError> {
        let participants: BTreeSet<UserId> = participants.into_iter().collect();
        if participants.len() < 2 {
            return Err(StorageError::InvalidInput(format!("chatroom {id} needs at least 2 participants")));
        }
        Ok(Chatroom { id, participants, key_history: vec![key] })
    }

    pub fn latest_key(&self) -> Option<&SymmetricKey> {
        self.key_history.last()
    }

    pub fn has(&self, user: &UserId) -> bool {
        self.participants.contains(user)
    }

    /// Participants other than `owner`, in id order.
    pub fn peers_of<'a>(&'a self, owner: &'a UserId) -> impl Iterator<Item = &'a UserId> + 'a {
        self.participants.iter().filter(move |p| *p != owner)
    }
}

/// A compartment of the storage holding some chatrooms' keys and one share of
/// the compartmented secret.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoragePart {
    pub id: PartId,
    pub chatrooms: Vec<Chatroom>,
    /// This part's share of `S_CTS`, set by share distribution.
    pub cts_share: Option<Share>,
    /// Number of part shares needed to rebuild `S_CTS`.
    pub cts_quorum: Option<u32>,
    /// Link to a part holding older keys of the same chatrooms.
    pub predecessor: Option<PartId>,
}

impl StoragePart {
    pub fn new(id: PartId, chatrooms: Vec<Chatroom>) -> Self {
        StoragePart { id, chatrooms, cts_share: None, cts_quorum: None, predecessor: None }
    }

    pub fn validate(&self) -> Result<(), StorageError> {
        let mut ids = BTreeSet::new();
        for c in &self.chatrooms {
            if !ids.insert(&c.id) {
                return Err(StorageError::InvalidInput(format!("chatroom {} appears twice in part {}", c.id, self.id)));
            }
            if c.key_history.is_empty() {
                return Err(StorageError::InvalidInput(format!("chatroom {} has no key", c.id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PeerKeys {
    pub enc: EncPublicKey,
    pub sig: SigPublicKey,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PartEntry {
    pub part_id: PartId,
    /// `k_SP`.
    pub part_key: SymmetricKey,
    /// Digest of the sealed part blob; zero until the part is first sealed.
    pub part_hash: Digest32,
}

/// Which sharing instance a share belongs to.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ShareScheme {
    /// Flat threshold sharing of `S_TS` across all peers.
    #[serde(rename = "TS")]
    Ts,
    /// Sharing of one part's wrapped key across that part's peers.
    #[serde(rename = "CTS-part")]
    CtsPart {
        #[serde(rename = "partId")]
        part_id: PartId,
    },
}

impl ShareScheme {
    pub fn tag(&self) -> String {
        match self {
            ShareScheme::Ts => "TS".to_owned(),
            ShareScheme::CtsPart { part_id } => format!("CTS-part:{part_id}"),
        }
    }
}

/// A share another user handed to this storage's owner for safekeeping.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HeldShare {
    pub owner: UserId,
    pub scheme: ShareScheme,
    pub epoch: u64,
    pub threshold: u32,
    pub share: Share,
}

/// The user's key vault, sealed under `P_S`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Storage {
    pub owner: UserId,
    pub enc_pair: EncKeyPair,
    pub sig_pair: SigKeyPair,
    pub peer_keys: BTreeMap<UserId, PeerKeys>,
    pub part_table: Vec<PartEntry>,
    pub ts_shares_sent: BTreeMap<UserId, u32>,
    pub cts_shares_sent: BTreeMap<UserId, u32>,
    /// Logical timestamp of the last share distribution; 0 means never.
    pub last_distribution: u64,
    pub held_shares: Vec<HeldShare>,
}

impl Storage {
    pub fn new(owner: UserId, enc_pair: EncKeyPair, sig_pair: SigKeyPair) -> Self {
        Storage {
            owner,
            enc_pair,
            sig_pair,
            peer_keys: BTreeMap::new(),
            part_table: Vec::new(),
            ts_shares_sent: BTreeMap::new(),
            cts_shares_sent: BTreeMap::new(),
            last_distribution: 0,
            held_shares: Vec::new(),
        }
    }

    pub fn public_keys(&self) -> PeerKeys {
        PeerKeys { enc: self.enc_pair.public.clone(), sig: self.sig_pair.public.clone() }
    }

    /// Registers a new part with the given key; fails on a duplicate id.
    pub fn add_part(&mut self, part_id: PartId, part_key: SymmetricKey) -> Result<(), StorageError> {
        if self.part_entry(&part_id).is_some() {
            return Err(StorageError::InvalidInput(format!("duplicate part id {part_id}")));
        }
        self.part_table.push(PartEntry { part_id, part_key, part_hash: Digest32::default() });
        Ok(())
    }

    pub fn part_entry(&self, part_id: &PartId) -> Option<&PartEntry> {
        self.part_table.iter().find(|e| &e.part_id == part_id)
    }

    pub fn part_entry_mut(&mut self, part_id: &PartId) -> Option<&mut PartEntry> {
        self.part_table.iter_mut().find(|e| &e.part_id == part_id)
    }

    /// Checks table uniqueness and that every participant of `parts` has
    /// registered keys.
    pub fn validate(&self, parts: &[StoragePart]) -> Result<(), StorageError> {
        let mut ids = BTreeSet::new();
        for e in &self.part_table {
            if !ids.insert(&e.part_id) {
                return Err(StorageError::InvalidInput(format!("duplicate part id {}", e.part_id)));
            }
        }
        for part in parts {
            part.validate()?;
            for c in &part.chatrooms {
                if !c.has(&self.owner) {
                    return Err(StorageError::InvalidInput(format!(
                        "owner {} is not in chatroom {}",
                        self.owner, c.id
                    )));
                }
                if let Some(p) = c.peers_of(&self.owner).find(|p| !self.peer_keys.contains_key(*p)) {
                    return Err(StorageError::InvalidInput(format!("peer {p} has no keys")));
                }
            }
        }
        Ok(())
    }
}

/// The wrapping keys and the two encryptions of `P_S` produced by one share
/// distribution.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RecoveryKeys {
    /// `K_CTS`.
    pub k_cts: SymmetricKey,
    /// `K_TS`.
    pub k_ts: SymmetricKey,
    /// `S_CTS = {P_S}_{K_CTS}`.
    pub s_cts: Ciphertext,
    /// `S_TS = {P_S}_{K_TS}`.
    pub s_ts: Ciphertext,
}

impl RecoveryKeys {
    /// Decrypts both wrapped secrets and checks they agree.
    pub fn unwrap_storage_key(&self, backend: &dyn CryptoBackend) -> Result<SymmetricKey, StorageError> {
        let a = backend.sym_decrypt(&self.k_cts, &self.s_cts)?;
        let b = backend.sym_decrypt(&self.k_ts, &self.s_ts)?;
        if a != b {
            return Err(StorageError::InvalidInput("S_CTS and S_TS wrap different keys".into()));
        }
        Ok(SymmetricKey::try_from_slice(&a)?)
    }
}
