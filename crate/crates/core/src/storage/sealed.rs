//! Sealed blob container.
//!
//! ```text
//! "PSTR" | kind u8 | version u8 (=1) | nonce [12] | body length u32 BE | body | tag [16]
//! ```

use rand_core::CryptoRngCore;

use super::{Digest32, Storage, StorageError, StoragePart};
use crate::codec::{from_json, to_canonical_json};
use crate::crypto::{digest, Ciphertext, CryptoBackend, SymmetricKey, NONCE_LEN, TAG_LEN};

pub const MAGIC: &[u8; 4] = b"PSTR";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + NONCE_LEN + 4;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BlobKind {
    Storage = 1,
    StoragePart = 2,
}

impl BlobKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(BlobKind::Storage),
            2 => Some(BlobKind::StoragePart),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SealedBlob {
    pub kind: BlobKind,
    pub ciphertext: Ciphertext,
}

impl SealedBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        let body = &self.ciphertext.body;
        let mut out = Vec::with_capacity(HEADER_LEN + body.len() + TAG_LEN);
        out.extend_from_slice(MAGIC);
        out.push(self.kind as u8);
        out.push(VERSION);
        out.extend_from_slice(&self.ciphertext.nonce);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(body);
        out.extend_from_slice(&self.ciphertext.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StorageError> {
        let malformed = |m: &str| StorageError::MalformedBlob(m.to_owned());
        if bytes.len() < HEADER_LEN + TAG_LEN {
            return Err(malformed("truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(malformed("bad magic"));
        }
        let kind = BlobKind::from_byte(bytes[4]).ok_or_else(|| malformed("unknown kind"))?;
        if bytes[5] != VERSION {
            return Err(malformed("unsupported version"));
        }
        let nonce: [u8; NONCE_LEN] = bytes[6..6 + NONCE_LEN].try_into().expect("nonce length");
        let len_at = 6 + NONCE_LEN;
        let body_len = u32::from_be_bytes(bytes[len_at..len_at + 4].try_into().expect("4 bytes")) as usize;
        let expected = HEADER_LEN
            .checked_add(body_len)
            .and_then(|n| n.checked_add(TAG_LEN))
            .ok_or_else(|| malformed("length overflow"))?;
        if bytes.len() != expected {
            return Err(malformed("length field does not match blob size"));
        }
        let body = bytes[HEADER_LEN..HEADER_LEN + body_len].to_vec();
        let tag: [u8; TAG_LEN] = bytes[HEADER_LEN + body_len..].try_into().expect("tag length");
        Ok(SealedBlob { kind, ciphertext: Ciphertext { nonce, body, tag } })
    }

    /// SHA-256 of the serialized blob; stored as `part_hash`.
    pub fn digest(&self) -> Digest32 {
        Digest32(digest(&self.to_bytes()))
    }
}

fn seal<T: serde::Serialize>(
    backend: &dyn CryptoBackend,
    kind: BlobKind,
    value: &T,
    key: &SymmetricKey,
    rng: &mut dyn CryptoRngCore,
) -> Result<SealedBlob, StorageError> {
    let plain = to_canonical_json(value)?;
    Ok(SealedBlob { kind, ciphertext: backend.sym_encrypt(key, &plain, rng) })
}

fn open<T: serde::de::DeserializeOwned>(
    backend: &dyn CryptoBackend,
    kind: BlobKind,
    blob: &SealedBlob,
    key: &SymmetricKey,
) -> Result<T, StorageError> {
    if blob.kind != kind {
        return Err(StorageError::WrongBlobKind { expected: kind, found: blob.kind });
    }
    let plain = backend.sym_decrypt(key, &blob.ciphertext)?;
    Ok(from_json(&plain)?)
}

/// Seals the storage under `P_S`.
pub fn seal_storage(
    backend: &dyn CryptoBackend,
    storage: &Storage,
    p_s: &SymmetricKey,
    rng: &mut dyn CryptoRngCore,
) -> Result<SealedBlob, StorageError> {
    seal(backend, BlobKind::Storage, storage, p_s, rng)
}

pub fn open_storage(
    backend: &dyn CryptoBackend,
    blob: &SealedBlob,
    p_s: &SymmetricKey,
) -> Result<Storage, StorageError> {
    open(backend, BlobKind::Storage, blob, p_s)
}

/// Seals a part under its own key `k_SP`.
pub fn seal_part(
    backend: &dyn CryptoBackend,
    part: &StoragePart,
    k_sp: &SymmetricKey,
    rng: &mut dyn CryptoRngCore,
) -> Result<SealedBlob, StorageError> {
    seal(backend, BlobKind::StoragePart, part, k_sp, rng)
}

pub fn open_part(
    backend: &dyn CryptoBackend,
    blob: &SealedBlob,
    k_sp: &SymmetricKey,
) -> Result<StoragePart, StorageError> {
    open(backend, BlobKind::StoragePart, blob, k_sp)
}
