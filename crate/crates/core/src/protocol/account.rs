use std::collections::BTreeMap;
use std::sync::Arc;

use rand_core::CryptoRngCore;

use super::distribute::{distribute_shares, Distribution, DistributionConfig};
use super::message::{ProtocolMessage, Rid};
use super::server::{BackupUpload, Credentials, Server, ServerKeys};
use super::session::RecoverySession;
use super::ProtocolError;
use crate::crypto::{CryptoBackend, Password, Purpose, Salt, SymmetricKey};
use crate::storage::{
    partition_chatrooms, seal_part, seal_storage, Chatroom, PartId, PeerKeys, Storage, StoragePart, UserId,
};

/// The owner's live state: storage, parts and the password-derived keys.
#[derive(Debug)]
pub struct Account {
    backend: Arc<dyn CryptoBackend>,
    storage: Storage,
    parts: Vec<StoragePart>,
    p_s: SymmetricKey,
    p_a: SymmetricKey,
    credentials: Credentials,
}

fn derive_credentials(
    backend: &dyn CryptoBackend,
    password: &Password,
    rng: &mut dyn CryptoRngCore,
) -> Result<(SymmetricKey, SymmetricKey, Credentials), ProtocolError> {
    let salt_s = Salt::random(rng);
    let salt_a = Salt::random(rng);
    let p_s = backend.derive_key(password, &salt_s, Purpose::Storage)?;
    let p_a = backend.derive_key(password, &salt_a, Purpose::Auth)?;
    let credentials = Credentials::new(salt_s, salt_a, &p_a);
    Ok((p_s, p_a, credentials))
}

impl Account {
    /// New account with fresh key pairs and salts.
    pub fn create(
        backend: Arc<dyn CryptoBackend>,
        owner: UserId,
        password: &Password,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Self, ProtocolError> {
        let enc = backend.generate_enc_pair(rng);
        let sig = backend.generate_sig_pair(rng);
        let (p_s, p_a, credentials) = derive_credentials(&*backend, password, rng)?;
        Ok(Account { storage: Storage::new(owner, enc, sig), parts: Vec::new(), p_s, p_a, credentials, backend })
    }

    /// Rebuilds the account from a finished recovery under a new password
    /// and replaces the credentials on the server.
    pub fn restore(
        backend: Arc<dyn CryptoBackend>,
        session: RecoverySession,
        new_password: &Password,
        server: &mut Server,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Self, ProtocolError> {
        let rid: Rid = session.rid().clone();
        let (storage, parts, _) = session.into_recovered()?;
        let (p_s, p_a, credentials) = derive_credentials(&*backend, new_password, rng)?;
        server.reset_credentials(&rid, credentials.clone())?;
        Ok(Account { backend, storage, parts, p_s, p_a, credentials })
    }

    pub fn backend(&self) -> &Arc<dyn CryptoBackend> {
        &self.backend
    }

    pub fn owner(&self) -> &UserId {
        &self.storage.owner
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn parts(&self) -> &[StoragePart] {
        &self.parts
    }

    pub fn storage_key(&self) -> &SymmetricKey {
        &self.p_s
    }

    pub fn public_keys(&self) -> PeerKeys {
        self.storage.public_keys()
    }

    pub fn register(&self, server: &mut Server) -> Result<(), ProtocolError> {
        server.register(self.owner().clone(), self.public_keys(), self.credentials.clone())
    }

    pub fn learn_peer(&mut self, peer: UserId, keys: PeerKeys) {
        self.storage.peer_keys.insert(peer, keys);
    }

    /// Replaces the parts by a round-robin partition of `chatrooms` into `p`
    /// parts, each with a fresh key.
    pub fn assign_chatrooms(
        &mut self,
        chatrooms: &[Chatroom],
        p: usize,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(), ProtocolError> {
        let groups = partition_chatrooms(chatrooms, p)?;
        self.storage.part_table.clear();
        self.parts.clear();
        for (i, rooms) in groups.into_iter().enumerate() {
            let id = PartId::new(format!("{}-part-{i}", self.owner()));
            self.storage.add_part(id.clone(), SymmetricKey::random(rng))?;
            self.parts.push(StoragePart::new(id, rooms));
        }
        Ok(())
    }

    /// Distributes fresh shares, seals every part and the storage, and
    /// uploads the wrapping keys and blobs. Returns the ShareDeliveries to
    /// route to peers.
    pub fn backup(
        &mut self,
        server: &mut Server,
        config: &DistributionConfig,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(Distribution, Vec<ProtocolMessage>), ProtocolError> {
        let mut dist = distribute_shares(&*self.backend, &mut self.storage, &mut self.parts, &self.p_s, config, rng)?;
        let mut part_blobs = BTreeMap::new();
        for part in &self.parts {
            let entry = self.storage.part_entry(&part.id).expect("part is in the table");
            let blob = seal_part(&*self.backend, part, &entry.part_key, rng)?;
            let hash = blob.digest();
            self.storage.part_entry_mut(&part.id).expect("part is in the table").part_hash = hash;
            part_blobs.insert(part.id.clone(), blob);
        }
        let storage_blob = seal_storage(&*self.backend, &self.storage, &self.p_s, rng)?;
        let upload = BackupUpload {
            keys: ServerKeys { k_cts: dist.keys.k_cts.clone(), k_ts: dist.keys.k_ts.clone() },
            storage: storage_blob,
            parts: part_blobs,
        };
        server.store_backup(self.owner(), &self.p_a, upload)?;
        let deliveries = std::mem::take(&mut dist.deliveries);
        Ok((dist, deliveries))
    }
}
