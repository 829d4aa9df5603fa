use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand_core::CryptoRngCore;

use super::distribute::unwrap_part_key;
use super::message::{
    rid_statement, server_id, InitializeRecoveryBody, MessageKind, ProtocolMessage, RecoveryFinishedBody,
    RecoveryRequestBody, Rid, ShareDeliveryBody,
};
use super::server::{RecoveryGrant, Server};
use super::ProtocolError;
use crate::crypto::{Ciphertext, CryptoBackend, EncKeyPair, SigKeyPair, Signature, SymmetricKey};
use crate::sharing::{reconstruct, Share};
use crate::storage::{open_part, open_storage, PartId, PeerKeys, ShareScheme, Storage, StoragePart, UserId};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum SessionStatus {
    AwaitingConfirmation,
    Collecting,
    StorageRecovered,
    Finished,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum IngestOutcome {
    Added,
    Duplicate,
    /// Share for a part the server has no blob for.
    Parked,
    /// Share from an older distribution than ones already collected.
    Stale,
}

/// Shares of one sharing instance, all from the newest epoch seen.
#[derive(Clone, Debug)]
struct Bucket {
    epoch: u64,
    threshold: usize,
    shares: Vec<Share>,
}

impl Bucket {
    fn new(epoch: u64, threshold: usize) -> Self {
        Bucket { epoch, threshold, shares: Vec::new() }
    }

    fn add(&mut self, epoch: u64, threshold: usize, share: Share) -> IngestOutcome {
        if epoch < self.epoch {
            return IngestOutcome::Stale;
        }
        if epoch > self.epoch {
            *self = Bucket::new(epoch, threshold);
        }
        if self.shares.iter().any(|s| s.x == share.x) {
            return IngestOutcome::Duplicate;
        }
        self.shares.push(share);
        IngestOutcome::Added
    }

    fn ready(&self) -> bool {
        self.threshold > 0 && self.shares.len() >= self.threshold
    }
}

/// The recovering user's side of one recovery attempt.
#[derive(Debug)]
pub struct RecoverySession {
    backend: Arc<dyn CryptoBackend>,
    rid: Rid,
    owner: UserId,
    fresh_enc: EncKeyPair,
    fresh_sig: SigKeyPair,
    grant: Option<RecoveryGrant>,
    ts: Option<Bucket>,
    parts: BTreeMap<PartId, Bucket>,
    parked: Vec<(PartId, u64, usize, Share)>,
    recovered_parts: BTreeMap<PartId, StoragePart>,
    failed_parts: BTreeSet<PartId>,
    p_s: Option<SymmetricKey>,
    storage: Option<Storage>,
    status: SessionStatus,
    faults: Vec<String>,
}

impl RecoverySession {
    /// Starts a session for `rid` with freshly generated key pairs.
    pub fn new(backend: Arc<dyn CryptoBackend>, owner: UserId, rid: Rid, rng: &mut dyn CryptoRngCore) -> Self {
        let fresh_enc = backend.generate_enc_pair(rng);
        let fresh_sig = backend.generate_sig_pair(rng);
        RecoverySession {
            backend,
            rid,
            owner,
            fresh_enc,
            fresh_sig,
            grant: None,
            ts: None,
            parts: BTreeMap::new(),
            parked: Vec::new(),
            recovered_parts: BTreeMap::new(),
            failed_parts: BTreeSet::new(),
            p_s: None,
            storage: None,
            status: SessionStatus::AwaitingConfirmation,
            faults: Vec::new(),
        }
    }

    pub fn rid(&self) -> &Rid {
        &self.rid
    }

    pub fn owner(&self) -> &UserId {
        &self.owner
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn fresh_keys(&self) -> PeerKeys {
        PeerKeys { enc: self.fresh_enc.public.clone(), sig: self.fresh_sig.public.clone() }
    }

    pub fn grant(&self) -> Option<&RecoveryGrant> {
        self.grant.as_ref()
    }

    pub fn storage(&self) -> Option<&Storage> {
        self.storage.as_ref()
    }

    pub fn storage_key(&self) -> Option<&SymmetricKey> {
        self.p_s.as_ref()
    }

    pub fn recovered_parts(&self) -> &BTreeMap<PartId, StoragePart> {
        &self.recovered_parts
    }

    pub fn ts_share_count(&self) -> usize {
        self.ts.as_ref().map_or(0, |b| b.shares.len())
    }

    pub fn part_share_count(&self, part: &PartId) -> usize {
        self.parts.get(part).map_or(0, |b| b.shares.len())
    }

    pub fn parked_count(&self) -> usize {
        self.parked.len()
    }

    /// Reconstruction failures seen so far, as messages.
    pub fn faults(&self) -> &[String] {
        &self.faults
    }

    /// Recovered fraction of the `total` parts; 1 once the storage is open.
    pub fn parts_fraction(&self, total: usize) -> f64 {
        if self.storage.is_some() {
            1.0
        } else if total == 0 {
            0.0
        } else {
            self.recovered_parts.len() as f64 / total as f64
        }
    }

    /// Self-signed InitializeRecovery carrying the fresh public keys.
    pub fn initialize_message(&self) -> Result<ProtocolMessage, ProtocolError> {
        ProtocolMessage::signed(
            &*self.backend,
            MessageKind::InitializeRecovery,
            self.rid.clone(),
            self.owner.clone(),
            server_id(),
            &InitializeRecoveryBody { owner: self.owner.clone(), keys: self.fresh_keys() },
            &self.fresh_sig.private,
        )
    }

    pub fn accept_grant(&mut self, grant: RecoveryGrant) -> Result<(), ProtocolError> {
        if grant.rid != self.rid || grant.owner != self.owner {
            return Err(ProtocolError::InvalidMessage("grant is for another session".into()));
        }
        self.grant = Some(grant);
        Ok(())
    }

    /// The rid statement signed with the fresh key, shown to a peer out of band.
    pub fn sign_rid(&self) -> Result<Signature, ProtocolError> {
        Ok(self.backend.sign(&self.fresh_sig.private, &rid_statement(&self.rid))?)
    }

    /// Moves to Collecting once the server reports enough confirmations.
    pub fn refresh(&mut self, server: &Server) {
        if self.status == SessionStatus::AwaitingConfirmation && server.is_confirmed(&self.rid) {
            self.status = SessionStatus::Collecting;
        }
    }

    /// One RecoveryRequest per peer named in the grant.
    pub fn recovery_requests(&self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let grant = self.require_grant()?;
        let body = RecoveryRequestBody { owner: self.owner.clone(), keys: self.fresh_keys() };
        grant
            .peers
            .iter()
            .map(|p| {
                ProtocolMessage::signed(
                    &*self.backend,
                    MessageKind::RecoveryRequest,
                    self.rid.clone(),
                    self.owner.clone(),
                    p.clone(),
                    &body,
                    &self.fresh_sig.private,
                )
            })
            .collect()
    }

    /// Verifies and decrypts a released share, files it, and retries
    /// reconstruction. Reconstruction failures are recorded in
    /// [`RecoverySession::faults`] rather than returned.
    pub fn ingest_share(&mut self, msg: &ProtocolMessage, server: &Server) -> Result<IngestOutcome, ProtocolError> {
        msg.expect_kind(MessageKind::ShareDelivery)?;
        if self.status == SessionStatus::Finished {
            return Err(ProtocolError::InvalidState("session finished".into()));
        }
        if msg.rid != self.rid {
            return Err(ProtocolError::InvalidMessage("share for another recovery".into()));
        }
        let sender = server.public_keys(&msg.sender).ok_or_else(|| ProtocolError::UnknownUser(msg.sender.clone()))?;
        if !msg.verify(&*self.backend, &sender.sig) {
            return Err(ProtocolError::BadSignature);
        }
        let body: ShareDeliveryBody = msg.decode_body()?;
        if body.owner != self.owner {
            return Err(ProtocolError::InvalidMessage("share for another owner".into()));
        }
        let plain = self.backend.asym_decrypt(&self.fresh_enc.private, &body.share)?;
        let share = Share::from_bytes(&plain)?;
        let threshold = body.threshold as usize;

        let outcome = match body.scheme {
            ShareScheme::Ts => {
                self.ts.get_or_insert_with(|| Bucket::new(body.epoch, threshold)).add(body.epoch, threshold, share)
            }
            ShareScheme::CtsPart { part_id } => {
                let known = self.grant.as_ref().is_some_and(|g| g.part_blobs.contains_key(&part_id));
                if !known {
                    self.parked.push((part_id, body.epoch, threshold, share));
                    return Ok(IngestOutcome::Parked);
                }
                let outcome = self
                    .parts
                    .entry(part_id.clone())
                    .or_insert_with(|| Bucket::new(body.epoch, threshold))
                    .add(body.epoch, threshold, share);
                if outcome == IngestOutcome::Added {
                    if let Err(e) = self.try_reconstruct_part(&part_id) {
                        self.faults.push(e.to_string());
                    }
                }
                outcome
            }
        };
        if outcome == IngestOutcome::Added {
            if let Err(e) = self.try_reconstruct_storage() {
                self.faults.push(e.to_string());
            }
        }
        Ok(outcome)
    }

    /// Rebuilds the part's wrapped key once its threshold is met, unwraps it
    /// with `K_CTS` and opens the sealed part.
    pub fn try_reconstruct_part(&mut self, part_id: &PartId) -> Result<Option<&StoragePart>, ProtocolError> {
        if self.recovered_parts.contains_key(part_id) {
            return Ok(self.recovered_parts.get(part_id));
        }
        let Some(bucket) = self.parts.get(part_id).filter(|b| b.ready()) else {
            return Ok(None);
        };
        // Reconstruction always uses the first `threshold` shares, so a failure is final.
        if self.failed_parts.contains(part_id) {
            return Err(ProtocolError::ReconstructionCorrupt(format!("part {part_id}")));
        }
        let grant = self.require_grant()?;
        let corrupt = |what: &str| ProtocolError::ReconstructionCorrupt(format!("part {part_id}: {what}"));
        let result = (|| {
            let secret = reconstruct(&bucket.shares, bucket.threshold).map_err(|e| corrupt(&e.to_string()))?;
            let wrapped = Ciphertext::try_from_slice(&secret).map_err(|_| corrupt("bad wrapped key framing"))?;
            let k_sp =
                unwrap_part_key(&*self.backend, &wrapped, &grant.k_cts).map_err(|_| corrupt("wrapped key rejected"))?;
            let blob = grant.part_blobs.get(part_id).ok_or_else(|| corrupt("no sealed blob"))?;
            let part = open_part(&*self.backend, blob, &k_sp).map_err(|_| corrupt("sealed part rejected"))?;
            if part.id != *part_id {
                return Err(corrupt("part id mismatch"));
            }
            Ok(part)
        })();
        match result {
            Ok(part) => {
                self.recovered_parts.insert(part_id.clone(), part);
                Ok(self.recovered_parts.get(part_id))
            }
            Err(e) => {
                self.failed_parts.insert(part_id.clone());
                Err(e)
            }
        }
    }

    /// Evaluates both routes without changing state: route A rebuilds `S_TS`
    /// from TS shares, route B rebuilds `S_CTS` from the recovered parts'
    /// embedded shares.
    pub fn reconstruct_routes(&self) -> Result<(Option<SymmetricKey>, Option<SymmetricKey>), ProtocolError> {
        let grant = self.require_grant()?;
        let open = |shares: &[Share], t: usize, key: &SymmetricKey, route: &str| {
            let corrupt = |what: &str| ProtocolError::ReconstructionCorrupt(format!("route {route}: {what}"));
            let secret = reconstruct(shares, t).map_err(|e| corrupt(&e.to_string()))?;
            let ct = Ciphertext::try_from_slice(&secret).map_err(|_| corrupt("bad framing"))?;
            let plain = self.backend.sym_decrypt(key, &ct).map_err(|_| corrupt("decryption rejected"))?;
            SymmetricKey::try_from_slice(&plain).map_err(|_| corrupt("wrong key length"))
        };

        let route_a = match &self.ts {
            Some(b) if b.ready() => Some(open(&b.shares, b.threshold, &grant.k_ts, "A")?),
            _ => None,
        };

        let embedded: Vec<(&Share, u32)> =
            self.recovered_parts.values().filter_map(|p| Some((p.cts_share.as_ref()?, p.cts_quorum?))).collect();
        let route_b = match embedded.first() {
            Some(&(_, q)) if q > 0 && embedded.len() >= q as usize => {
                let shares: Vec<Share> = embedded.iter().map(|(s, _)| (*s).clone()).collect();
                Some(open(&shares, q as usize, &grant.k_cts, "B")?)
            }
            _ => None,
        };

        if let (Some(a), Some(b)) = (&route_a, &route_b) {
            if a != b {
                return Err(ProtocolError::ReconstructionCorrupt("routes A and B disagree".into()));
            }
        }
        Ok((route_a, route_b))
    }

    /// Recovers `P_S` by either route, opens the sealed storage and then
    /// every part listed in its part table.
    pub fn try_reconstruct_storage(&mut self) -> Result<Option<SymmetricKey>, ProtocolError> {
        if let Some(p_s) = &self.p_s {
            return Ok(Some(p_s.clone()));
        }
        let (a, b) = self.reconstruct_routes()?;
        let Some(p_s) = a.or(b) else {
            return Ok(None);
        };
        let grant = self.require_grant()?;
        let corrupt = |what: String| ProtocolError::ReconstructionCorrupt(what);
        let storage = open_storage(&*self.backend, &grant.storage_blob, &p_s)
            .map_err(|e| corrupt(format!("sealed storage rejected: {e}")))?;
        if storage.owner != self.owner {
            return Err(corrupt("storage belongs to another user".into()));
        }
        let mut parts = BTreeMap::new();
        for entry in &storage.part_table {
            let blob = grant
                .part_blobs
                .get(&entry.part_id)
                .ok_or_else(|| corrupt(format!("no blob for part {}", entry.part_id)))?;
            if blob.digest() != entry.part_hash {
                return Err(corrupt(format!("hash mismatch for part {}", entry.part_id)));
            }
            let part = open_part(&*self.backend, blob, &entry.part_key)
                .map_err(|e| corrupt(format!("part {}: {e}", entry.part_id)))?;
            parts.insert(entry.part_id.clone(), part);
        }
        self.recovered_parts = parts;
        self.parked.clear();
        self.storage = Some(storage);
        self.p_s = Some(p_s.clone());
        self.status = SessionStatus::StorageRecovered;
        Ok(Some(p_s))
    }

    /// RecoveryFinished for every peer and the server.
    pub fn finish(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        if self.status != SessionStatus::StorageRecovered {
            return Err(ProtocolError::InvalidState(format!("cannot finish from {:?}", self.status)));
        }
        let grant = self.require_grant()?;
        let body = RecoveryFinishedBody { owner: self.owner.clone() };
        let out = grant
            .peers
            .iter()
            .cloned()
            .chain(std::iter::once(server_id()))
            .map(|to| {
                ProtocolMessage::signed(
                    &*self.backend,
                    MessageKind::RecoveryFinished,
                    self.rid.clone(),
                    self.owner.clone(),
                    to,
                    &body,
                    &self.fresh_sig.private,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.status = SessionStatus::Finished;
        Ok(out)
    }

    /// Recovered storage, parts in part-table order and `P_S`.
    pub fn into_recovered(self) -> Result<(Storage, Vec<StoragePart>, SymmetricKey), ProtocolError> {
        let (Some(storage), Some(p_s)) = (self.storage, self.p_s) else {
            return Err(ProtocolError::InvalidState("storage not recovered".into()));
        };
        let mut parts = self.recovered_parts;
        let ordered = storage.part_table.iter().filter_map(|e| parts.remove(&e.part_id)).collect();
        Ok((storage, ordered, p_s))
    }

    fn require_grant(&self) -> Result<&RecoveryGrant, ProtocolError> {
        self.grant.as_ref().ok_or_else(|| ProtocolError::InvalidState("no grant from the server yet".into()))
    }
}
