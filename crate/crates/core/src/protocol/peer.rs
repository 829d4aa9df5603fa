use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand_core::CryptoRngCore;

use super::message::{
    rid_statement, MessageKind, ProtocolMessage, RecoveryConfirmedBody, RecoveryFinishedBody, RecoveryRequestBody, Rid,
    ShareDeliveryBody, SystemMessageBody, SystemRecord,
};
use super::server::Server;
use super::ProtocolError;
use crate::codec::to_canonical_json;
use crate::crypto::{CryptoBackend, Signature};
use crate::sharing::Share;
use crate::storage::{Chatroom, HeldShare, PeerKeys, Storage, UserId};

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AuditRecord {
    /// A request or finish notice failed verification and was dropped.
    Rejected {
        rid: Rid,
        sender: UserId,
        reason: String,
    },
    /// No RecoveryConfirmed was visible; the request waits for a re-check.
    Deferred {
        rid: Rid,
        owner: UserId,
    },
    Released {
        rid: Rid,
        owner: UserId,
        shares: usize,
        system_messages: usize,
    },
}

/// A shareholder: keeps shares inside its own storage and releases them only
/// for confirmed, unfinished recoveries.
#[derive(Debug)]
pub struct Peer {
    backend: Arc<dyn CryptoBackend>,
    storage: Storage,
    chatrooms: Vec<Chatroom>,
    pending: BTreeMap<Rid, ProtocolMessage>,
    released: BTreeSet<Rid>,
    finished: BTreeSet<Rid>,
    audit: Vec<AuditRecord>,
}

impl Peer {
    /// `chatrooms` are the rooms this peer is a member of.
    pub fn new(backend: Arc<dyn CryptoBackend>, storage: Storage, chatrooms: Vec<Chatroom>) -> Self {
        Peer {
            backend,
            storage,
            chatrooms,
            pending: BTreeMap::new(),
            released: BTreeSet::new(),
            finished: BTreeSet::new(),
            audit: Vec::new(),
        }
    }

    pub fn id(&self) -> &UserId {
        &self.storage.owner
    }

    pub fn public_keys(&self) -> PeerKeys {
        self.storage.public_keys()
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn held_shares_for(&self, owner: &UserId) -> impl Iterator<Item = &HeldShare> {
        let owner = owner.clone();
        self.storage.held_shares.iter().filter(move |h| h.owner == owner)
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Stores a share from a distribution. A newer epoch from the same owner
    /// replaces all older shares; shares of an older epoch are ignored.
    pub fn receive_share(&mut self, msg: &ProtocolMessage, server: &Server) -> Result<(), ProtocolError> {
        msg.expect_kind(MessageKind::ShareDelivery)?;
        if msg.recipient != *self.id() {
            return Err(ProtocolError::InvalidMessage("share addressed to another peer".into()));
        }
        let body: ShareDeliveryBody = msg.decode_body()?;
        let sender_keys =
            server.public_keys(&msg.sender).ok_or_else(|| ProtocolError::UnknownUser(msg.sender.clone()))?;
        if body.owner != msg.sender || !msg.verify(&*self.backend, &sender_keys.sig) {
            return Err(ProtocolError::BadSignature);
        }
        let plain = self.backend.asym_decrypt(&self.storage.enc_pair.private, &body.share)?;
        let share = Share::from_bytes(&plain)?;

        let held = &mut self.storage.held_shares;
        let newest = held.iter().filter(|h| h.owner == body.owner).map(|h| h.epoch).max();
        match newest {
            Some(e) if e > body.epoch => return Ok(()),
            Some(e) if e < body.epoch => held.retain(|h| h.owner != body.owner),
            _ => {}
        }
        let record =
            HeldShare { owner: body.owner, scheme: body.scheme, epoch: body.epoch, threshold: body.threshold, share };
        if !held.contains(&record) {
            held.push(record);
        }
        Ok(())
    }

    /// Verifies the user's signed rid (obtained out of band) against the
    /// fresh key the server published, then countersigns it.
    pub fn confirm_recovery(
        &self,
        rid: &Rid,
        user_signed_rid: &Signature,
        server: &Server,
    ) -> Result<ProtocolMessage, ProtocolError> {
        let (owner, fresh) = server.session_keys(rid).ok_or_else(|| ProtocolError::UnknownSession(rid.clone()))?;
        if !self.backend.verify(&fresh.sig, &rid_statement(rid), user_signed_rid) {
            return Err(ProtocolError::ConfirmationRejected("user signature over rid does not verify".into()));
        }
        if !self.chatrooms.iter().any(|c| c.has(owner)) {
            return Err(ProtocolError::NotAPeer(self.id().clone()));
        }
        ProtocolMessage::signed(
            &*self.backend,
            MessageKind::RecoveryConfirmed,
            rid.clone(),
            self.id().clone(),
            super::message::server_id(),
            &RecoveryConfirmedBody { owner: owner.clone(), user_signed_rid: user_signed_rid.clone() },
            &self.storage.sig_pair.private,
        )
    }

    /// Answers a RecoveryRequest. Without a visible confirmation nothing is
    /// released and the request is kept for [`Peer::recheck`].
    pub fn handle_request(
        &mut self,
        msg: &ProtocolMessage,
        server: &Server,
        rng: &mut dyn CryptoRngCore,
    ) -> Vec<ProtocolMessage> {
        let reject = |reason: &str| AuditRecord::Rejected {
            rid: msg.rid.clone(),
            sender: msg.sender.clone(),
            reason: reason.to_owned(),
        };
        if msg.kind != MessageKind::RecoveryRequest {
            self.audit.push(reject("not a RecoveryRequest"));
            return Vec::new();
        }
        let body: RecoveryRequestBody = match msg.decode_body() {
            Ok(b) => b,
            Err(_) => {
                self.audit.push(reject("malformed body"));
                return Vec::new();
            }
        };
        let verified = server.session_keys(&msg.rid).is_some_and(|(owner, fresh)| {
            *owner == body.owner && *fresh == body.keys && msg.verify(&*self.backend, &fresh.sig)
        });
        if !verified {
            self.audit.push(reject("request does not match a live session"));
            return Vec::new();
        }
        if self.finished.contains(&msg.rid) || server.is_finished(&msg.rid) || self.released.contains(&msg.rid) {
            self.pending.remove(&msg.rid);
            return Vec::new();
        }
        if !server.is_confirmed(&msg.rid) {
            if self.pending.insert(msg.rid.clone(), msg.clone()).is_none() {
                self.audit.push(AuditRecord::Deferred { rid: msg.rid.clone(), owner: body.owner });
            }
            return Vec::new();
        }
        self.pending.remove(&msg.rid);
        match self.release(&msg.rid, &body, rng) {
            Ok(out) => out,
            Err(e) => {
                self.audit.push(reject(&e.to_string()));
                Vec::new()
            }
        }
    }

    /// Re-examines deferred requests.
    pub fn recheck(&mut self, server: &Server, rng: &mut dyn CryptoRngCore) -> Vec<ProtocolMessage> {
        let waiting: Vec<ProtocolMessage> = self.pending.values().cloned().collect();
        waiting.iter().flat_map(|m| self.handle_request(m, server, rng)).collect()
    }

    pub fn handle_finished(&mut self, msg: &ProtocolMessage, server: &Server) {
        let ok = msg.kind == MessageKind::RecoveryFinished
            && msg.decode_body::<RecoveryFinishedBody>().is_ok_and(|b| {
                server
                    .session_keys(&msg.rid)
                    .is_some_and(|(owner, fresh)| *owner == b.owner && msg.verify(&*self.backend, &fresh.sig))
            });
        if ok {
            self.finished.insert(msg.rid.clone());
            self.pending.remove(&msg.rid);
        } else {
            self.audit.push(AuditRecord::Rejected {
                rid: msg.rid.clone(),
                sender: msg.sender.clone(),
                reason: "invalid RecoveryFinished".into(),
            });
        }
    }

    fn release(
        &mut self,
        rid: &Rid,
        request: &RecoveryRequestBody,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let owner = &request.owner;
        let mut out = Vec::new();
        for held in self.held_shares_for(owner) {
            let body = ShareDeliveryBody {
                owner: owner.clone(),
                scheme: held.scheme.clone(),
                epoch: held.epoch,
                threshold: held.threshold,
                share: self.backend.asym_encrypt(&request.keys.enc, &held.share.to_bytes(), rng)?,
            };
            out.push(ProtocolMessage::signed(
                &*self.backend,
                MessageKind::ShareDelivery,
                rid.clone(),
                self.id().clone(),
                owner.clone(),
                &body,
                &self.storage.sig_pair.private,
            )?);
        }
        let shares = out.len();
        if shares > 0 {
            let record = to_canonical_json(&SystemRecord {
                rid: rid.clone(),
                owner: owner.clone(),
                releaser: self.id().clone(),
            })?;
            for room in self.chatrooms.iter().filter(|c| c.has(owner)) {
                let Some(key) = room.latest_key() else { continue };
                let body = SystemMessageBody {
                    chatroom: room.id.clone(),
                    record: self.backend.sym_encrypt(key, &record, rng),
                };
                out.push(ProtocolMessage::signed(
                    &*self.backend,
                    MessageKind::SystemMessage,
                    rid.clone(),
                    self.id().clone(),
                    UserId::new(room.id.as_str()),
                    &body,
                    &self.storage.sig_pair.private,
                )?);
            }
        }
        self.released.insert(rid.clone());
        self.audit.push(AuditRecord::Released {
            rid: rid.clone(),
            owner: owner.clone(),
            shares,
            system_messages: out.len() - shares,
        });
        Ok(out)
    }
}
