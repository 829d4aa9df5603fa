use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand_core::RngCore;

use super::message::{
    rid_statement, InitializeRecoveryBody, MessageKind, ProtocolMessage, RecoveryConfirmedBody, RecoveryFinishedBody,
    Rid,
};
use super::ProtocolError;
use crate::crypto::{digest, CryptoBackend, Salt, SymmetricKey};
use crate::storage::{ChatroomId, Digest32, PartId, PeerKeys, SealedBlob, UserId};

/// What the server keeps of a distribution: the wrapping keys only. `S_CTS`
/// and `S_TS` exist solely as shares held by parts and peers.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ServerKeys {
    pub k_cts: SymmetricKey,
    pub k_ts: SymmetricKey,
}

/// Password-derived material the server may store.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Credentials {
    pub salt_s: Salt,
    pub salt_a: Salt,
    /// `SHA-256(P_A)`.
    pub verifier: Digest32,
}

impl Credentials {
    pub fn new(salt_s: Salt, salt_a: Salt, p_a: &SymmetricKey) -> Self {
        Credentials { salt_s, salt_a, verifier: Digest32(digest(p_a.as_bytes())) }
    }
}

/// Encrypted state uploaded after each distribution.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BackupUpload {
    pub keys: ServerKeys,
    pub storage: SealedBlob,
    pub parts: BTreeMap<PartId, SealedBlob>,
}

#[derive(Clone, Debug)]
struct AccountRecord {
    keys: PeerKeys,
    credentials: Credentials,
    backup: Option<BackupUpload>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum SessionState {
    Allocated,
    Initialized,
    Finished,
    Invalidated,
}

#[derive(Clone, Debug)]
struct SessionRecord {
    owner: UserId,
    state: SessionState,
    fresh_keys: Option<PeerKeys>,
    confirmers: BTreeSet<UserId>,
    confirmations: Vec<ProtocolMessage>,
    credentials_reset: bool,
}

/// Everything the recovering user receives after InitializeRecovery.
#[derive(Clone, Debug)]
pub struct RecoveryGrant {
    pub rid: Rid,
    pub owner: UserId,
    pub salt_s: Salt,
    pub salt_a: Salt,
    pub peers: Vec<UserId>,
    pub k_cts: SymmetricKey,
    pub k_ts: SymmetricKey,
    pub storage_blob: SealedBlob,
    pub part_blobs: BTreeMap<PartId, SealedBlob>,
}

/// The honest-but-curious server: directory of public keys, credential
/// verifiers, encrypted backups, chatroom participant lists and recovery
/// sessions.
#[derive(Debug)]
pub struct Server {
    backend: Arc<dyn CryptoBackend>,
    required_confirmers: usize,
    accounts: BTreeMap<UserId, AccountRecord>,
    chat_participants: BTreeMap<ChatroomId, BTreeSet<UserId>>,
    sessions: BTreeMap<Rid, SessionRecord>,
    current_session: BTreeMap<UserId, Rid>,
    record_transcript: bool,
    transcript: Vec<ProtocolMessage>,
}

impl Server {
    pub fn new(backend: Arc<dyn CryptoBackend>) -> Self {
        Server {
            backend,
            required_confirmers: 1,
            accounts: BTreeMap::new(),
            chat_participants: BTreeMap::new(),
            sessions: BTreeMap::new(),
            current_session: BTreeMap::new(),
            record_transcript: true,
            transcript: Vec::new(),
        }
    }

    /// Distinct peers whose RecoveryConfirmed is needed before shares flow.
    pub fn with_required_confirmers(mut self, n: usize) -> Self {
        self.required_confirmers = n.max(1);
        self
    }

    /// Relayed messages are kept only when recording is on.
    pub fn with_transcript(mut self, record: bool) -> Self {
        self.record_transcript = record;
        self
    }

    pub fn backend(&self) -> &dyn CryptoBackend {
        &*self.backend
    }

    pub fn register(&mut self, user: UserId, keys: PeerKeys, credentials: Credentials) -> Result<(), ProtocolError> {
        if self.accounts.contains_key(&user) {
            return Err(ProtocolError::InvalidState(format!("user {user} already registered")));
        }
        self.accounts.insert(user, AccountRecord { keys, credentials, backup: None });
        Ok(())
    }

    pub fn authenticate(&self, user: &UserId, p_a: &SymmetricKey) -> bool {
        self.accounts.get(user).is_some_and(|a| a.credentials.verifier == Digest32(digest(p_a.as_bytes())))
    }

    pub fn salts(&self, user: &UserId) -> Option<(Salt, Salt)> {
        self.accounts.get(user).map(|a| (a.credentials.salt_s, a.credentials.salt_a))
    }

    pub fn public_keys(&self, user: &UserId) -> Option<&PeerKeys> {
        self.accounts.get(user).map(|a| &a.keys)
    }

    pub fn publish_chatroom(&mut self, id: ChatroomId, participants: impl IntoIterator<Item = UserId>) {
        self.chat_participants.insert(id, participants.into_iter().collect());
    }

    /// Everyone sharing at least one chatroom with `user`, sorted.
    pub fn peers_of(&self, user: &UserId) -> Vec<UserId> {
        let set: BTreeSet<&UserId> = self
            .chat_participants
            .values()
            .filter(|members| members.contains(user))
            .flat_map(|members| members.iter())
            .filter(|m| *m != user)
            .collect();
        set.into_iter().cloned().collect()
    }

    pub fn shared_chatrooms(&self, a: &UserId, b: &UserId) -> Vec<ChatroomId> {
        self.chat_participants
            .iter()
            .filter(|(_, m)| m.contains(a) && m.contains(b))
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn store_backup(
        &mut self,
        user: &UserId,
        p_a: &SymmetricKey,
        upload: BackupUpload,
    ) -> Result<(), ProtocolError> {
        if !self.authenticate(user, p_a) {
            return Err(ProtocolError::AuthenticationFailed);
        }
        let account = self.accounts.get_mut(user).ok_or_else(|| ProtocolError::UnknownUser(user.clone()))?;
        account.backup = Some(upload);
        Ok(())
    }

    /// Allocates a fresh rid after the pluggable ownership check. Any earlier
    /// session of the user stops being valid.
    pub fn initiate_recovery(
        &mut self,
        user: &UserId,
        ownership_proof: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Rid, ProtocolError> {
        if !self.accounts.contains_key(user) {
            return Err(ProtocolError::UnknownUser(user.clone()));
        }
        if !ownership_proof {
            return Err(ProtocolError::OwnershipRejected);
        }
        if let Some(old) = self.current_session.get(user) {
            if let Some(s) = self.sessions.get_mut(old) {
                if s.state != SessionState::Finished {
                    s.state = SessionState::Invalidated;
                }
            }
        }
        let rid = Rid::random(rng);
        self.sessions.insert(
            rid.clone(),
            SessionRecord {
                owner: user.clone(),
                state: SessionState::Allocated,
                fresh_keys: None,
                confirmers: BTreeSet::new(),
                confirmations: Vec::new(),
                credentials_reset: false,
            },
        );
        self.current_session.insert(user.clone(), rid.clone());
        Ok(rid)
    }

    /// Registers the fresh public keys carried by a self-signed
    /// InitializeRecovery and hands out peers, wrapping keys and blobs.
    pub fn handle_initialize(&mut self, msg: &ProtocolMessage) -> Result<RecoveryGrant, ProtocolError> {
        self.observe(msg);
        msg.expect_kind(MessageKind::InitializeRecovery)?;
        let body: InitializeRecoveryBody = msg.decode_body()?;
        if !msg.verify(&*self.backend, &body.keys.sig) {
            return Err(ProtocolError::BadSignature);
        }
        let session = self.sessions.get_mut(&msg.rid).ok_or_else(|| ProtocolError::UnknownSession(msg.rid.clone()))?;
        if session.owner != body.owner || msg.sender != body.owner {
            return Err(ProtocolError::InvalidMessage("owner does not match session".into()));
        }
        if session.state != SessionState::Allocated {
            return Err(ProtocolError::StaleSession(msg.rid.clone()));
        }
        let account = &self.accounts[&session.owner];
        let backup = account
            .backup
            .as_ref()
            .ok_or_else(|| ProtocolError::InvalidState(format!("no backup stored for {}", session.owner)))?;
        session.state = SessionState::Initialized;
        session.fresh_keys = Some(body.keys);
        let owner = session.owner.clone();
        Ok(RecoveryGrant {
            rid: msg.rid.clone(),
            peers: self.peers_of(&owner),
            salt_s: account.credentials.salt_s,
            salt_a: account.credentials.salt_a,
            k_cts: backup.keys.k_cts.clone(),
            k_ts: backup.keys.k_ts.clone(),
            storage_blob: backup.storage.clone(),
            part_blobs: backup.parts.clone(),
            owner,
        })
    }

    /// Owner and fresh keys of a live (initialized, not invalidated) session.
    pub fn session_keys(&self, rid: &Rid) -> Option<(&UserId, &PeerKeys)> {
        let s = self.sessions.get(rid)?;
        match s.state {
            SessionState::Initialized | SessionState::Finished => Some((&s.owner, s.fresh_keys.as_ref()?)),
            _ => None,
        }
    }

    /// Validates a RecoveryConfirmed and records it. Returns whether the
    /// session now has enough distinct confirmers.
    pub fn accept_confirmation(&mut self, msg: &ProtocolMessage) -> Result<bool, ProtocolError> {
        self.observe(msg);
        msg.expect_kind(MessageKind::RecoveryConfirmed)?;
        let body: RecoveryConfirmedBody = msg.decode_body()?;
        let confirmer_keys =
            self.public_keys(&msg.sender).ok_or_else(|| ProtocolError::UnknownUser(msg.sender.clone()))?;
        if !msg.verify(&*self.backend, &confirmer_keys.sig) {
            return Err(ProtocolError::BadSignature);
        }
        let (owner, fresh) =
            self.session_keys(&msg.rid).ok_or_else(|| ProtocolError::UnknownSession(msg.rid.clone()))?;
        if *owner != body.owner {
            return Err(ProtocolError::ConfirmationRejected("owner does not match session".into()));
        }
        if !self.backend.verify(&fresh.sig, &rid_statement(&msg.rid), &body.user_signed_rid) {
            return Err(ProtocolError::ConfirmationRejected("user signature over rid does not verify".into()));
        }
        if !self.peers_of(owner).contains(&msg.sender) {
            return Err(ProtocolError::NotAPeer(msg.sender.clone()));
        }
        let required = self.required_confirmers;
        let session = self.sessions.get_mut(&msg.rid).expect("session exists");
        if session.state != SessionState::Initialized {
            return Err(ProtocolError::StaleSession(msg.rid.clone()));
        }
        if session.confirmers.insert(msg.sender.clone()) {
            session.confirmations.push(msg.clone());
        }
        Ok(session.confirmers.len() >= required)
    }

    /// True while the session is live and enough peers have confirmed it.
    pub fn is_confirmed(&self, rid: &Rid) -> bool {
        self.sessions
            .get(rid)
            .is_some_and(|s| s.state == SessionState::Initialized && s.confirmers.len() >= self.required_confirmers)
    }

    pub fn is_finished(&self, rid: &Rid) -> bool {
        self.sessions.get(rid).is_some_and(|s| s.state == SessionState::Finished)
    }

    pub fn confirmations(&self, rid: &Rid) -> &[ProtocolMessage] {
        self.sessions.get(rid).map_or(&[], |s| &s.confirmations)
    }

    pub fn handle_finished(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError> {
        self.observe(msg);
        msg.expect_kind(MessageKind::RecoveryFinished)?;
        let body: RecoveryFinishedBody = msg.decode_body()?;
        let (owner, fresh) =
            self.session_keys(&msg.rid).ok_or_else(|| ProtocolError::UnknownSession(msg.rid.clone()))?;
        if *owner != body.owner || !msg.verify(&*self.backend, &fresh.sig) {
            return Err(ProtocolError::BadSignature);
        }
        let session = self.sessions.get_mut(&msg.rid).expect("session exists");
        if session.state != SessionState::Initialized || session.confirmers.len() < self.required_confirmers {
            return Err(ProtocolError::StaleSession(msg.rid.clone()));
        }
        session.state = SessionState::Finished;
        Ok(())
    }

    /// Replaces the credentials of the owner of a finished session, once.
    pub fn reset_credentials(&mut self, rid: &Rid, credentials: Credentials) -> Result<(), ProtocolError> {
        let session = self.sessions.get_mut(rid).ok_or_else(|| ProtocolError::UnknownSession(rid.clone()))?;
        if session.state != SessionState::Finished || session.credentials_reset {
            return Err(ProtocolError::StaleSession(rid.clone()));
        }
        session.credentials_reset = true;
        let account = self.accounts.get_mut(&session.owner).expect("session owner is registered");
        account.credentials = credentials;
        Ok(())
    }

    /// Passes a message through the server, recording it when enabled.
    pub fn relay(&mut self, msg: ProtocolMessage) -> ProtocolMessage {
        self.observe(&msg);
        msg
    }

    fn observe(&mut self, msg: &ProtocolMessage) {
        if self.record_transcript {
            self.transcript.push(msg.clone());
        }
    }

    pub fn transcript(&self) -> &[ProtocolMessage] {
        &self.transcript
    }

    /// Every byte string the server holds, for inspection by tests.
    pub fn held_byte_strings(&self) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        for (user, a) in &self.accounts {
            out.push(user.as_str().as_bytes().to_vec());
            out.push(a.keys.enc.as_bytes().to_vec());
            out.push(a.keys.sig.as_bytes().to_vec());
            out.push(a.credentials.salt_s.as_bytes().to_vec());
            out.push(a.credentials.salt_a.as_bytes().to_vec());
            out.push(a.credentials.verifier.as_bytes().to_vec());
            if let Some(b) = &a.backup {
                out.push(b.keys.k_cts.as_bytes().to_vec());
                out.push(b.keys.k_ts.as_bytes().to_vec());
                out.push(b.storage.to_bytes());
                for (id, blob) in &b.parts {
                    out.push(id.as_str().as_bytes().to_vec());
                    out.push(blob.to_bytes());
                }
            }
        }
        for (id, members) in &self.chat_participants {
            out.push(id.as_str().as_bytes().to_vec());
            out.extend(members.iter().map(|m| m.as_str().as_bytes().to_vec()));
        }
        for (rid, s) in &self.sessions {
            out.push(rid.as_str().as_bytes().to_vec());
            if let Some(k) = &s.fresh_keys {
                out.push(k.enc.as_bytes().to_vec());
                out.push(k.sig.as_bytes().to_vec());
            }
            out.extend(s.confirmations.iter().map(ProtocolMessage::to_json));
        }
        for msg in &self.transcript {
            out.push(msg.to_json());
            out.push(msg.body.clone());
        }
        out
    }
}
