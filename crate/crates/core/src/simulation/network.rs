use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand_core::CryptoRngCore;

use super::population::Population;
use super::SimulationError;
use crate::crypto::{CryptoBackend, Password, SymmetricKey};
use crate::protocol::{
    Account, DistributionConfig, MessageKind, Peer, ProtocolError, ProtocolMessage, RecoverySession, Server,
    SessionStatus,
};
use crate::storage::{Chatroom, Storage, UserId};

/// Password of the simulated user. Only its derived keys matter.
pub const SIM_PASSWORD: &[u8] = b"correct horse battery staple";

/// Server, peers and the user's account wired together in memory.
#[derive(Debug)]
pub struct Network {
    pub server: Server,
    pub account: Account,
    pub peers: BTreeMap<UserId, Peer>,
    pub chatrooms: Vec<Chatroom>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RecoveryOptions {
    /// Peers that process messages; the rest never answer.
    pub active: BTreeSet<UserId>,
    /// Whether an active peer countersigns the rid.
    pub confirm: bool,
}

/// What happened during one recovery run.
#[derive(Debug)]
pub struct RecoveryRun {
    pub session: RecoverySession,
    /// Every message in the order it was sent.
    pub trace: Vec<ProtocolMessage>,
    pub confirmer: Option<UserId>,
}

impl RecoveryRun {
    pub fn count(&self, kind: MessageKind) -> usize {
        self.trace.iter().filter(|m| m.kind == kind).count()
    }
}

impl Network {
    /// Creates keys for the user and every pool peer, chat keys for every
    /// chat, registers everyone and partitions the user's chats into `parts`.
    pub fn build(
        backend: Arc<dyn CryptoBackend>,
        population: &Population,
        parts: usize,
        record_transcript: bool,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Self, SimulationError> {
        let mut server = Server::new(backend.clone()).with_transcript(record_transcript);
        let password = Password::new(SIM_PASSWORD)?;
        let mut account = Account::create(backend.clone(), population.user.clone(), &password, rng)?;
        account.register(&mut server)?;

        let chatrooms = population
            .chats
            .iter()
            .map(|c| Chatroom::new(c.id.clone(), c.members.iter().cloned(), SymmetricKey::random(rng)))
            .collect::<Result<Vec<_>, _>>()?;
        for room in &chatrooms {
            server.publish_chatroom(room.id.clone(), room.participants.iter().cloned());
        }

        let mut peers = BTreeMap::new();
        for id in &population.peers {
            let storage = Storage::new(id.clone(), backend.generate_enc_pair(rng), backend.generate_sig_pair(rng));
            let rooms: Vec<Chatroom> = chatrooms.iter().filter(|c| c.has(id)).cloned().collect();
            let peer = Peer::new(backend.clone(), storage, rooms);
            // Peers authenticate with their own passwords; the simulation
            // only needs their public keys on the server.
            let salt_s = crate::crypto::Salt::random(rng);
            let salt_a = crate::crypto::Salt::random(rng);
            let credentials = crate::protocol::Credentials::new(salt_s, salt_a, &SymmetricKey::random(rng));
            server.register(id.clone(), peer.public_keys(), credentials)?;
            if chatrooms.iter().any(|c| c.has(id) && c.has(&population.user)) {
                account.learn_peer(id.clone(), peer.public_keys());
            }
            peers.insert(id.clone(), peer);
        }
        account.assign_chatrooms(&chatrooms, parts, rng)?;
        Ok(Network { server, account, peers, chatrooms })
    }

    /// Runs a backup and hands every ShareDelivery to its recipient. All
    /// peers are online during distribution.
    pub fn distribute(
        &mut self,
        config: &DistributionConfig,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<usize, SimulationError> {
        let (_, deliveries) = self.account.backup(&mut self.server, config, rng)?;
        let n = deliveries.len();
        for msg in deliveries {
            let msg = self.server.relay(msg);
            let peer = self
                .peers
                .get_mut(&msg.recipient)
                .ok_or_else(|| SimulationError::InvalidInput(format!("no peer {}", msg.recipient)))?;
            peer.receive_share(&msg, &self.server)?;
        }
        Ok(n)
    }

    /// Drives one recovery to quiescence: initiate, request, (optionally)
    /// confirm via the first active peer, let peers re-check, ingest shares
    /// and, on success, broadcast RecoveryFinished.
    pub fn recover(
        &mut self,
        options: &RecoveryOptions,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<RecoveryRun, SimulationError> {
        let owner = self.account.owner().clone();
        let backend = Arc::clone(self.server_backend());
        let rid = self.server.initiate_recovery(&owner, true, rng)?;
        let mut session = RecoverySession::new(backend, owner, rid.clone(), rng);
        let mut trace = Vec::new();

        let init = self.server.relay(session.initialize_message()?);
        trace.push(init.clone());
        let grant = self.server.handle_initialize(&init)?;
        session.accept_grant(grant)?;

        let mut queue: VecDeque<ProtocolMessage> = session.recovery_requests()?.into();
        self.pump(&mut queue, &mut session, options, &mut trace, rng)?;

        let mut confirmer = None;
        if options.confirm {
            let signed = session.sign_rid()?;
            let candidate =
                session.grant().expect("grant accepted").peers.iter().find(|p| options.active.contains(*p)).cloned();
            if let Some(id) = candidate {
                let msg = self.peers[&id].confirm_recovery(&rid, &signed, &self.server)?;
                trace.push(msg.clone());
                self.server.accept_confirmation(&msg)?;
                confirmer = Some(id);
            }
        }
        session.refresh(&self.server);

        for id in &options.active {
            if let Some(peer) = self.peers.get_mut(id) {
                queue.extend(peer.recheck(&self.server, rng));
            }
        }
        self.pump(&mut queue, &mut session, options, &mut trace, rng)?;

        if session.status() == SessionStatus::StorageRecovered {
            queue.extend(session.finish()?);
            self.pump(&mut queue, &mut session, options, &mut trace, rng)?;
        }
        Ok(RecoveryRun { session, trace, confirmer })
    }

    fn server_backend(&self) -> &Arc<dyn CryptoBackend> {
        self.account.backend()
    }

    fn pump(
        &mut self,
        queue: &mut VecDeque<ProtocolMessage>,
        session: &mut RecoverySession,
        options: &RecoveryOptions,
        trace: &mut Vec<ProtocolMessage>,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(), SimulationError> {
        while let Some(msg) = queue.pop_front() {
            let msg = self.server.relay(msg);
            trace.push(msg.clone());
            match msg.kind {
                MessageKind::RecoveryRequest => {
                    if options.active.contains(&msg.recipient) {
                        if let Some(peer) = self.peers.get_mut(&msg.recipient) {
                            queue.extend(peer.handle_request(&msg, &self.server, rng));
                        }
                    }
                }
                MessageKind::ShareDelivery => match session.ingest_share(&msg, &self.server) {
                    Ok(_) | Err(ProtocolError::BadSignature) | Err(ProtocolError::InvalidMessage(_)) => {}
                    Err(e) => log::debug!("share from {} rejected: {e}", msg.sender),
                },
                MessageKind::RecoveryFinished => {
                    if msg.recipient == crate::protocol::server_id() {
                        self.server.handle_finished(&msg)?;
                    } else if options.active.contains(&msg.recipient) {
                        if let Some(peer) = self.peers.get_mut(&msg.recipient) {
                            peer.handle_finished(&msg, &self.server);
                        }
                    }
                }
                // Audit records land in the chatroom; the relay has logged them.
                MessageKind::SystemMessage => {}
                MessageKind::InitializeRecovery | MessageKind::RecoveryConfirmed => {}
            }
        }
        Ok(())
    }
}
