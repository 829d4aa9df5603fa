use std::collections::BTreeMap;

use rand_core::CryptoRngCore;

use super::message::{MessageKind, ProtocolMessage, Rid, ShareDeliveryBody};
use super::ProtocolError;
use crate::crypto::{Ciphertext, CryptoBackend, CryptoError, SymmetricKey};
use crate::sharing::{compute_threshold, split, SchemeId, Share, ThresholdRates, ThresholdSpec, MAX_SHARES};
use crate::storage::{
    collect_part_peers, collect_peers, part_peer_occurrences, PartId, RecoveryKeys, ShareScheme, Storage, StoragePart,
    UserId,
};

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct DistributionConfig {
    pub rates: ThresholdRates,
    /// One share per distinct peer instead of one per chatroom membership.
    pub unique_peers: bool,
    /// Also distribute `S_TS` across all peers.
    pub ts_enabled: bool,
}

/// Result of one run of share distribution.
#[derive(Clone, Debug)]
pub struct Distribution {
    pub epoch: u64,
    /// Only `k_cts` and `k_ts` go to the server.
    pub keys: RecoveryKeys,
    pub deliveries: Vec<ProtocolMessage>,
    pub cts_quorum: usize,
    pub part_thresholds: BTreeMap<PartId, usize>,
    pub ts_threshold: Option<usize>,
}

/// `{k_SP}_{K_CTS}`; the ciphertext bytes are the secret of the part-level split.
pub fn wrap_part_key(
    backend: &dyn CryptoBackend,
    k_sp: &SymmetricKey,
    k_cts: &SymmetricKey,
    rng: &mut dyn CryptoRngCore,
) -> Ciphertext {
    backend.sym_encrypt(k_cts, k_sp.as_bytes(), rng)
}

pub fn unwrap_part_key(
    backend: &dyn CryptoBackend,
    wrapped: &Ciphertext,
    k_cts: &SymmetricKey,
) -> Result<SymmetricKey, CryptoError> {
    SymmetricKey::try_from_slice(&backend.sym_decrypt(k_cts, wrapped)?)
}

pub(crate) fn scheme_id(owner: &UserId, scheme: &ShareScheme, epoch: u64) -> SchemeId {
    SchemeId::derive(owner.as_str(), &scheme.tag(), epoch)
}

pub(crate) fn cts_scheme_id(owner: &UserId, epoch: u64) -> SchemeId {
    SchemeId::derive(owner.as_str(), "CTS", epoch)
}

/// Creates fresh `K_CTS`/`K_TS`, splits `S_CTS` across the parts, each part's
/// wrapped key across the part's peers and `S_TS` across all peers, and emits
/// one signed, encrypted ShareDelivery per share.
///
/// Sets `cts_share`/`cts_quorum` on every part and advances
/// `storage.last_distribution`; sealing and upload are left to the caller.
pub fn distribute_shares(
    backend: &dyn CryptoBackend,
    storage: &mut Storage,
    parts: &mut [StoragePart],
    p_s: &SymmetricKey,
    config: &DistributionConfig,
    rng: &mut dyn CryptoRngCore,
) -> Result<Distribution, ProtocolError> {
    let owner = storage.owner.clone();
    if parts.is_empty() {
        return Err(ProtocolError::InvalidState("storage has no parts".into()));
    }
    if parts.len() > MAX_SHARES {
        return Err(crate::sharing::SharingError::CapacityExceeded { n: parts.len() }.into());
    }
    let all_peers = collect_peers(&owner, parts);
    if all_peers.is_empty() {
        return Err(ProtocolError::NoPeers);
    }
    if let Some(p) = all_peers.iter().find(|p| !storage.peer_keys.contains_key(*p)) {
        return Err(ProtocolError::MissingPeerKey(p.clone()));
    }
    let mut part_lists = Vec::with_capacity(parts.len());
    for part in parts.iter() {
        if storage.part_entry(&part.id).is_none() {
            return Err(ProtocolError::InvalidState(format!("part {} is not in the part table", part.id)));
        }
        let list =
            if config.unique_peers { collect_part_peers(&owner, part) } else { part_peer_occurrences(&owner, part) };
        if list.is_empty() {
            return Err(ProtocolError::EmptyPart(part.id.clone()));
        }
        part_lists.push(list);
    }

    let epoch = storage.last_distribution + 1;
    let k_cts = SymmetricKey::random(rng);
    let k_ts = SymmetricKey::random(rng);
    let s_cts = backend.sym_encrypt(&k_cts, p_s.as_bytes(), rng);
    let s_ts = backend.sym_encrypt(&k_ts, p_s.as_bytes(), rng);

    let p = parts.len();
    let q = config.rates.storage_quorum(p)?;
    let cts_shares = split(&s_cts.to_bytes(), ThresholdSpec::new(q, p)?, cts_scheme_id(&owner, epoch), rng)?;
    for (part, share) in parts.iter_mut().zip(cts_shares) {
        part.cts_share = Some(share);
        part.cts_quorum = Some(q as u32);
    }

    let mut deliveries = Vec::new();
    let mut part_thresholds = BTreeMap::new();
    for (part, list) in parts.iter().zip(&part_lists) {
        let k_sp = storage.part_entry(&part.id).expect("checked above").part_key.clone();
        let wrapped = wrap_part_key(backend, &k_sp, &k_cts, rng);
        let t_sp = compute_threshold(config.rates.t_storage_part, list.len())?;
        let scheme = ShareScheme::CtsPart { part_id: part.id.clone() };
        let shares =
            split(&wrapped.to_bytes(), ThresholdSpec::new(t_sp, list.len())?, scheme_id(&owner, &scheme, epoch), rng)?;
        for (peer, share) in list.iter().zip(&shares) {
            deliveries.push(send_share(backend, storage, peer, &scheme, epoch, t_sp, share, rng)?);
            *storage.cts_shares_sent.entry(peer.clone()).or_default() += 1;
        }
        part_thresholds.insert(part.id.clone(), t_sp);
    }

    let ts_threshold = if config.ts_enabled {
        let t = compute_threshold(config.rates.t_target, all_peers.len())?;
        let scheme = ShareScheme::Ts;
        let shares =
            split(&s_ts.to_bytes(), ThresholdSpec::new(t, all_peers.len())?, scheme_id(&owner, &scheme, epoch), rng)?;
        for (peer, share) in all_peers.iter().zip(&shares) {
            deliveries.push(send_share(backend, storage, peer, &scheme, epoch, t, share, rng)?);
            *storage.ts_shares_sent.entry(peer.clone()).or_default() += 1;
        }
        Some(t)
    } else {
        None
    };

    storage.last_distribution = epoch;
    Ok(Distribution {
        epoch,
        keys: RecoveryKeys { k_cts, k_ts, s_cts, s_ts },
        deliveries,
        cts_quorum: q,
        part_thresholds,
        ts_threshold,
    })
}

#[allow(clippy::too_many_arguments)]
fn send_share(
    backend: &dyn CryptoBackend,
    storage: &Storage,
    peer: &UserId,
    scheme: &ShareScheme,
    epoch: u64,
    threshold: usize,
    share: &Share,
    rng: &mut dyn CryptoRngCore,
) -> Result<ProtocolMessage, ProtocolError> {
    let keys = storage.peer_keys.get(peer).ok_or_else(|| ProtocolError::MissingPeerKey(peer.clone()))?;
    let body = ShareDeliveryBody {
        owner: storage.owner.clone(),
        scheme: scheme.clone(),
        epoch,
        threshold: threshold as u32,
        share: backend.asym_encrypt(&keys.enc, &share.to_bytes(), rng)?,
    };
    ProtocolMessage::signed(
        backend,
        MessageKind::ShareDelivery,
        Rid::none(),
        storage.owner.clone(),
        peer.clone(),
        &body,
        &storage.sig_pair.private,
    )
}
