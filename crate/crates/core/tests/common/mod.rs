#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use base64::Engine as _;
use partstore::crypto::{BackendKind, CryptoBackend, ProductionBackend, TestBackend};
use partstore::protocol::DistributionConfig;
use partstore::sharing::split_rates;
use partstore::simulation::{ChatSpec, Network, Population, SIM_PASSWORD};
use partstore::storage::{ChatroomId, UserId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn backend(kind: BackendKind) -> Arc<dyn CryptoBackend> {
    match kind {
        BackendKind::Test => Arc::new(TestBackend::with_iterations(2)),
        BackendKind::Production => Arc::new(ProductionBackend::with_iterations(2)),
    }
}

pub fn uid(s: &str) -> UserId {
    UserId::from(s)
}

/// `u` plus the given chats; every listed member other than `u` is a pool peer.
pub fn population(chats: &[&[&str]]) -> Population {
    let mut peers = BTreeSet::new();
    let chats = chats
        .iter()
        .enumerate()
        .map(|(i, members)| {
            let mut set: BTreeSet<UserId> = members.iter().map(|m| uid(m)).collect();
            set.insert(uid("u"));
            peers.extend(set.iter().filter(|m| m.as_str() != "u").cloned());
            ChatSpec { id: ChatroomId::new(format!("c{i}")), members: set }
        })
        .collect();
    Population { user: uid("u"), peers: peers.into_iter().collect(), chats }
}

/// Chats {u,p1,p2}, {u,p3}, {u,p1,p4}.
pub fn small_population() -> Population {
    population(&[&["p1", "p2"], &["p3"], &["p1", "p4"]])
}

pub fn config(t_target: f64, parts: usize, unique_peers: bool, ts_enabled: bool) -> DistributionConfig {
    DistributionConfig { rates: split_rates(t_target, parts, parts).unwrap(), unique_peers, ts_enabled }
}

pub fn distributed_network(
    kind: BackendKind,
    pop: &Population,
    parts: usize,
    config: &DistributionConfig,
    rng: &mut ChaCha8Rng,
) -> Network {
    let mut net = Network::build(backend(kind), pop, parts, true, rng).unwrap();
    net.distribute(config, rng).unwrap();
    net
}

pub fn all_active(pop: &Population) -> BTreeSet<UserId> {
    pop.peers.iter().cloned().collect()
}

/// Plaintext secrets the server must never see: password, `P_S`, part keys,
/// chat keys and every private key in the network.
pub fn secrets(net: &Network) -> Vec<Vec<u8>> {
    let mut out = vec![SIM_PASSWORD.to_vec(), net.account.storage_key().as_bytes().to_vec()];
    let storage = net.account.storage();
    out.push(storage.enc_pair.private.as_bytes().to_vec());
    out.push(storage.sig_pair.private.as_bytes().to_vec());
    out.extend(storage.part_table.iter().map(|e| e.part_key.as_bytes().to_vec()));
    for room in &net.chatrooms {
        out.extend(room.key_history.iter().map(|k| k.as_bytes().to_vec()));
    }
    for peer in net.peers.values() {
        out.push(peer.storage().enc_pair.private.as_bytes().to_vec());
        out.push(peer.storage().sig_pair.private.as_bytes().to_vec());
    }
    out
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Fails if any secret, raw or base64 encoded, occurs in server state.
pub fn assert_server_blind(net: &Network, secrets: &[Vec<u8>], step: &str) {
    let held = net.server.held_byte_strings();
    assert!(!held.is_empty());
    let engine = base64::engine::general_purpose::STANDARD;
    for secret in secrets {
        let full = engine.encode(secret);
        // The character before padding depends on what follows in a longer encoding.
        let stable = match full.find('=') {
            Some(i) => &full[..i - 1],
            None => &full[..],
        };
        let encoded = stable.as_bytes();
        for h in &held {
            assert!(!contains(h, secret), "{step}: plaintext secret in server state");
            assert!(!contains(h, encoded), "{step}: base64 secret in server state");
        }
    }
}
