use std::collections::BTreeSet;

use super::{Chatroom, StorageError, StoragePart, UserId};

/// Deals chatrooms, sorted by id, round-robin into `p` lists.
pub fn partition_chatrooms(chatrooms: &[Chatroom], p: usize) -> Result<Vec<Vec<Chatroom>>, StorageError> {
    if p == 0 {
        return Err(StorageError::InvalidInput("partition count must be at least 1".into()));
    }
    let mut sorted: Vec<&Chatroom> = chatrooms.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut parts = vec![Vec::new(); p];
    for (j, c) in sorted.into_iter().enumerate() {
        parts[j % p].push(c.clone());
    }
    Ok(parts)
}

/// `L_SP`: distinct peers of the part's chatrooms, owner excluded, sorted.
pub fn collect_part_peers(owner: &UserId, part: &StoragePart) -> Vec<UserId> {
    let set: BTreeSet<&UserId> = part.chatrooms.iter().flat_map(|c| c.peers_of(owner)).collect();
    set.into_iter().cloned().collect()
}

/// `L`: distinct peers across all parts, owner excluded, sorted.
pub fn collect_peers(owner: &UserId, parts: &[StoragePart]) -> Vec<UserId> {
    let set: BTreeSet<&UserId> =
        parts.iter().flat_map(|p| p.chatrooms.iter()).flat_map(|c| c.peers_of(owner)).collect();
    set.into_iter().cloned().collect()
}

/// One entry per (chatroom, peer) membership of the part, ordered by chatroom
/// id and then peer id. A peer in two chatrooms appears twice.
pub fn part_peer_occurrences(owner: &UserId, part: &StoragePart) -> Vec<UserId> {
    let mut rooms: Vec<&Chatroom> = part.chatrooms.iter().collect();
    rooms.sort_by(|a, b| a.id.cmp(&b.id));
    rooms.into_iter().flat_map(|c| c.peers_of(owner).cloned()).collect()
}
