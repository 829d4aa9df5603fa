use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use super::SimulationError;
use crate::storage::{ChatroomId, UserId};

/// Chat sizes, counting the user, with their probabilities.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SizeBucket {
    pub min: usize,
    pub max: usize,
    pub weight: f64,
}

#[derive(Clone, PartialEq, Debug)]
pub struct PopulationSpec {
    pub n_chats: usize,
    pub peer_pool: usize,
    pub size_dist: Vec<SizeBucket>,
    pub inactive_rate: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            n_chats: 60,
            peer_pool: 70,
            size_dist: vec![
                SizeBucket { min: 2, max: 2, weight: 0.715 },
                SizeBucket { min: 3, max: 5, weight: 0.114 },
                SizeBucket { min: 6, max: 10, weight: 0.069 },
                SizeBucket { min: 11, max: 20, weight: 0.102 },
            ],
            inactive_rate: 0.7,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let total: f64 = self.size_dist.iter().map(|b| b.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimulationError::InvalidInput(format!("size weights sum to {total}, not 1")));
        }
        if self.size_dist.iter().any(|b| b.weight < 0.0 || b.min < 2 || b.min > b.max) {
            return Err(SimulationError::InvalidInput("size buckets need 2 <= min <= max and weight >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.inactive_rate) {
            return Err(SimulationError::InvalidInput(format!("inactive rate {} outside [0, 1)", self.inactive_rate)));
        }
        if self.peer_pool == 0 {
            return Err(SimulationError::InvalidInput("empty peer pool".into()));
        }
        Ok(())
    }
}

/// Membership only; keys are attached when the network is built.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChatSpec {
    pub id: ChatroomId,
    pub members: BTreeSet<UserId>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Population {
    pub user: UserId,
    /// The whole pool, whether or not they share a chat with the user.
    pub peers: Vec<UserId>,
    pub chats: Vec<ChatSpec>,
}

impl Population {
    /// Pool peers that share at least one chat with the user.
    pub fn touched_peers(&self) -> BTreeSet<&UserId> {
        self.chats.iter().flat_map(|c| c.members.iter()).filter(|m| **m != self.user).collect()
    }
}

pub fn peer_name(i: usize) -> UserId {
    UserId::new(format!("p{:02}", i + 1))
}

fn chat_size(spec: &PopulationSpec, rng: &mut impl Rng) -> usize {
    let mut roll: f64 = rng.gen();
    let last = spec.size_dist.len() - 1;
    for (i, b) in spec.size_dist.iter().enumerate() {
        if roll < b.weight || i == last {
            return rng.gen_range(b.min..=b.max);
        }
        roll -= b.weight;
    }
    unreachable!("size_dist is non-empty")
}

/// Draws `n_chats` chats. Each chat's size comes from `size_dist`; its
/// `size - 1` peers are sampled without replacement from the pool, clamped
/// to the pool size.
pub fn generate_population(spec: &PopulationSpec, rng: &mut impl Rng) -> Result<Population, SimulationError> {
    spec.validate()?;
    let user = UserId::from("u");
    let peers: Vec<UserId> = (0..spec.peer_pool).map(peer_name).collect();
    let width = spec.n_chats.max(1).to_string().len();
    let chats = (0..spec.n_chats)
        .map(|i| {
            let others = (chat_size(spec, rng) - 1).min(spec.peer_pool);
            let mut members: BTreeSet<UserId> =
                sample(rng, spec.peer_pool, others).into_iter().map(|j| peers[j].clone()).collect();
            members.insert(user.clone());
            ChatSpec { id: ChatroomId::new(format!("c{i:0width$}")), members }
        })
        .collect();
    Ok(Population { user, peers, chats })
}

/// Each peer is independently inactive with probability `inactive_rate`;
/// returns the active ones.
pub fn mark_inactive(peers: &[UserId], inactive_rate: f64, rng: &mut impl Rng) -> BTreeSet<UserId> {
    peers.iter().filter(|_| rng.gen::<f64>() >= inactive_rate).cloned().collect()
}
