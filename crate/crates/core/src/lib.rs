//! Key recovery for end-to-end encrypted chat: the private storage is split into
//! sealed parts whose keys are threshold-shared among chat peers.

pub mod codec;
pub mod crypto;
pub mod protocol;
pub mod sharing;
pub mod simulation;
pub mod storage;
