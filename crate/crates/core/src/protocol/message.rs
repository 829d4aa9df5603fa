use std::fmt;

use rand_core::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::codec::{base64_bytes, from_json, to_canonical_json};
use crate::crypto::{AsymCiphertext, Ciphertext, CryptoBackend, SigPrivateKey, SigPublicKey, Signature};
use crate::storage::{ChatroomId, PeerKeys, ShareScheme, UserId};

/// Actor id of the server in message headers.
pub const SERVER_ID: &str = "server";

pub fn server_id() -> UserId {
    UserId::from(SERVER_ID)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum MessageKind {
    InitializeRecovery,
    RecoveryRequest,
    RecoveryConfirmed,
    ShareDelivery,
    SystemMessage,
    RecoveryFinished,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::InitializeRecovery => "InitializeRecovery",
            MessageKind::RecoveryRequest => "RecoveryRequest",
            MessageKind::RecoveryConfirmed => "RecoveryConfirmed",
            MessageKind::ShareDelivery => "ShareDelivery",
            MessageKind::SystemMessage => "SystemMessage",
            MessageKind::RecoveryFinished => "RecoveryFinished",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifier of one recovery attempt, 32 lowercase hex digits. Empty for
/// messages outside a recovery (share distribution).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rid(String);

impl Rid {
    pub fn random(rng: &mut dyn RngCore) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Rid(bytes.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn none() -> Self {
        Rid(String::new())
    }

    pub fn is_none(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&self.0)
        }
    }
}

impl fmt::Debug for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rid({self})")
    }
}

/// Bytes the user signs with the fresh signing key to prove a recovery
/// attempt is theirs.
pub fn rid_statement(rid: &Rid) -> Vec<u8> {
    let mut out = b"RID:".to_vec();
    out.extend_from_slice(rid.as_str().as_bytes());
    out
}

/// A signed envelope. `body` is the canonical JSON of a kind-specific body
/// type. SystemMessages are addressed to a chatroom id.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub rid: Rid,
    pub sender: UserId,
    pub recipient: UserId,
    #[serde(with = "base64_bytes")]
    pub body: Vec<u8>,
    pub sig: Signature,
}

impl ProtocolMessage {
    pub fn signed<B: Serialize>(
        backend: &dyn CryptoBackend,
        kind: MessageKind,
        rid: Rid,
        sender: UserId,
        recipient: UserId,
        body: &B,
        key: &SigPrivateKey,
    ) -> Result<Self, ProtocolError> {
        let body = to_canonical_json(body)?;
        let sig = backend.sign(key, &signing_bytes(kind, &rid, &body))?;
        Ok(ProtocolMessage { kind, rid, sender, recipient, body, sig })
    }

    pub fn verify(&self, backend: &dyn CryptoBackend, key: &SigPublicKey) -> bool {
        backend.verify(key, &signing_bytes(self.kind, &self.rid, &self.body), &self.sig)
    }

    pub fn expect_kind(&self, kind: MessageKind) -> Result<(), ProtocolError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(ProtocolError::InvalidMessage(format!("expected {kind}, got {}", self.kind)))
        }
    }

    pub fn decode_body<B: DeserializeOwned>(&self) -> Result<B, ProtocolError> {
        from_json(&self.body).map_err(|e| ProtocolError::InvalidMessage(format!("{} body: {e}", self.kind)))
    }

    /// Wire form: canonical JSON with base64 `body` and `sig`.
    pub fn to_json(&self) -> Vec<u8> {
        to_canonical_json(self).expect("message serialization is infallible")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ProtocolError> {
        from_json(bytes).map_err(|e| ProtocolError::InvalidMessage(e.to_string()))
    }
}

/// `len(kind) || kind || len(rid) || rid || len(body) || body`, lengths u32 BE.
fn signing_bytes(kind: MessageKind, rid: &Rid, body: &[u8]) -> Vec<u8> {
    let parts: [&[u8]; 3] = [kind.as_str().as_bytes(), rid.as_str().as_bytes(), body];
    let mut out = Vec::with_capacity(12 + parts.iter().map(|p| p.len()).sum::<usize>());
    for p in parts {
        out.extend_from_slice(&(p.len() as u32).to_be_bytes());
        out.extend_from_slice(p);
    }
    out
}

/// User to server: binds the fresh key pairs to the rid.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InitializeRecoveryBody {
    pub owner: UserId,
    pub keys: PeerKeys,
}

/// User to peer: asks for the shares held for `owner`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecoveryRequestBody {
    pub owner: UserId,
    pub keys: PeerKeys,
}

/// Peer to server: countersigns the user's signed rid.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecoveryConfirmedBody {
    pub owner: UserId,
    pub user_signed_rid: Signature,
}

/// One share, encrypted to the recipient's public key.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShareDeliveryBody {
    pub owner: UserId,
    pub scheme: ShareScheme,
    pub epoch: u64,
    pub threshold: u32,
    pub share: AsymCiphertext,
}

/// Audit record posted into a chatroom, encrypted under its latest key.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemMessageBody {
    pub chatroom: ChatroomId,
    pub record: Ciphertext,
}

/// Plaintext of [`SystemMessageBody::record`].
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemRecord {
    pub rid: Rid,
    pub owner: UserId,
    pub releaser: UserId,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecoveryFinishedBody {
    pub owner: UserId,
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::crypto::BackendKind;

    #[test]
    fn wire_round_trip_and_signature_binding() {
        let backend = BackendKind::Test.backend();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let keys = backend.generate_sig_pair(&mut rng);
        let rid = Rid::random(&mut rng);
        let msg = ProtocolMessage::signed(
            &*backend,
            MessageKind::RecoveryFinished,
            rid.clone(),
            UserId::from("u"),
            UserId::from("p1"),
            &RecoveryFinishedBody { owner: UserId::from("u") },
            &keys.private,
        )
        .unwrap();
        assert!(msg.verify(&*backend, &keys.public));

        let json = msg.to_json();
        let text = std::str::from_utf8(&json).unwrap();
        let order: Vec<usize> = ["\"body\"", "\"kind\"", "\"recipient\"", "\"rid\"", "\"sender\"", "\"sig\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{text}");
        assert_eq!(ProtocolMessage::from_json(&json).unwrap(), msg);

        let mut other = msg.clone();
        other.kind = MessageKind::RecoveryRequest;
        assert!(!other.verify(&*backend, &keys.public));
        let mut other = msg.clone();
        other.rid = Rid::random(&mut rng);
        assert!(!other.verify(&*backend, &keys.public));
        let mut other = msg.clone();
        other.body.push(b' ');
        assert!(!other.verify(&*backend, &keys.public));
    }

    #[test]
    fn share_delivery_body_names_scheme_and_part() {
        let body = ShareDeliveryBody {
            owner: UserId::from("u"),
            scheme: ShareScheme::CtsPart { part_id: crate::storage::PartId::from("s1") },
            epoch: 1,
            threshold: 2,
            share: AsymCiphertext::from_vec(vec![1, 2, 3]),
        };
        let json = String::from_utf8(to_canonical_json(&body).unwrap()).unwrap();
        assert!(json.contains(r#""scheme":{"kind":"CTS-part","partId":"s1"}"#), "{json}");
        let ts = ShareDeliveryBody { scheme: ShareScheme::Ts, ..body };
        let json = String::from_utf8(to_canonical_json(&ts).unwrap()).unwrap();
        assert!(json.contains(r#""scheme":{"kind":"TS"}"#), "{json}");
    }

    #[test]
    fn malformed_json_is_rejected() {
        assert!(ProtocolMessage::from_json(b"{}").is_err());
        assert!(ProtocolMessage::from_json(b"not json").is_err());
    }
}
