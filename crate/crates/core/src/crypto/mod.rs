//! Cryptographic primitives behind a pluggable backend.
//!
//! Two backends implement [`CryptoBackend`]:
//!
//! * [`ProductionBackend`]: PBKDF2-HMAC-SHA256, AES-256-GCM, RSA-2048-OAEP
//!   (hybrid with AES-256-GCM for the payload) and ECDSA over P-256.
//! * [`TestBackend`]: PBKDF2 with a low iteration count plus SHA-256 based
//!   stand-ins for the cipher, public-key encryption and signatures. It keeps
//!   the same contracts (authenticated, randomized, key-bound) but offers no
//!   security whatsoever and exists so Monte-Carlo runs are not dominated by
//!   RSA and ECDSA.
//!
//! All randomness is drawn from a caller-supplied RNG, which makes complete
//! protocol traces reproducible from a seed under either backend.

mod production;
mod test_backend;

use std::fmt;
use std::str::FromStr;

use rand_core::CryptoRngCore;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::impl_base64_serde;

pub use production::ProductionBackend;
pub use test_backend::TestBackend;

pub const SYMMETRIC_KEY_LEN: usize = 32;
pub const SALT_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// Default PBKDF2 iteration count of the production backend.
pub const PRODUCTION_KDF_ITERATIONS: u32 = 100_000;
/// Default PBKDF2 iteration count of the test backend.
pub const TEST_KDF_ITERATIONS: u32 = 1_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("authentication failure")]
    AuthenticationFailure,
    #[error("decryption failure")]
    DecryptionFailure,
    #[error("malformed key material")]
    InvalidKey,
}

/// A user password `P`.
#[derive(Clone, PartialEq, Eq)]
pub struct Password(Vec<u8>);

impl Password {
    pub fn new(secret: impl Into<Vec<u8>>) -> Result<Self, CryptoError> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(CryptoError::InvalidInput("empty password".into()));
        }
        Ok(Password(secret))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Password {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Password(<redacted>)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Salt([u8; SALT_LEN]);

impl Salt {
    pub fn from_bytes(bytes: [u8; SALT_LEN]) -> Self {
        Salt(bytes)
    }

    pub fn try_from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SALT_LEN] =
            bytes.try_into().map_err(|_| CryptoError::InvalidInput(format!("salt must be {SALT_LEN} bytes")))?;
        Ok(Salt(arr))
    }

    pub fn random(rng: &mut dyn CryptoRngCore) -> Self {
        let mut b = [0u8; SALT_LEN];
        rng.fill_bytes(&mut b);
        Salt(b)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl_base64_serde!(Salt);

/// 32 bytes of symmetric key material (`P_S`, `P_A`, `K_CTS`, `K_TS`, `k_c`,
/// `k_SP`).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymmetricKey([u8; SYMMETRIC_KEY_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; SYMMETRIC_KEY_LEN]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn try_from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SYMMETRIC_KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::InvalidInput(format!("symmetric key must be {SYMMETRIC_KEY_LEN} bytes")))?;
        Ok(SymmetricKey(arr))
    }

    pub fn random(rng: &mut dyn CryptoRngCore) -> Self {
        let mut b = [0u8; SYMMETRIC_KEY_LEN];
        rng.fill_bytes(&mut b);
        SymmetricKey(b)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymmetricKey({:02x}{:02x}..)", self.0[0], self.0[1])
    }
}

impl_base64_serde!(SymmetricKey);

/// Output of the authenticated symmetric cipher: `nonce || body || tag`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Ciphertext {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl Ciphertext {
    /// Bytes added on top of the plaintext length.
    pub const OVERHEAD: usize = NONCE_LEN + TAG_LEN;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.body.len() + Self::OVERHEAD);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn try_from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < Self::OVERHEAD {
            return Err(CryptoError::InvalidInput("ciphertext too short".into()));
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(Ciphertext {
            nonce: nonce.try_into().expect("split length"),
            body: body.to_vec(),
            tag: tag.try_into().expect("split length"),
        })
    }

    pub fn len(&self) -> usize {
        self.body.len() + Self::OVERHEAD
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl serde::Serialize for Ciphertext {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::codec::b64_encode(&self.to_bytes()))
    }
}

impl<'de> serde::Deserialize<'de> for Ciphertext {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        let bytes = crate::codec::b64_decode(&text).map_err(serde::de::Error::custom)?;
        Ciphertext::try_from_slice(&bytes).map_err(serde::de::Error::custom)
    }
}

macro_rules! opaque_bytes {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash)]
        pub struct $name(Vec<u8>);

        impl $name {
            pub fn from_vec(bytes: Vec<u8>) -> Self {
                $name(bytes)
            }

            pub fn try_from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                Ok($name(bytes.to_vec()))
            }

            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({} bytes)", stringify!($name), self.0.len())
            }
        }

        impl_base64_serde!($name);
    };
}

opaque_bytes!(
    /// Public encryption key `e_u`.
    EncPublicKey
);
opaque_bytes!(
    /// Private decryption key `d_u`.
    EncPrivateKey
);
opaque_bytes!(
    /// Public verification key `v_u`.
    SigPublicKey
);
opaque_bytes!(
    /// Private signing key `s_u`.
    SigPrivateKey
);
opaque_bytes!(Signature);
opaque_bytes!(
    /// Output of public-key encryption; layout is backend defined.
    AsymCiphertext
);

#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub struct EncKeyPair {
    pub public: EncPublicKey,
    pub private: EncPrivateKey,
}

#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub struct SigKeyPair {
    pub public: SigPublicKey,
    pub private: SigPrivateKey,
}

/// What a password-derived key is used for. `P_S` seals the storage, `P_A`
/// authenticates against the server; the two differ by salt.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Purpose {
    Storage,
    Auth,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum BackendKind {
    Test,
    Production,
}

impl BackendKind {
    pub fn backend(self) -> Box<dyn CryptoBackend> {
        match self {
            BackendKind::Test => Box::new(TestBackend::default()),
            BackendKind::Production => Box::new(ProductionBackend::default()),
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(BackendKind::Test),
            "production" => Ok(BackendKind::Production),
            other => Err(format!("unknown crypto backend `{other}` (expected test or production)")),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Test => "test",
            BackendKind::Production => "production",
        })
    }
}

pub trait CryptoBackend: Send + Sync + fmt::Debug {
    fn kind(&self) -> BackendKind;

    /// Password-based key derivation; deterministic in `(password, salt,
    /// iteration count)`.
    fn derive_key(&self, password: &Password, salt: &Salt, purpose: Purpose) -> Result<SymmetricKey, CryptoError>;

    fn sym_encrypt(&self, key: &SymmetricKey, plaintext: &[u8], rng: &mut dyn CryptoRngCore) -> Ciphertext;

    fn sym_decrypt(&self, key: &SymmetricKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError>;

    fn generate_enc_pair(&self, rng: &mut dyn CryptoRngCore) -> EncKeyPair;

    fn asym_encrypt(
        &self,
        public: &EncPublicKey,
        plaintext: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<AsymCiphertext, CryptoError>;

    fn asym_decrypt(&self, private: &EncPrivateKey, ct: &AsymCiphertext) -> Result<Vec<u8>, CryptoError>;

    fn generate_sig_pair(&self, rng: &mut dyn CryptoRngCore) -> SigKeyPair;

    fn sign(&self, private: &SigPrivateKey, msg: &[u8]) -> Result<Signature, CryptoError>;

    /// Returns false for malformed keys or signatures instead of erroring.
    fn verify(&self, public: &SigPublicKey, msg: &[u8], sig: &Signature) -> bool;
}

/// SHA-256.
pub fn digest(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// SHA-256 over the concatenation of `parts`, each prefixed with its
/// big-endian u32 length.
pub fn digest_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u32).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub(crate) fn pbkdf2_sha256(password: &Password, salt: &Salt, iterations: u32) -> Result<SymmetricKey, CryptoError> {
    if iterations == 0 {
        return Err(CryptoError::InvalidInput("zero KDF iterations".into()));
    }
    let mut out = [0u8; SYMMETRIC_KEY_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt.as_bytes(), iterations, &mut out);
    Ok(SymmetricKey(out))
}
