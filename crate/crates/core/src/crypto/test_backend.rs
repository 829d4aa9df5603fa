use rand_chacha::ChaCha8Rng;
use rand_core::{CryptoRngCore, RngCore, SeedableRng};
use sha2::{Digest as _, Sha256};

use super::*;

/// Hash-based stand-ins with the same contracts as the production backend.
///
/// Public keys are hashes of private keys, so anyone holding a public key can
/// decrypt and forge. Only suitable for simulation and tests.
#[derive(Debug, Clone)]
pub struct TestBackend {
    kdf_iterations: u32,
}

impl TestBackend {
    pub fn with_iterations(kdf_iterations: u32) -> Self {
        TestBackend { kdf_iterations }
    }
}

impl Default for TestBackend {
    fn default() -> Self {
        TestBackend::with_iterations(TEST_KDF_ITERATIONS)
    }
}

fn keystream_xor(key: &[u8], nonce: &[u8; NONCE_LEN], data: &mut [u8]) {
    let seed: [u8; 32] =
        Sha256::new().chain_update(b"fast-stream").chain_update(key).chain_update(nonce).finalize().into();
    let mut pad = vec![0u8; data.len()];
    ChaCha8Rng::from_seed(seed).fill_bytes(&mut pad);
    for (b, p) in data.iter_mut().zip(&pad) {
        *b ^= p;
    }
}

fn tag_of(key: &[u8], nonce: &[u8; NONCE_LEN], body: &[u8]) -> [u8; TAG_LEN] {
    let full =
        Sha256::new().chain_update(b"fast-tag").chain_update(key).chain_update(nonce).chain_update(body).finalize();
    full[..TAG_LEN].try_into().expect("tag length")
}

fn seal(key: &[u8], nonce: [u8; NONCE_LEN], plaintext: &[u8]) -> Ciphertext {
    let mut body = plaintext.to_vec();
    keystream_xor(key, &nonce, &mut body);
    let tag = tag_of(key, &nonce, &body);
    Ciphertext { nonce, body, tag }
}

fn open(key: &[u8], ct: &Ciphertext) -> Option<Vec<u8>> {
    if tag_of(key, &ct.nonce, &ct.body) != ct.tag {
        return None;
    }
    let mut body = ct.body.clone();
    keystream_xor(key, &ct.nonce, &mut body);
    Some(body)
}

fn derived_public(label: &[u8], private: &[u8]) -> Vec<u8> {
    Sha256::new().chain_update(label).chain_update(private).finalize().to_vec()
}

fn asym_content_key(public: &[u8], nonce: &[u8; NONCE_LEN]) -> [u8; 32] {
    Sha256::new().chain_update(b"fast-asym").chain_update(public).chain_update(nonce).finalize().into()
}

fn random_private(rng: &mut dyn CryptoRngCore) -> Vec<u8> {
    let mut b = vec![0u8; 32];
    rng.fill_bytes(&mut b);
    b
}

impl CryptoBackend for TestBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Test
    }

    fn derive_key(&self, password: &Password, salt: &Salt, _purpose: Purpose) -> Result<SymmetricKey, CryptoError> {
        pbkdf2_sha256(password, salt, self.kdf_iterations)
    }

    fn sym_encrypt(&self, key: &SymmetricKey, plaintext: &[u8], rng: &mut dyn CryptoRngCore) -> Ciphertext {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        seal(key.as_bytes(), nonce, plaintext)
    }

    fn sym_decrypt(&self, key: &SymmetricKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
        open(key.as_bytes(), ct).ok_or(CryptoError::AuthenticationFailure)
    }

    fn generate_enc_pair(&self, rng: &mut dyn CryptoRngCore) -> EncKeyPair {
        let private = random_private(rng);
        EncKeyPair {
            public: EncPublicKey::from_vec(derived_public(b"fast-enc", &private)),
            private: EncPrivateKey::from_vec(private),
        }
    }

    fn asym_encrypt(
        &self,
        public: &EncPublicKey,
        plaintext: &[u8],
        rng: &mut dyn CryptoRngCore,
    ) -> Result<AsymCiphertext, CryptoError> {
        if public.as_bytes().len() != 32 {
            return Err(CryptoError::InvalidKey);
        }
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let key = asym_content_key(public.as_bytes(), &nonce);
        Ok(AsymCiphertext::from_vec(seal(&key, nonce, plaintext).to_bytes()))
    }

    fn asym_decrypt(&self, private: &EncPrivateKey, ct: &AsymCiphertext) -> Result<Vec<u8>, CryptoError> {
        let public = derived_public(b"fast-enc", private.as_bytes());
        let ct = Ciphertext::try_from_slice(ct.as_bytes()).map_err(|_| CryptoError::DecryptionFailure)?;
        let key = asym_content_key(&public, &ct.nonce);
        open(&key, &ct).ok_or(CryptoError::DecryptionFailure)
    }

    fn generate_sig_pair(&self, rng: &mut dyn CryptoRngCore) -> SigKeyPair {
        let private = random_private(rng);
        SigKeyPair {
            public: SigPublicKey::from_vec(derived_public(b"fast-sig", &private)),
            private: SigPrivateKey::from_vec(private),
        }
    }

    fn sign(&self, private: &SigPrivateKey, msg: &[u8]) -> Result<Signature, CryptoError> {
        if private.as_bytes().len() != 32 {
            return Err(CryptoError::InvalidKey);
        }
        let public = derived_public(b"fast-sig", private.as_bytes());
        Ok(Signature::from_vec(mac(&public, msg).to_vec()))
    }

    fn verify(&self, public: &SigPublicKey, msg: &[u8], sig: &Signature) -> bool {
        public.as_bytes().len() == 32 && mac(public.as_bytes(), msg)[..] == *sig.as_bytes()
    }
}

fn mac(public: &[u8], msg: &[u8]) -> [u8; 32] {
    Sha256::new()
        .chain_update(b"fast-mac")
        .chain_update(public)
        .chain_update((msg.len() as u64).to_le_bytes())
        .chain_update(msg)
        .finalize()
        .into()
}
