use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes256Gcm, KeyInit, Nonce, Tag};
use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature as EcdsaSignature, SigningKey, VerifyingKey};
use rand_core::CryptoRngCore;
use rsa::pkcs1::{DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey};
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha2::Sha256;

use super::*;

const RSA_BITS: usize = 2048;

/// PBKDF2-HMAC-SHA256, AES-256-GCM, RSA-OAEP-SHA256 and ECDSA P-256.
///
/// RSA only wraps a fresh 32-byte content key; the payload itself is sealed
/// with AES-256-GCM, so plaintext size is unbounded.
#[derive(Debug, Clone)]
pub struct ProductionBackend {
    kdf_iterations: u32,
}

impl ProductionBackend {
    pub fn with_iterations(kdf_iterations: u32) -> Self {
        ProductionBackend { kdf_iterations }
    }
}

impl Default for ProductionBackend {
    fn default() -> Self {
        ProductionBackend::with_iterations(PRODUCTION_KDF_ITERATIONS)
    }
}

fn gcm_seal(key: &[u8], nonce: [u8; NONCE_LEN], plaintext: &[u8]) -> Ciphertext {
    let cipher = Aes256Gcm::new_from_slice(key).expect("32-byte key");
    let mut body = plaintext.to_vec();
    let tag =
        cipher.encrypt_in_place_detached(&Nonce::from(nonce), b"", &mut body).expect("plaintext within AES-GCM limits");
    Ciphertext { nonce, body, tag: tag.into() }
}

fn gcm_open(key: &[u8], ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new_from_slice(key).map_err(|_| CryptoError::InvalidKey)?;
    let mut body = ct.body.clone();
    cipher
        .decrypt_in_place_detached(&Nonce::from(ct.nonce), b"", &mut body, &Tag::from(ct.tag))
        .map_err(|_| CryptoError::AuthenticationFailure)?;
    Ok(body)
}

impl CryptoBackend for ProductionBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Production
    }

    fn derive_key(&self, password: &Password, salt: &Salt, _purpose: Purpose) -> Result<SymmetricKey, CryptoError> {
        pbkdf2_sha256(password, salt, self.kdf_iterations)
    }

    fn sym_encrypt(&self, key: &SymmetricKey, plaintext: &[u8], rng: &mut dyn CryptoRngCore) -> Ciphertext {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        gcm_seal(key.as_bytes(), nonce, plaintext)
    }

    fn sym_decrypt(&self, key: &SymmetricKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
        gcm_open(key.as_bytes(), ct)
    }

    fn generate_enc_pair(&self, mut rng: &mut dyn CryptoRngCore) -> EncKeyPair {
        let private = RsaPrivateKey::new(&mut rng, RSA_BITS).expect("RSA key generation");
        let public = RsaPublicKey::from(&private);
        EncKeyPair {
            public: EncPublicKey::from_vec(public.to_pkcs1_der().expect("encode public key").as_bytes().to_vec()),
            private: EncPrivateKey::from_vec(private.to_pkcs1_der().expect("encode private key").as_bytes().to_vec()),
        }
    }

    fn asym_encrypt(
        &self,
        public: &EncPublicKey,
        plaintext: &[u8],
        mut rng: &mut dyn CryptoRngCore,
    ) -> Result<AsymCiphertext, CryptoError> {
        let public = RsaPublicKey::from_pkcs1_der(public.as_bytes()).map_err(|_| CryptoError::InvalidKey)?;
        let content_key = SymmetricKey::random(rng);
        let wrapped = public
            .encrypt(&mut rng, Oaep::new::<Sha256>(), content_key.as_bytes())
            .map_err(|_| CryptoError::InvalidKey)?;
        let sealed = self.sym_encrypt(&content_key, plaintext, rng);

        let mut out = Vec::with_capacity(2 + wrapped.len() + sealed.len());
        out.extend_from_slice(&(wrapped.len() as u16).to_be_bytes());
        out.extend_from_slice(&wrapped);
        out.extend_from_slice(&sealed.to_bytes());
        Ok(AsymCiphertext::from_vec(out))
    }

    fn asym_decrypt(&self, private: &EncPrivateKey, ct: &AsymCiphertext) -> Result<Vec<u8>, CryptoError> {
        let private = RsaPrivateKey::from_pkcs1_der(private.as_bytes()).map_err(|_| CryptoError::InvalidKey)?;
        let bytes = ct.as_bytes();
        if bytes.len() < 2 {
            return Err(CryptoError::DecryptionFailure);
        }
        let wrapped_len = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
        let rest = &bytes[2..];
        if rest.len() < wrapped_len {
            return Err(CryptoError::DecryptionFailure);
        }
        let (wrapped, sealed) = rest.split_at(wrapped_len);
        let content_key =
            private.decrypt(Oaep::new::<Sha256>(), wrapped).map_err(|_| CryptoError::DecryptionFailure)?;
        let content_key = SymmetricKey::try_from_slice(&content_key).map_err(|_| CryptoError::DecryptionFailure)?;
        let sealed = Ciphertext::try_from_slice(sealed).map_err(|_| CryptoError::DecryptionFailure)?;
        gcm_open(content_key.as_bytes(), &sealed).map_err(|_| CryptoError::DecryptionFailure)
    }

    fn generate_sig_pair(&self, mut rng: &mut dyn CryptoRngCore) -> SigKeyPair {
        let signing = SigningKey::random(&mut rng);
        let verifying = VerifyingKey::from(&signing);
        SigKeyPair {
            public: SigPublicKey::from_vec(verifying.to_encoded_point(true).as_bytes().to_vec()),
            private: SigPrivateKey::from_vec(signing.to_bytes().to_vec()),
        }
    }

    fn sign(&self, private: &SigPrivateKey, msg: &[u8]) -> Result<Signature, CryptoError> {
        let signing = SigningKey::from_slice(private.as_bytes()).map_err(|_| CryptoError::InvalidKey)?;
        let sig: EcdsaSignature = signing.sign(msg);
        Ok(Signature::from_vec(sig.to_bytes().to_vec()))
    }

    fn verify(&self, public: &SigPublicKey, msg: &[u8], sig: &Signature) -> bool {
        let Ok(verifying) = VerifyingKey::from_sec1_bytes(public.as_bytes()) else {
            return false;
        };
        let Ok(sig) = EcdsaSignature::from_slice(sig.as_bytes()) else {
            return false;
        };
        verifying.verify(msg, &sig).is_ok()
    }
}
