#![no_main]

use libfuzzer_sys::fuzz_target;
use partstore::crypto::{Ciphertext, CryptoBackend, SymmetricKey, TestBackend};

fuzz_target!(|data: &[u8]| {
    let Ok(ct) = Ciphertext::try_from_slice(data) else {
        return;
    };
    assert_eq!(ct.to_bytes(), data);
    let key = SymmetricKey::from_bytes([7; 32]);
    let _ = TestBackend::with_iterations(1).sym_decrypt(&key, &ct);
});
