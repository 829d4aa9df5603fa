#![no_main]

use libfuzzer_sys::fuzz_target;
use partstore::crypto::{SymmetricKey, TestBackend};
use partstore::storage::{open_part, open_storage, SealedBlob};

fuzz_target!(|data: &[u8]| {
    let Ok(blob) = SealedBlob::from_bytes(data) else {
        return;
    };
    assert_eq!(SealedBlob::from_bytes(&blob.to_bytes()).unwrap(), blob);
    // Opening must fail cleanly under a key nobody sealed with.
    let backend = TestBackend::with_iterations(1);
    let key = SymmetricKey::from_bytes([0x42; 32]);
    let _ = open_storage(&backend, &blob, &key);
    let _ = open_part(&backend, &blob, &key);
});
