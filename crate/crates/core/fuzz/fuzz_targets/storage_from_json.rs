#![no_main]

use libfuzzer_sys::fuzz_target;
use partstore::codec::{from_json, to_canonical_json};
use partstore::storage::{Storage, StoragePart};

fuzz_target!(|data: &[u8]| {
    if let Ok(storage) = from_json::<Storage>(data) {
        let bytes = to_canonical_json(&storage).unwrap();
        assert_eq!(from_json::<Storage>(&bytes).unwrap(), storage);
    }
    if let Ok(part) = from_json::<StoragePart>(data) {
        let bytes = to_canonical_json(&part).unwrap();
        assert_eq!(from_json::<StoragePart>(&bytes).unwrap(), part);
    }
});
