#![no_main]

use libfuzzer_sys::fuzz_target;
use partstore::sharing::Share;

fuzz_target!(|data: &[u8]| {
    if let Ok(share) = Share::from_bytes(data) {
        assert_eq!(share.to_bytes(), data);
    }
});
