#![no_main]

use libfuzzer_sys::fuzz_target;
use partstore::protocol::ProtocolMessage;

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = ProtocolMessage::from_json(data) {
        let again = ProtocolMessage::from_json(&msg.to_json()).expect("canonical form parses");
        assert_eq!(again, msg);
    }
});
