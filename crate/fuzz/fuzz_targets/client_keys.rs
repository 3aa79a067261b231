#![no_main]

use hefuse::keystore::ClientKeys;
use hefuse::protocol::wire::Message;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = Message::decode(data) {
        let _ = ClientKeys::from_message(&msg);
    }
});
