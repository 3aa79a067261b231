#![no_main]

use hefuse::protocol::wire::Message;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = Message::decode(data) {
        // Accepted frames re-encode to exactly the input.
        assert_eq!(msg.encode(), data);
    }
});
