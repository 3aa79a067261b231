#![no_main]

use hefuse::ckks::{BinaryFormat, Ciphertext};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ct) = Ciphertext::from_bytes(data) {
        assert!(Ciphertext::from_bytes(&ct.to_bytes()).is_ok());
    }
});
