#![no_main]

use hefuse::ckks::{BinaryFormat, EvaluationKeys, PublicKey, SecretKey};
use libfuzzer_sys::fuzz_target;

// The first byte picks the key type.
fuzz_target!(|data: &[u8]| {
    let Some((&tag, body)) = data.split_first() else {
        return;
    };
    match tag % 3 {
        0 => drop(PublicKey::from_bytes(body)),
        1 => drop(SecretKey::from_bytes(body)),
        _ => drop(EvaluationKeys::from_bytes(body)),
    }
});
