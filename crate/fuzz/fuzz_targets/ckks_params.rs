#![no_main]

use hefuse::ckks::{BinaryFormat, CkksContext, CkksParams};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = CkksParams::from_bytes(data) {
        let _ = CkksContext::new(params);
    }
});
