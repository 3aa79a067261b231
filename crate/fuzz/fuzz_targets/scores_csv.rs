#![no_main]

use hefuse::metrics::{read_scores, write_scores};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_scores(data) {
        let mut out = Vec::new();
        write_scores(&mut out, &records).unwrap();
        let _ = read_scores(out.as_slice());
    }
});
