#![no_main]

use hefuse::dataset::{decode_dataset, encode_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(ds) = decode_dataset(data) else {
        return;
    };
    // Decoding renormalizes single-precision values, so a second pass may
    // move the last bits but nothing more.
    let again = decode_dataset(&encode_dataset(&ds).expect("decoded datasets re-encode")).unwrap();
    assert_eq!(again.modalities, ds.modalities);
    assert_eq!(again.subjects.len(), ds.subjects.len());
    for (a, b) in again.subjects.iter().zip(&ds.subjects) {
        assert_eq!(a.subject_id, b.subject_id);
        for (m, list) in &b.samples {
            for (x, y) in a.samples[m].iter().zip(list) {
                assert!(x.values().iter().zip(y.values()).all(|(p, q)| (p - q).abs() < 1e-6));
            }
        }
    }
});
