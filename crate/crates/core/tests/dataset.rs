use hefuse::biometric::{generate_synthetic_db, Modality, ModalityNoise, SyntheticConfig};
use hefuse::dataset::{decode_dataset, encode_dataset, Dataset, DatasetError};
use proptest::prelude::*;

fn dataset(n_subjects: usize, template_len: usize, samples_max: usize, seed: u64) -> Dataset {
    let cfg = SyntheticConfig {
        n_subjects,
        template_len,
        samples_min: 1,
        samples_max,
        modalities: [Modality::Iris, Modality::Fingerprint]
            .into_iter()
            .map(|modality| ModalityNoise { modality, sigma: 0.2 })
            .collect(),
        seed,
    };
    Dataset {
        template_len,
        modalities: cfg.modality_order(),
        subjects: generate_synthetic_db(&cfg).unwrap(),
    }
}

fn assert_close(a: &Dataset, b: &Dataset) {
    assert_eq!((a.template_len, &a.modalities), (b.template_len, &b.modalities));
    assert_eq!(a.subjects.len(), b.subjects.len());
    for (x, y) in a.subjects.iter().zip(&b.subjects) {
        assert_eq!(x.subject_id, y.subject_id);
        assert_eq!(x.session_count(), y.session_count());
        for (m, list) in &y.samples {
            for (p, q) in x.samples[m].iter().zip(list) {
                assert!(p.values().iter().zip(q.values()).all(|(u, v)| (u - v).abs() < 1e-6));
            }
        }
    }
}

#[test]
fn every_proper_prefix_is_rejected() {
    let bytes = encode_dataset(&dataset(3, 5, 3, 1)).unwrap();
    for cut in 0..bytes.len() {
        assert!(decode_dataset(&bytes[..cut]).is_err(), "prefix of {cut} bytes");
    }
}

#[test]
fn duplicate_modalities_and_zero_sessions_are_invalid() {
    let mut bytes = encode_dataset(&dataset(2, 2, 1, 4)).unwrap();
    // Header: magic(4) version(2) template_len(4) count(1) codes(2).
    bytes[12] = bytes[11];
    assert!(matches!(decode_dataset(&bytes), Err(DatasetError::Invalid(_))));
    let mut bytes = encode_dataset(&dataset(2, 2, 1, 4)).unwrap();
    let id_len = u16::from_le_bytes([bytes[17], bytes[18]]) as usize;
    bytes[19 + id_len] = 0;
    assert!(matches!(decode_dataset(&bytes), Err(DatasetError::Invalid(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_is_stable_within_single_precision(
        n in 2usize..6, d in 1usize..12, samples in 1usize..4, seed in any::<u64>(),
    ) {
        let data = dataset(n, d, samples, seed);
        let once = decode_dataset(&encode_dataset(&data).unwrap()).unwrap();
        assert_close(&once, &data);
        let twice = decode_dataset(&encode_dataset(&once).unwrap()).unwrap();
        assert_close(&twice, &once);
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
        let _ = decode_dataset(&bytes);
    }

    #[test]
    fn corrupted_files_never_panic(flip in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = encode_dataset(&dataset(3, 3, 2, 9)).unwrap();
        let i = flip.index(bytes.len());
        bytes[i] ^= 1 << bit;
        if let Ok(ds) = decode_dataset(&bytes) {
            prop_assert!(encode_dataset(&ds).is_ok());
        }
    }
}
