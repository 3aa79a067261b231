#![no_main]

use hefuse::protocol::store::{encode_record, replay_log};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let (map, valid) = replay_log(data);
    assert!(valid <= data.len());
    // The accepted prefix replays to the same map on its own.
    assert_eq!(replay_log(&data[..valid]), (map.clone(), valid));
    let rebuilt: Vec<u8> = map.iter().flat_map(|(id, blob)| encode_record(id, blob)).collect();
    assert_eq!(replay_log(&rebuilt).0, map);
});
