#![no_main]

use libfuzzer_sys::fuzz_target;
use pufmvl::mlp::checkpoint::{from_bytes, to_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = from_bytes(data) {
        assert_eq!(to_bytes(&m), data);
    }
});
