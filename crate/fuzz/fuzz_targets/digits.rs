#![no_main]

use libfuzzer_sys::fuzz_target;
use pufmvl::codec::{decode_digits, encode, round_digits, RadixSpec};

// First byte picks the radix, the rest feed digits and raw outputs.
fuzz_target!(|data: &[u8]| {
    let Some((&r, rest)) = data.split_first() else { return };
    let radix = u32::from(r);
    let digits: Vec<u32> = rest.iter().map(|&b| u32::from(b)).collect();
    if let Ok(v) = decode_digits(radix, &digits) {
        if let Ok(spec) = RadixSpec::new(radix, v.max(1)) {
            let dv = encode(v, &spec).expect("value fits its own spec");
            assert_eq!(dv.decode(), v);
        }
    }
    let raw: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Ok(spec) = RadixSpec::new(radix, 1 << 24) {
        if raw.len() == spec.width() {
            if let Ok(dv) = round_digits(&raw, &spec) {
                assert!(dv.digits().iter().all(|&d| d < radix));
            }
        }
    }
});
