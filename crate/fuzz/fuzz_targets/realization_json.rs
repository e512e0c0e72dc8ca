#![no_main]

use libfuzzer_sys::fuzz_target;
use pufmvl::puf::PufRealization;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(puf) = PufRealization::from_json(text) {
        let again = PufRealization::from_json(&puf.to_json()).expect("serialized realization parses");
        assert_eq!(again, puf);
        if puf.is_calibrated() {
            let _ = puf.evaluate(0);
        }
    }
});
