#![no_main]

use libfuzzer_sys::fuzz_target;
use pufmvl::puf::CrpDataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = CrpDataset::parse(text) {
        let again = CrpDataset::parse(&ds.to_text()).expect("serialized dataset parses");
        assert_eq!(again, ds);
    }
});
