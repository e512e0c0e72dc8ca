#![no_main]

use libfuzzer_sys::fuzz_target;
use pufmvl::attack::SweepConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SweepConfig::from_toml(text) {
        let text = cfg.to_toml();
        let again = SweepConfig::from_toml(&text).expect("written config parses");
        assert_eq!(again.to_toml(), text);
    }
});
