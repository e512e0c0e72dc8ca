#![no_main]

use libfuzzer_sys::fuzz_target;
use pufmvl::attack::{parse_results_csv, results_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_results_csv(text) {
        let again = parse_results_csv(&results_csv(&rows)).expect("written rows parse");
        assert_eq!(again.len(), rows.len());
    }
});
