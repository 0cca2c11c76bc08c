#![no_main]

use libfuzzer_sys::fuzz_target;
use mcx_cli::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sc) = Scenario::from_json_str(text) {
        // a validated scenario must survive a round trip
        let back = Scenario::from_json_str(&sc.to_json()).expect("round trip");
        assert_eq!(back.to_json(), sc.to_json());
    }
});
