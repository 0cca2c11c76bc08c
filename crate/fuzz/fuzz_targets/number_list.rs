//! Comma lists as given to `--masses` and `--c`.
#![no_main]

use libfuzzer_sys::fuzz_target;
use mcx_cli::parse_list;
use mcx_core::config::moment_report;
use mcx_core::{MassConfig, RegimeParams};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_list::<usize>(text) {
        let _ = v.len();
    }
    let Ok(values) = parse_list::<f64>(text) else { return };
    if let Ok(x) = MassConfig::new(values.clone()) {
        let rep = moment_report(&x);
        assert!(rep.sigma2 >= 0.0);
    }
    let _ = RegimeParams::new(1.0, 0.0, values);
});
