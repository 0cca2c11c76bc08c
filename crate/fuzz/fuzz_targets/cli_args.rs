#![no_main]

use clap::Parser;
use libfuzzer_sys::fuzz_target;
use mcx_cli::Cli;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let args = std::iter::once("mcx").chain(text.split_whitespace());
    if let Ok(cli) = Cli::try_parse_from(args) {
        if cli.config.is_none() {
            let _ = cli.scenario();
        }
    }
});
