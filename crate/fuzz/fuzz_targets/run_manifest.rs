#![no_main]

use libfuzzer_sys::fuzz_target;
use rmc_cli::manifest::RunManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = RunManifest::from_json(text) {
        let again = RunManifest::from_json(&m.to_json()).unwrap();
        assert_eq!(again.subcommand, m.subcommand);
        assert_eq!(again.seed, m.seed);
    }
});
