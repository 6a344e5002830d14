#![no_main]

use libfuzzer_sys::fuzz_target;
use onmf_core::config::RunConfig;

// Config parsing plus value validation on arbitrary UTF-8.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = RunConfig::from_toml_str(text);
    }
});
