#![no_main]

use libfuzzer_sys::fuzz_target;
use onmf_core::data::{parse_case_csv, CaseType};

// The case-table parser must return a structured error, never panic, on
// arbitrary bytes.
fuzz_target!(|data: &[u8]| {
    let _ = parse_case_csv(data, CaseType::Confirmed);
});
