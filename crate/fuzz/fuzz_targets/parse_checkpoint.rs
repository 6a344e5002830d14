#![no_main]

use libfuzzer_sys::fuzz_target;
use onmf_core::checkpoint::ModelCheckpoint;

// Any document that passes parsing and validation must also rebuild into
// model state without panicking.
fuzz_target!(|data: &[u8]| {
    if let Ok(checkpoint) = ModelCheckpoint::from_slice(data) {
        let _ = checkpoint.into_state();
    }
});
