#![no_main]
use curiolab::sim::store;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = store::parse_sidecar(text);
    }
});
