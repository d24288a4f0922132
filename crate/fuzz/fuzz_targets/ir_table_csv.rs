#![no_main]
use curiolab::irf::parse_ir_table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_ir_table(text);
    }
});
