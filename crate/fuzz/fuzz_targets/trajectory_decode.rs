#![no_main]
use curiolab::sim::store;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = store::decode(data);
});
