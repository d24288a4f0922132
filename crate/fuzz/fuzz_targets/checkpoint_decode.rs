#![no_main]
use curiolab::wm::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Anything that decodes must survive a round trip.
    if let Ok((ckpt, hash)) = decode_checkpoint(data) {
        let again = decode_checkpoint(&encode_checkpoint(&ckpt, &hash)).expect("re-encoded checkpoint decodes");
        assert_eq!(again.1, hash);
        assert_eq!(again.0.step, ckpt.step);
    }
});
