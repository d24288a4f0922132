#![no_main]
use curiolab::stats::parse_ratings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ratings) = parse_ratings(text, "fuzz") {
            assert!(ratings.stimuli.iter().all(|s| s.responses.iter().all(|(_, r)| (1..=5).contains(r))));
            let again = parse_ratings(&ratings.to_csv(), "fuzz").expect("written ratings parse");
            assert_eq!(again, ratings);
        }
    }
});
