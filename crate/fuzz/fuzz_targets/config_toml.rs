#![no_main]
use curiolab::harness::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = PipelineConfig::parse(text) {
            let mut again = PipelineConfig::parse(&config.to_toml()).expect("canonical config parses");
            again.output = config.output.clone();
            assert_eq!(again.hash(), config.hash());
        }
    }
});
