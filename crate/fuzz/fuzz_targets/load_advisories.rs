#![no_main]
use libfuzzer_sys::fuzz_target;
use pinsim::metrics::AdvisoryDb;

fuzz_target!(|data: &[u8]| {
    let _ = AdvisoryDb::load_jsonl(data);
});
