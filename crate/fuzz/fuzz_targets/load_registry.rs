#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(loaded) = pinsim::registry::load_registry(data) {
        let mut out = Vec::new();
        loaded.snapshot.write_jsonl(&mut out).unwrap();
        let again = pinsim::registry::load_registry(out.as_slice()).expect("written registry reloads");
        assert_eq!(again.snapshot.release_count(), loaded.snapshot.release_count());
    }
});
