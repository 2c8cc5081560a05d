#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(manifests) = pinsim::registry::load_manifests(data) {
        for m in &manifests {
            let _ = pinsim::resolver::classify_strategy(m);
        }
    }
});
