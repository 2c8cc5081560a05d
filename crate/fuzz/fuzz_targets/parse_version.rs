#![no_main]
use libfuzzer_sys::fuzz_target;
use pinsim::semver::Version;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(v) = Version::parse(s) {
        let again = Version::parse(&v.to_string()).expect("display output reparses");
        assert_eq!(v, again);
    }
});
