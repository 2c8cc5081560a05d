#![no_main]
use libfuzzer_sys::fuzz_target;
use pinsim::semver::{Version, VersionConstraint};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let c = VersionConstraint::parse(s);
    let _ = c.class();
    let _ = c.lower_bound();
    for probe in ["0.0.0", "1.2.3", "1.2.3-beta.1", "99.0.0"] {
        let _ = c.satisfies(&Version::parse(probe).unwrap());
    }
    if let Ok(strict) = VersionConstraint::parse_strict(s) {
        assert_eq!(strict.class(), c.class());
    }
});
