#![no_main]

use libfuzzer_sys::fuzz_target;
use longcode::boolfun::NoiseSpec;
use longcode::games::{format_rational, parse_rational};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(r) = parse_rational(text) {
        assert_eq!(parse_rational(&format_rational(&r)).expect("round trip"), r);
    }
    if let Ok(e) = text.parse::<NoiseSpec>() {
        assert_eq!(e.to_string().parse::<NoiseSpec>().expect("round trip"), e);
        assert!(2 * u128::from(e.numer()) < u128::from(e.denom()));
    }
});
