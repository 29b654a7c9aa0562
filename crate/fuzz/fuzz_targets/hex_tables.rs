#![no_main]

use libfuzzer_sys::fuzz_target;
use longcode::boolfun::{BoolFun, CubeSubset, VarSet};

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    let Ok(hex) = std::str::from_utf8(rest) else {
        return;
    };
    let domain = VarSet::new((0..usize::from(n % 17)).map(|i| format!("x{i}"))).expect("distinct names");
    if let Ok(f) = BoolFun::from_hex(domain.clone(), hex) {
        assert_eq!(BoolFun::from_hex(domain.clone(), &f.to_hex()).expect("round trip"), f);
    }
    if let Ok(s) = CubeSubset::from_hex(domain.clone(), hex) {
        assert_eq!(CubeSubset::from_hex(domain, &s.to_hex()).expect("round trip"), s);
    }
});
