#![no_main]

use libfuzzer_sys::fuzz_target;
use longcode::games::{Bcs, Lcs};

fuzz_target!(|data: &[u8]| {
    if let Ok(b) = serde_json::from_slice::<Bcs>(data) {
        let text = serde_json::to_string(&b).expect("valid systems serialize");
        let back: Bcs = serde_json::from_str(&text).expect("serialized systems parse");
        assert_eq!(back.len(), b.len());
    }
    if let Ok(l) = serde_json::from_slice::<Lcs>(data) {
        let text = serde_json::to_string(&l).expect("valid systems serialize");
        let back: Lcs = serde_json::from_str(&text).expect("serialized systems parse");
        assert_eq!(back.parity(), l.parity());
    }
});
