#![no_main]

use libfuzzer_sys::fuzz_target;
use longcode::quantum::{CMatrix, GeneralStrategy, SyncStrategy};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = serde_json::from_slice::<SyncStrategy>(data) {
        let text = serde_json::to_string(&s).expect("valid strategies serialize");
        serde_json::from_str::<SyncStrategy>(&text).expect("serialized strategies parse");
    }
    if let Ok(s) = serde_json::from_slice::<GeneralStrategy>(data) {
        let text = serde_json::to_string(&s).expect("valid strategies serialize");
        serde_json::from_str::<GeneralStrategy>(&text).expect("serialized strategies parse");
    }
    let _ = serde_json::from_slice::<CMatrix>(data);
});
