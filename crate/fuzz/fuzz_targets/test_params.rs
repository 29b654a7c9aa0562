#![no_main]

use libfuzzer_sys::fuzz_target;
use longcode::longcode::{sample_round, AliceQuestion, TestParams};
use longcode::seeding::round_rng;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = serde_json::from_slice::<TestParams>(data) {
        let text = serde_json::to_string(&p).expect("valid params serialize");
        serde_json::from_str::<TestParams>(&text).expect("serialized params parse");
        let _ = sample_round(&p, &mut round_rng(0, 0));
    }
    if let Ok(q) = serde_json::from_slice::<AliceQuestion>(data) {
        let text = serde_json::to_string(&q).expect("valid questions serialize");
        serde_json::from_str::<AliceQuestion>(&text).expect("serialized questions parse");
    }
});
