#![no_main]

use libfuzzer_sys::fuzz_target;
use longcode::longcode::TranscriptRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for line in text.lines() {
        if let Ok(r) = TranscriptRecord::parse(line) {
            let again = serde_json::to_string(&r).expect("records serialize");
            TranscriptRecord::parse(&again).expect("serialized records parse");
        }
    }
});
