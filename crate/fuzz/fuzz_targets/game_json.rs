#![no_main]

use libfuzzer_sys::fuzz_target;
use longcode::games::ExplicitGame;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = serde_json::from_slice::<ExplicitGame>(data) {
        let text = serde_json::to_string(&g).expect("valid games serialize");
        let back: ExplicitGame = serde_json::from_str(&text).expect("serialized games parse");
        assert!(back.same_game(&g));
        let _ = longcode::transforms::ensure_nonempty_answers(&g);
    }
});
