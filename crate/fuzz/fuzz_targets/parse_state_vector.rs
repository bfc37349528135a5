#![no_main]

use cbf_lab::parse_state_vector;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(x) = parse_state_vector(text, None) {
        assert!(!x.is_empty() && x.iter().all(|v| v.is_finite()));
        let joined: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        assert_eq!(
            parse_state_vector(&joined.join(","), Some(x.len())).expect("reparses"),
            x
        );
    }
});
