#![no_main]

use cbf_lab::CommandSchedule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = text.parse::<CommandSchedule>() {
        let segs = s.segments();
        assert!(segs.windows(2).all(|w| w[0].0 < w[1].0));
        for &(t, v) in segs {
            assert_eq!(s.at(t), v);
        }
    }
});
