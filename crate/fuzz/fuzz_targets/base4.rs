#![no_main]

use libfuzzer_sys::fuzz_target;
use skewprod::circle::OmegaState;
use skewprod::config::parse_digits;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mut w) = OmegaState::parse_base4(text) {
        for _ in 0..64 {
            let v = w.value();
            assert!((0.0..1.0).contains(&v));
            w.advance();
        }
    }
    if let Ok(d) = parse_digits(text) {
        assert!(d.iter().all(|&x| x < 4));
    }
});
