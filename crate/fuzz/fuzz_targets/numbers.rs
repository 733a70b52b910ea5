#![no_main]

use libfuzzer_sys::fuzz_target;
use skewprod::config::{parse_bool, parse_f64, parse_list, parse_u64};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_f64(text) {
        assert!(v.is_finite());
    }
    if let Ok(n) = parse_u64(text) {
        assert_eq!(parse_u64(&n.to_string()).unwrap(), n);
    }
    let _ = parse_bool(text);
    let _ = parse_list(text, parse_u64);
});
