#![no_main]

use libfuzzer_sys::fuzz_target;
use skewprod::config::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = Config::parse(text) else { return };
    for key in cfg.entries().keys() {
        let _ = cfg.f64(key);
        let _ = cfg.u64(key);
        let _ = cfg.bool(key);
        let _ = cfg.u64_list(key);
        let _ = cfg.grid(key);
        let _ = cfg.omega(key);
    }
    // re-serialising the entries must parse to the same config
    let text: String = cfg.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    assert_eq!(Config::parse(&text).unwrap(), cfg);
});
