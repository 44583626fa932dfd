#![no_main]

use libfuzzer_sys::fuzz_target;
use mtmv_core::run_config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_json(text) {
            let back = RunConfig::from_json(&cfg.to_json()).expect("resolved config must parse");
            assert_eq!(back.to_json(), cfg.to_json());
            let _ = cfg.model_config();
            let _ = cfg.train_config();
        }
    }
});
