#![no_main]

use libfuzzer_sys::fuzz_target;
use mtmv_core::model::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        let again = Checkpoint::decode(&ck.encode()).expect("re-encoded checkpoint must decode");
        assert_eq!(again.encode(), ck.encode());
        let _ = ck.into_model();
    }
});
