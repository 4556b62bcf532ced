#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym::flow::load_checkpoint;

fuzz_target!(|data: &[u8]| {
    let _ = load_checkpoint(data);
});
