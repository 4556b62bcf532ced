#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym_cli::report::parse_losses;

fuzz_target!(|data: &[u8]| {
    let _ = parse_losses(data);
});
