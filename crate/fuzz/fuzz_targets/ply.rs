#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym::io::ply::{parse_ply, write_ply};

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = parse_ply(data) {
        assert_eq!(parse_ply(&write_ply(&cloud)).unwrap(), cloud);
    }
});
