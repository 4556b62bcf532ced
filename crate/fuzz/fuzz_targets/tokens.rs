#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym::io::tokens::{read_tokens, write_tokens};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = read_tokens(data) {
        let back = read_tokens(&write_tokens(&m)).unwrap();
        assert_eq!(back.dim(), m.dim());
    }
});
