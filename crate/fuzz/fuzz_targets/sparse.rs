#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym::io::voxel::{read_sparse, write_sparse};

fuzz_target!(|data: &[u8]| {
    if let Ok(latent) = read_sparse(data) {
        let _ = read_sparse(&write_sparse(&latent)).expect("re-read");
    }
});
