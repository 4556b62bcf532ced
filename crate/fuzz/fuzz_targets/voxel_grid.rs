#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym::io::voxel::{read_grid, write_grid};

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = read_grid(data) {
        assert_eq!(read_grid(&write_grid(&grid)).unwrap(), grid);
    }
});
