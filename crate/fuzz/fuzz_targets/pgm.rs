#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym::io::pgm::GrayImage;
use occlusym::masks2d::BinaryMask;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = GrayImage::from_pgm(data) {
        assert_eq!(GrayImage::from_pgm(&img.to_pgm()).unwrap(), img);
    }
    let _ = BinaryMask::from_pgm(data);
});
