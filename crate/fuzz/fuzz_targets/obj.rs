#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym::io::obj::{parse_obj, write_obj};

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_obj(data) {
        // written meshes must parse back to the same triangles
        let again = parse_obj(&write_obj(&mesh)).expect("re-parse");
        assert_eq!(again.triangles(), mesh.triangles());
    }
});
