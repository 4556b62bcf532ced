use ndarray::Array2;
use occlusym::flow::load_checkpoint;
use occlusym::io::obj::{parse_obj, write_obj};
use occlusym::io::pgm::GrayImage;
use occlusym::io::ply::{parse_ply, write_ply};
use occlusym::io::tokens::{read_tokens, write_tokens};
use occlusym::io::voxel::{read_grid, read_sparse, write_grid, write_sparse};
use occlusym::io::write_atomic;
use occlusym::masks2d::BinaryMask;
use occlusym::mesh::TriMesh;
use occlusym::metrics::PointCloud;
use occlusym::slat::{SparseLatent, VoxelGrid};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
}

proptest! {
    #[test]
    fn pgm_roundtrip(w in 1usize..20, h in 1usize..20, seed in any::<u8>()) {
        let data: Vec<u8> = (0..w * h).map(|i| (i as u8).wrapping_mul(seed)).collect();
        let img = GrayImage { width: w, height: h, data };
        prop_assert_eq!(GrayImage::from_pgm(&img.to_pgm()).unwrap(), img);
    }

    #[test]
    fn mask_pgm_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
        let m = BinaryMask::from_bits(bits.len(), 1, bits).unwrap();
        prop_assert_eq!(BinaryMask::from_pgm(&m.to_pgm()).unwrap(), m);
    }

    #[test]
    fn ply_roundtrip(points in proptest::collection::vec(proptest::array::uniform3(finite()), 1..30)) {
        let c = PointCloud::new(points).unwrap();
        prop_assert_eq!(parse_ply(&write_ply(&c)).unwrap(), c);
    }

    #[test]
    fn tokens_roundtrip(r in 0usize..6, c in 0usize..6, vals in proptest::collection::vec(finite(), 36)) {
        let m = Array2::from_shape_fn((r, c), |(i, j)| vals[i * 6 + j]);
        prop_assert_eq!(read_tokens(&write_tokens(&m)).unwrap(), m);
    }

    #[test]
    fn grid_roundtrip(n in 2usize..10, seed in any::<u64>()) {
        let occ: Vec<bool> = (0..n * n * n).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        let g = VoxelGrid::from_occupancy(n, occ).unwrap();
        prop_assert_eq!(read_grid(&write_grid(&g)).unwrap(), g.clone());
        let s = SparseLatent::from_grid(&g);
        prop_assert_eq!(read_sparse(&write_sparse(&s)).unwrap(), s);
    }

    #[test]
    fn obj_roundtrip(level in 0usize..2, scale in 0.1f64..10.0) {
        let m = TriMesh::icosphere(level).transformed(|p| p.map(|c| c * scale));
        prop_assert_eq!(parse_obj(&write_obj(&m)).unwrap(), m);
    }

    #[test]
    fn parsers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = GrayImage::from_pgm(&bytes);
        let _ = parse_obj(&bytes);
        let _ = parse_ply(&bytes);
        let _ = read_tokens(&bytes);
        let _ = read_grid(&bytes);
        let _ = read_sparse(&bytes);
        let _ = load_checkpoint(&bytes);
    }

    #[test]
    fn prefixed_garbage_never_panics(tail in proptest::collection::vec(any::<u8>(), 0..128), which in 0usize..6) {
        let head: &[u8] = [
            &b"P5\n"[..],
            b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n",
            b"{\"shape\":[2,2],\"dtype\":\"f64le\",\"order\":\"row-major\"}\n",
            b"{\"N\":3,\"order\":\"x-major\"}\n",
            b"{\"N\":4}\n",
            b"OCSYCKPT\x01\x00\x00\x00",
        ][which];
        let bytes = [head, &tail[..]].concat();
        let _ = GrayImage::from_pgm(&bytes);
        let _ = parse_ply(&bytes);
        let _ = read_tokens(&bytes);
        let _ = read_grid(&bytes);
        let _ = read_sparse(&bytes);
        let _ = load_checkpoint(&bytes);
    }
}

#[test]
fn atomic_write_replaces_whole_file() {
    let dir = std::env::temp_dir().join(format!("occlusym-io-{}", std::process::id()));
    let path = dir.join("nested").join("out.bin");
    write_atomic(&path, b"first").unwrap();
    write_atomic(&path, b"second").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"second");
    let leftovers: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
    std::fs::remove_dir_all(&dir).unwrap();
}
