use nuggetcut::geometry::Polyhedron;
use nuggetcut::metaimage::{
    decode_mask, decode_volume, encode_mask, encode_volume, load_mask, load_volume, save_mask,
    save_volume,
};
use nuggetcut::{make_phantom, BinaryMask, Geometry, PhantomSpec, RayLattice, Volume};
use proptest::prelude::*;

fn geometry_strategy() -> impl Strategy<Value = Geometry> {
    (
        prop::array::uniform3(1usize..6),
        prop::array::uniform3(0.1f64..3.0),
        prop::array::uniform3(-100.0f64..100.0),
    )
        .prop_map(|(d, s, o)| Geometry::new(d, s, o).unwrap())
}

proptest! {
    #[test]
    fn volume_round_trip(g in geometry_strategy(), seed in any::<u64>()) {
        let mut x = seed;
        let data: Vec<i16> = (0..g.len())
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 48) as i16
            })
            .collect();
        let v = Volume::new(g, data).unwrap();
        let bytes = encode_volume(&v);
        let back = decode_volume(&bytes, None).unwrap();
        prop_assert_eq!(back.geometry(), v.geometry());
        prop_assert_eq!(back.data(), v.data());
        prop_assert_eq!(encode_volume(&back), bytes);
    }

    #[test]
    fn mask_round_trip(g in geometry_strategy(), bits in prop::collection::vec(any::<bool>(), 216)) {
        let m = BinaryMask::new(g, bits[..g.len()].to_vec()).unwrap();
        let back = decode_mask(&encode_mask(&m), None).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn nested_radii_never_unset(r in 1.0f64..9.0, grow in 0.0f64..3.0) {
        let mut spec = PhantomSpec::sphere(12.0, 2.0);
        spec.lesion_radii = [r, r * 0.8, r * 1.1];
        let (_, small) = make_phantom(&spec).unwrap();
        spec.lesion_radii = spec.lesion_radii.map(|x| x + grow);
        let (_, big) = make_phantom(&spec).unwrap();
        prop_assert!(small.bits().iter().zip(big.bits()).all(|(s, b)| !s || *b));
    }

    #[test]
    fn lattice_translates_rigidly(t in prop::array::uniform3(-50.0f64..50.0)) {
        let p = Polyhedron::with_level(2);
        let a = RayLattice::build([0.0; 3], &p, 10.0, 5).unwrap();
        let b = RayLattice::build(t, &p, 10.0, 5).unwrap();
        prop_assert_eq!(a.directions(), b.directions());
        for r in 0..a.ray_count() {
            for i in 0..5 {
                let (pa, pb) = (a.position(r, i), b.position(r, i));
                for k in 0..3 {
                    prop_assert!((pb[k] - pa[k] - t[k]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PhantomSpec::sphere(5.0, 2.0).with_noise(3.0, 9);
    let (vol, truth) = make_phantom(&spec).unwrap();
    let vp = dir.path().join("vol.mhd");
    let mp = dir.path().join("truth.mhd");
    save_volume(&vol, &vp).unwrap();
    save_mask(&truth, &mp).unwrap();
    assert_eq!(load_volume(&vp).unwrap(), vol);
    assert_eq!(load_mask(&mp).unwrap(), truth);
    assert!(load_volume(dir.path().join("missing.mhd"))
        .unwrap_err()
        .is_io());
}

#[test]
fn refinement_levels_stay_valid() {
    for level in 0..=5 {
        let p = Polyhedron::with_level(level);
        p.validate().unwrap();
        let mut min_dot = 1.0f64;
        if level <= 3 {
            for i in 0..p.vertices.len() {
                for j in i + 1..p.vertices.len() {
                    let d: f64 = (0..3).map(|k| p.vertices[i][k] * p.vertices[j][k]).sum();
                    min_dot = min_dot.min(1.0 - d);
                }
            }
            assert!(min_dot > 1e-6);
        }
    }
}
