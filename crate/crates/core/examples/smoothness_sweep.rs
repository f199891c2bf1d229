//! Sweep the smoothness bound and the strategy on a noisy ellipsoid.

use nuggetcut::evalstat::dice;
use nuggetcut::{make_phantom, segmenter, PhantomSpec, RayLattice, SegmentationParams, Strategy};

fn main() -> nuggetcut::Result<()> {
    let mut spec = PhantomSpec::sphere(18.0, 10.0).with_noise(10.0, 4);
    spec.lesion_radii = [18.0, 13.0, 9.0];
    let (volume, truth) = make_phantom(&spec)?;
    for strategy in [Strategy::Threshold, Strategy::Derivative] {
        for delta_r in 0..=4 {
            let params = SegmentationParams {
                delta_r,
                strategy,
                ..SegmentationParams::default()
            };
            let seg = segmenter::segment_volume(&volume, &params, spec.lesion_center, &[])?;
            let lattice = RayLattice::build(
                seg.seed,
                segmenter::polyhedron(params.refinement_level),
                params.max_radius_mm,
                params.nodes_per_ray,
            )?;
            let s = seg.summary();
            println!(
                "{strategy:?} dr {delta_r}: DSC {:.4}  largest neighbour step {}  radii {:.2}..{:.2} mm",
                dice(&truth, &seg.mask)?,
                seg.cut.max_neighbour_step(&lattice),
                s.radius_min_mm,
                s.radius_max_mm,
            );
        }
    }
    Ok(())
}
