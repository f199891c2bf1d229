//! A bright needle runs through the lesion; the segmentation should hug the
//! lesion instead of following the needle out.

use nuggetcut::evalstat::dice;
use nuggetcut::vec3::{dot, normalize, sub};
use nuggetcut::{make_phantom, segmenter, NeedleSpec, PhantomSpec, SegmentationParams};

fn main() -> nuggetcut::Result<()> {
    let direction = normalize([0.3, 0.2, 1.0]);
    let spec = PhantomSpec::sphere(20.0, 12.0)
        .with_noise(5.0, 1)
        .with_needle(NeedleSpec {
            direction,
            shaft_radius_mm: 0.5,
            tine_count: 0,
            tine_length_mm: 0.0,
            value: 1500,
        });
    let (volume, truth) = make_phantom(&spec)?;
    let params = SegmentationParams::default();
    let seg = segmenter::segment_volume(&volume, &params, spec.lesion_center, &[])?;

    let reach = seg
        .mask
        .set_voxels()
        .map(|p| dot(sub(p, spec.lesion_center), direction))
        .fold(0.0, f64::max);
    println!("avg used        {:.2}", seg.avg_used);
    println!("tau used        {:.2}", seg.tau_used);
    println!("DSC             {:.4}", dice(&truth, &seg.mask)?);
    println!("reach / radius  {:.3}", reach / 20.0);
    println!("recompute       {:.1} ms", seg.recompute_ms);
    println!("voxelize        {:.1} ms", seg.voxelize_ms);
    Ok(())
}
