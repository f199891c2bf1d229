//! Segment a small corpus of phantoms, score each against its ground truth
//! and feed the rows through the same report as the clinical table.

use nuggetcut::evalstat::{build_report, CaseRow};
use nuggetcut::{make_phantom, segmenter, NeedleSpec, PhantomSpec, SegmentationParams};

fn main() -> nuggetcut::Result<()> {
    let params = SegmentationParams::default();
    let mut rows = Vec::new();
    for (i, radius) in [8.0, 11.0, 14.0, 17.0, 20.0, 23.0].into_iter().enumerate() {
        for needle in [false, true] {
            let mut spec =
                PhantomSpec::sphere(radius, 10.0).with_noise(5.0 + 2.0 * i as f64, 100 + i as u64);
            spec.lesion_radii = [radius, radius * 0.85, radius * 0.75];
            if needle {
                spec = spec.with_needle(NeedleSpec {
                    direction: [0.2, -0.1, 1.0],
                    shaft_radius_mm: 0.5,
                    tine_count: 0,
                    tine_length_mm: 0.0,
                    value: 1500,
                });
            }
            let (volume, truth) = make_phantom(&spec)?;
            let seg = segmenter::segment_volume(&volume, &params, spec.lesion_center, &[])?;
            let id = format!("r{radius}{}", if needle { "n" } else { "" });
            let group = if needle { "needle" } else { "no-needle" };
            rows.push(CaseRow::from_masks(id, &truth, &seg.mask)?.with_subgroup(group));
        }
    }
    print!("{}", build_report(&rows)?.to_text());
    Ok(())
}
