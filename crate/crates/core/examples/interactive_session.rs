//! Drive a session the way a viewer would: place the seed, drag it, pin the
//! boundary with border seeds, then clear them again.

use std::sync::Arc;

use nuggetcut::evalstat::dice;
use nuggetcut::{make_phantom, PhantomSpec, SegmentationParams, Session};

fn main() -> nuggetcut::Result<()> {
    let spec = PhantomSpec::sphere(15.0, 10.0).with_noise(5.0, 9);
    let (volume, truth) = make_phantom(&spec)?;
    let c = spec.lesion_center;
    let mut session = Session::new(Arc::new(volume), SegmentationParams::default(), c)?;

    let report = |label: &str, seg: &nuggetcut::Segmentation| {
        let s = seg.summary();
        println!(
            "{label:<22} seed {:?}  radii {:.2}..{:.2} mm  DSC {:.4}  {:.1} ms",
            s.seed,
            s.radius_min_mm,
            s.radius_max_mm,
            dice(&truth, &seg.mask).unwrap_or(f64::NAN),
            s.recompute_ms
        );
    };

    report("initial", &*session.segment()?);
    for step in 1..=4 {
        let seg = session.drag_seed([c[0] + step as f64, c[1], c[2] - 0.5 * step as f64])?;
        report(&format!("drag {step}"), &seg);
    }
    let seg = session.add_border_seed([c[0], c[1], c[2] + 18.0])?;
    report("border seed above", &seg);
    match session.add_border_seed([c[0], c[1], c[2] - 4.0]) {
        Ok(seg) => report("second border seed", &seg),
        Err(e) => println!("second border seed     rejected: {e}"),
    }
    println!(
        "state: {}",
        serde_json::to_string(&session.state()).unwrap()
    );
    session.clear_border_seeds();
    report("cleared", &*session.segment()?);
    Ok(())
}
