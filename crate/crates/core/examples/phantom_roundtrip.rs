//! Generate a phantom, write it as MetaImage, read it back and compare.
//!
//! Usage: phantom_roundtrip [output-dir]

use nuggetcut::metaimage::{load_mask, load_volume, save_mask, save_volume};
use nuggetcut::{make_phantom, NeedleSpec, PhantomSpec};

fn main() -> nuggetcut::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let spec = PhantomSpec::sphere(10.0, 6.0)
        .with_noise(8.0, 3)
        .with_needle(NeedleSpec {
            direction: [0.0, 0.0, 1.0],
            shaft_radius_mm: 0.5,
            tine_count: 4,
            tine_length_mm: 5.0,
            value: 1500,
        });
    println!("{}", serde_json::to_string_pretty(&spec).unwrap());
    let (volume, truth) = make_phantom(&spec)?;

    let vol_path = dir.join("phantom.mhd");
    let gt_path = dir.join("phantom_truth.mhd");
    save_volume(&volume, &vol_path)?;
    save_mask(&truth, &gt_path)?;
    let back = load_volume(&vol_path)?;
    let back_truth = load_mask(&gt_path)?;

    println!("dims            {:?}", volume.geometry().dims);
    println!("lesion voxels   {}", truth.count());
    println!("lesion volume   {:.1} mm3", truth.physical_volume_mm3());
    println!("volume intact   {}", back == volume);
    println!("truth intact    {}", back_truth == truth);
    println!("written to      {}", dir.display());
    Ok(())
}
