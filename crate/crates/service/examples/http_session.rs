//! Start the service on an ephemeral port, upload a phantom, segment it over
//! HTTP, fetch a slice and a contour overlay, then commit the mask.

use nuggetcut::metaimage::encode_volume;
use nuggetcut::{make_phantom, PhantomSpec};
use nuggetcut_service::{spawn, ServiceConfig};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let svc = spawn(ServiceConfig::new(dir.path()), "127.0.0.1:0").await?;
    let base = svc.url();
    let client = reqwest::Client::new();
    println!("listening on {base}");

    let spec = PhantomSpec::sphere(15.0, 8.0).with_noise(5.0, 2);
    let (volume, _) = make_phantom(&spec)?;
    let vol: Value = client
        .post(format!("{base}/volumes"))
        .body(encode_volume(&volume))
        .send()
        .await?
        .json()
        .await?;
    println!("volume   {vol}");

    let session: Value = client
        .post(format!("{base}/sessions"))
        .json(&json!({"volume_id": vol["volume_id"], "params": {"delta_r": 2}}))
        .send()
        .await?
        .json()
        .await?;
    let sid = session["session_id"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    println!("session  {sid}");

    let c = spec.lesion_center;
    let seg: Value = client
        .put(format!("{base}/sessions/{sid}/seed"))
        .json(&json!({"x": c[0], "y": c[1], "z": c[2]}))
        .send()
        .await?
        .json()
        .await?;
    println!("summary  {}", seg["summary"]);
    println!("contours {}", seg["contours"]);

    let png = client
        .get(format!(
            "{base}/volumes/{}/slice?plane=axial&index=23",
            vol["volume_id"].as_str().unwrap_or_default()
        ))
        .send()
        .await?;
    println!(
        "slice    {} ({} bytes)",
        png.status(),
        png.bytes().await?.len()
    );

    let overlay: Value = client
        .get(format!(
            "{base}/sessions/{sid}/contour?plane=axial&index=23"
        ))
        .send()
        .await?
        .json()
        .await?;
    let points: usize = overlay["polylines"].as_array().map_or(0, |p| {
        p.iter()
            .map(|l| l["points"].as_array().map_or(0, Vec::len))
            .sum()
    });
    println!(
        "overlay  {} polylines, {points} points",
        overlay["polylines"].as_array().map_or(0, Vec::len)
    );

    let mask: Value = client
        .post(format!("{base}/sessions/{sid}/commit"))
        .send()
        .await?
        .json()
        .await?;
    println!("mask     {mask}");
    svc.shutdown().await?;
    Ok(())
}
