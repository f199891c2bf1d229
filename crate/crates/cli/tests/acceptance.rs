//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Pass criterion numbers as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nuggetcut::evalstat::{build_report, dice, dice_from_counts, CaseRow};
use nuggetcut::flowgraph::{build_graph, extract_cut, max_flow, FlowGraph};
use nuggetcut::metaimage::encode_mask;
use nuggetcut::segmenter::{segment_volume, terminal_weights, Strategy};
use nuggetcut::vec3::{dot, normalize, sub};
use nuggetcut::{
    make_phantom, BinaryMask, NeedleSpec, PhantomSpec, RayLattice, SegmentationParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// Criterion 1 ------------------------------------------------------------

fn brute_min_cut(g: &FlowGraph) -> f64 {
    let n = g.node_count();
    let mut best = f64::INFINITY;
    for set in 0u32..(1 << n) {
        let side = |v: usize| set >> v & 1 == 1;
        let mut c = 0.0;
        for v in 0..n {
            c += if side(v) {
                g.sink_caps()[v]
            } else {
                g.source_caps()[v]
            };
        }
        for a in g.arcs() {
            if side(a.from) && !side(a.to) {
                c += a.capacity;
            }
        }
        best = best.min(c);
    }
    best
}

fn maxflow_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 1000;
    let mut mismatches = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=12usize);
        let mut g = FlowGraph::new(n);
        for _ in 0..rng.random_range(0..=3 * n) {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            g.add_arc(u, v, rng.random_range(0..=20u32) as f64).unwrap();
        }
        for v in 0..n {
            g.set_source_cap(v, rng.random_range(0..=20u32) as f64);
            g.set_sink_cap(v, rng.random_range(0..=20u32) as f64);
        }
        let res = max_flow(&g);
        let best = brute_min_cut(&g);
        if res.flow_value != best || g.cut_capacity(&res.source_side) != best {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{cases} graphs, {mismatches} mismatches against 2^n enumeration"),
    )
}

// Criterion 2 ------------------------------------------------------------

fn energy(w: &[f64], n: usize, k: &[usize]) -> f64 {
    let mut e = 0.0;
    for (r, &kr) in k.iter().enumerate() {
        for i in 1..n {
            let x = w[r * n + i];
            e += if i > kr { x.max(0.0) } else { (-x).max(0.0) };
        }
    }
    e
}

fn brute_energy(rays: usize, n: usize, adj: &[(usize, usize)], dr: usize, w: &[f64]) -> f64 {
    let mut k = vec![0usize; rays];
    let mut best = f64::INFINITY;
    loop {
        if adj.iter().all(|&(a, b)| k[a].abs_diff(k[b]) <= dr) {
            best = best.min(energy(w, n, &k));
        }
        let mut i = 0;
        loop {
            if i == rays {
                return best;
            }
            k[i] += 1;
            if k[i] < n {
                break;
            }
            k[i] = 0;
            i += 1;
        }
    }
}

fn lattice_energy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases = 240;
    let mut bad = 0;
    let mut per_strategy = [0usize; 2];
    for case in 0..cases {
        let rays = rng.random_range(1..=6usize);
        let n = rng.random_range(2..=6usize);
        let dr = rng.random_range(0..=2usize);
        let strategy = if case % 2 == 0 {
            Strategy::Threshold
        } else {
            Strategy::Derivative
        };
        per_strategy[case % 2] += 1;
        let mut adj = Vec::new();
        for a in 0..rays {
            for b in a + 1..rays {
                if rng.random_bool(0.6) {
                    adj.push((a, b));
                }
            }
        }
        let dirs = (0..rays)
            .map(|i| normalize([(i as f64).cos(), (i as f64).sin(), 0.25 * i as f64 - 0.6]))
            .collect();
        let lattice = RayLattice::from_parts([0.0; 3], dirs, adj.clone(), n as f64, n).unwrap();
        let costs: Vec<f64> = (0..rays * n)
            .map(|_| rng.random_range(0..=60u32) as f64)
            .collect();
        let tau = rng.random_range(1..=40u32) as f64;
        let w = terminal_weights(&costs, n, tau, strategy).unwrap();
        let g = build_graph(&lattice, &w, dr, &[]).unwrap();
        let res = max_flow(&g);
        let cut = extract_cut(&res, &lattice).unwrap();
        let k: Vec<usize> = cut.k.iter().map(|&x| x.max(0) as usize).collect();
        let best = brute_energy(rays, n, &adj, dr, &w);
        let smooth = adj.iter().all(|&(a, b)| k[a].abs_diff(k[b]) <= dr);
        if res.flow_value != best || energy(&w, n, &k) != best || !smooth {
            bad += 1;
        }
    }
    outcome(
        bad == 0,
        format!(
            "{cases} lattices ({} threshold, {} derivative, dr 0..=2), {bad} differ from the brute-force minimum",
            per_strategy[0], per_strategy[1]
        ),
    )
}

// Criterion 3 ------------------------------------------------------------

fn random_phantom(rng: &mut ChaCha8Rng) -> PhantomSpec {
    let spacing = [0; 3].map(|_| rng.random_range(0.7..1.5));
    let radii = [0; 3].map(|_| rng.random_range(4.0..14.0));
    let rim = if rng.random_bool(0.3) {
        rng.random_range(0.5..2.0)
    } else {
        0.0
    };
    let extent = radii.iter().cloned().fold(0.0, f64::max) + rim + 6.0;
    let dims = spacing.map(|s| (2.0 * extent / s).ceil() as usize + 1);
    let origin = [0; 3].map(|_| rng.random_range(-50.0..50.0));
    let center = [0, 1, 2].map(|k| origin[k] + (dims[k] - 1) as f64 * spacing[k] / 2.0);
    let needle = rng.random_bool(0.3).then(|| NeedleSpec {
        direction: normalize([0; 3].map(|_| rng.random_range(-1.0..1.0))),
        shaft_radius_mm: 0.5,
        tine_count: 0,
        tine_length_mm: 0.0,
        value: 1500,
    });
    PhantomSpec {
        dims,
        spacing,
        origin,
        lesion_center: center,
        lesion_radii: radii,
        lesion_value: 40,
        background_value: 110,
        rim_thickness_mm: rim,
        rim_value: 180,
        needle,
        noise_sigma: rng.random_range(0.0..15.0),
        rng_seed: rng.random(),
    }
}

fn ball(geometry: &nuggetcut::Geometry, seed: [f64; 3], r: f64) -> BinaryMask {
    let mut m = BinaryMask::empty(*geometry);
    let d = geometry.dims;
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                let p = geometry.world(i, j, k);
                let q = sub(p, seed);
                if dot(q, q).sqrt() <= r {
                    m.set(i, j, k, true);
                }
            }
        }
    }
    if let Some([i, j, k]) = geometry.nearest_voxel(seed) {
        m.set(i, j, k, true);
    }
    m
}

fn rigid_sphere() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = SegmentationParams {
        delta_r: 0,
        ..SegmentationParams::default()
    };
    let runs = 50;
    let (mut unequal, mut not_ball) = (0, 0);
    for _ in 0..runs {
        let spec = random_phantom(&mut rng);
        let (volume, _) = make_phantom(&spec).unwrap();
        let seed = [0, 1, 2].map(|k| spec.lesion_center[k] + rng.random_range(-3.0..3.0));
        let seg = segment_volume(&volume, &params, seed, &[]).unwrap();
        if seg.cut.k.iter().any(|&k| k != seg.cut.k[0]) {
            unequal += 1;
            continue;
        }
        if seg.mask != ball(volume.geometry(), seed, seg.cut_radii_mm[0]) {
            not_ball += 1;
        }
    }
    outcome(
        unequal == 0 && not_ball == 0,
        format!("{runs} random phantoms with dr = 0: {unequal} with unequal cut indices, {not_ball} masks differ from the ball"),
    )
}

// Criteria 4 and 5 -------------------------------------------------------

fn sphere_accuracy() -> Outcome {
    let params = SegmentationParams::default();
    let mut parts = Vec::new();
    let mut pass = true;
    let mut slowest: f64 = 0.0;
    for (sigma, need) in [(5.0, 0.97), (15.0, 0.93)] {
        let mut worst = f64::INFINITY;
        for rng_seed in 1..=3 {
            let spec = PhantomSpec::sphere(20.0, 12.0).with_noise(sigma, rng_seed);
            let (volume, truth) = make_phantom(&spec).unwrap();
            let t = Instant::now();
            let seg = segment_volume(&volume, &params, spec.lesion_center, &[]).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            worst = worst.min(dice(&truth, &seg.mask).unwrap());
        }
        pass &= worst >= need;
        parts.push(format!(
            "sigma {sigma}: worst DSC {worst:.4} over 3 noise draws (need >= {need})"
        ));
    }
    pass &= slowest < 5.0;
    parts.push(format!("slowest segmentation {slowest:.2} s (need < 5 s)"));
    outcome(pass, parts.join("; "))
}

fn needle_fixture() -> (PhantomSpec, [f64; 3]) {
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
    (spec, direction)
}

fn needle_robustness() -> Outcome {
    let (spec, direction) = needle_fixture();
    let (volume, truth) = make_phantom(&spec).unwrap();
    let seg = segment_volume(
        &volume,
        &SegmentationParams::default(),
        spec.lesion_center,
        &[],
    )
    .unwrap();
    let d = dice(&truth, &seg.mask).unwrap();
    let reach = seg
        .mask
        .set_voxels()
        .map(|p| dot(sub(p, spec.lesion_center), direction).abs())
        .fold(0.0, f64::max);
    let ratio = reach / 20.0;
    outcome(
        d >= 0.93 && ratio <= 1.2,
        format!("DSC {d:.4} (need >= 0.93), extent along the needle {reach:.2} mm = {ratio:.3} x radius (need <= 1.2)"),
    )
}

// Criterion 6 ------------------------------------------------------------

fn table_arithmetic() -> Outcome {
    let text = include_str!("../../core/tests/data/clinical_cases.json");
    let cases: Vec<CaseRow> = serde_json::from_str(text).unwrap();
    let r = build_report(&cases).unwrap();
    let near = |a: f64, b: f64| (a - b).abs() <= 0.01;
    let o = r.overall.dsc.unwrap();
    let group = |name: &str| {
        r.subgroups
            .iter()
            .find(|g| g.name == name)
            .and_then(|g| g.dsc)
            .unwrap()
    };
    let (a, b) = (group("needle"), group("no-needle"));
    let mw = r.subgroup_test.result.unwrap();
    let wx = r.volume_test.result.unwrap();
    let pass = near(o.min, 71.78)
        && near(o.max, 83.53)
        && near(o.mean, 76.97)
        && near(o.stddev, 4.73)
        && near(a.mean, 75.61)
        && near(a.stddev, 4.02)
        && near(b.mean, 78.34)
        && near(b.stddev, 5.35)
        && mw.p_value > 0.05
        && wx.p_value > 0.05;
    outcome(
        pass,
        format!(
            "overall {:.2}/{:.2}/{:.2}+-{:.2}, needle {:.2}+-{:.2}, no needle {:.2}+-{:.2}, Mann-Whitney p {:.3}, Wilcoxon p {:.3}",
            o.min, o.max, o.mean, o.stddev, a.mean, a.stddev, b.mean, b.stddev, mw.p_value, wx.p_value
        ),
    )
}

// Criterion 7 ------------------------------------------------------------

fn performance() -> Outcome {
    let spec = PhantomSpec::sphere(20.0, 12.0).with_noise(5.0, 1);
    let (volume, _) = make_phantom(&spec).unwrap();
    let params = SegmentationParams::default();
    let mut recompute = Vec::new();
    let mut voxelize = Vec::new();
    for _ in 0..20 {
        let seg = segment_volume(&volume, &params, spec.lesion_center, &[]).unwrap();
        recompute.push(seg.recompute_ms);
        voxelize.push(seg.voxelize_ms);
    }
    recompute.sort_by(f64::total_cmp);
    voxelize.sort_by(f64::total_cmp);
    let med = |v: &[f64]| 0.5 * (v[9] + v[10]);
    let m = med(&recompute);
    outcome(
        m <= 250.0,
        format!(
            "812 rays x 40 nodes, median recompute {m:.1} ms over 20 runs (target <= 250 ms), voxelization median {:.1} ms reported separately",
            med(&voxelize)
        ),
    )
}

// Criterion 8 ------------------------------------------------------------

fn dice_units() -> Outcome {
    let (_, truth) = make_phantom(&PhantomSpec::sphere(6.0, 3.0)).unwrap();
    let identity = dice(&truth, &truth).unwrap();
    let mut a = BinaryMask::empty(*truth.geometry());
    let mut b = BinaryMask::empty(*truth.geometry());
    a.set(0, 0, 0, true);
    a.set(1, 0, 0, true);
    b.set(5, 5, 5, true);
    let disjoint = dice(&a, &b).unwrap();
    let triple = dice_from_counts(55_246, 70_208, 51_424).unwrap();
    outcome(
        identity == 1.0 && disjoint == 0.0 && (triple - 0.8198).abs() <= 1e-4,
        format!("identity {identity}, disjoint {disjoint}, (55246, 70208, 51424) -> {triple:.4}"),
    )
}

// Criterion 9 ------------------------------------------------------------

fn cli(args: &[&str]) -> i32 {
    let argv = std::iter::once("nuggetcut").chain(args.iter().copied());
    nuggetcut_cli::run_with(argv, &mut Vec::new(), &mut Vec::new())
}

fn service_mask(dir: &Path, volume_bytes: Vec<u8>, seed: [f64; 3]) -> Vec<u8> {
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let svc =
            nuggetcut_service::spawn(nuggetcut_service::ServiceConfig::new(dir), "127.0.0.1:0")
                .await
                .unwrap();
        let base = svc.url();
        let c = reqwest::Client::new();
        let post_json = |url: String, body: serde_json::Value| {
            c.post(url)
                .header("content-type", "application/json")
                .body(body.to_string())
        };
        let v: serde_json::Value = serde_json::from_slice(
            &c.post(format!("{base}/volumes"))
                .body(volume_bytes)
                .send()
                .await
                .unwrap()
                .bytes()
                .await
                .unwrap(),
        )
        .unwrap();
        let s: serde_json::Value = serde_json::from_slice(
            &post_json(
                format!("{base}/sessions"),
                serde_json::json!({"volume_id": v["volume_id"]}),
            )
            .send()
            .await
            .unwrap()
            .bytes()
            .await
            .unwrap(),
        )
        .unwrap();
        let sid = s["session_id"].as_str().unwrap();
        let r = c
            .put(format!("{base}/sessions/{sid}/seed"))
            .header("content-type", "application/json")
            .body(serde_json::json!({"x": seed[0], "y": seed[1], "z": seed[2]}).to_string())
            .send()
            .await
            .unwrap();
        assert!(r.status().is_success());
        let m: serde_json::Value = serde_json::from_slice(
            &c.post(format!("{base}/sessions/{sid}/commit"))
                .send()
                .await
                .unwrap()
                .bytes()
                .await
                .unwrap(),
        )
        .unwrap();
        let bytes = c
            .get(format!("{base}/masks/{}", m["mask_id"].as_str().unwrap()))
            .send()
            .await
            .unwrap()
            .bytes()
            .await
            .unwrap()
            .to_vec();
        svc.shutdown().await.unwrap();
        bytes
    })
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (spec, _) = needle_fixture();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    assert_eq!(
        cli(&["phantom", "--spec", &p("spec.json"), "--out", &p("vol.mhd")]),
        0
    );
    let seed = format!(
        "{},{},{}",
        spec.lesion_center[0], spec.lesion_center[1], spec.lesion_center[2]
    );
    for run in ["a", "b"] {
        let code = cli(&[
            "segment",
            "--volume",
            &p("vol.mhd"),
            "--seed",
            &seed,
            "--out",
            &p(&format!("{run}.mhd")),
            "--mesh",
            &p(&format!("{run}.obj")),
        ]);
        assert_eq!(code, 0);
    }
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    let runs_equal = read("a.mhd") == read("b.mhd") && read("a.obj") == read("b.obj");

    let volume_bytes = read("vol.mhd");
    let served = service_mask(
        &dir.path().join("service"),
        volume_bytes,
        spec.lesion_center,
    );
    let cli_vs_service = served == read("a.mhd");

    let (volume, _) = make_phantom(&spec).unwrap();
    let lib = segment_volume(
        &volume,
        &SegmentationParams::default(),
        spec.lesion_center,
        &[],
    )
    .unwrap();
    let lib_equal = encode_mask(&lib.mask) == read("a.mhd");
    outcome(
        runs_equal && cli_vs_service && lib_equal,
        format!(
            "two CLI runs identical: {runs_equal}; service commit identical to CLI mask: {cli_vs_service}; library identical: {lib_equal}"
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "max-flow oracle equivalence", maxflow_oracle),
        (2, "lattice energy identity", lattice_energy),
        (3, "dr = 0 sphericity", rigid_sphere),
        (4, "sphere phantom accuracy", sphere_accuracy),
        (5, "needle robustness", needle_robustness),
        (6, "table arithmetic reproduction", table_arithmetic),
        (7, "recompute performance", performance),
        (8, "DSC unit checks", dice_units),
        (9, "determinism", determinism),
    ];
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} {verdict} {name}: {} [{:.1} s]",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: criteria {failed:?} failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
