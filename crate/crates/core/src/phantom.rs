//! Synthetic test volumes with an analytically known lesion.
//!
//! A phantom is a dark ellipsoidal lesion in brighter background, optionally
//! surrounded by a bright rim and pierced by a very bright needle (shaft plus
//! straight tines), with seeded Gaussian noise added last.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{add, dot, norm, normalize, scale, sub};
use crate::volume::{BinaryMask, Geometry, Volume};

/// Angle between each tine and the forward needle axis.
const TINE_SPREAD_RAD: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
    pub lesion_center: [f64; 3],
    /// Ellipsoid semi-axes along x, y, z (mm).
    pub lesion_radii: [f64; 3],
    #[serde(default = "default_lesion_value")]
    pub lesion_value: i16,
    #[serde(default = "default_background_value")]
    pub background_value: i16,
    #[serde(default)]
    pub rim_thickness_mm: f64,
    #[serde(default = "default_rim_value")]
    pub rim_value: i16,
    #[serde(default)]
    pub needle: Option<NeedleSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeedleSpec {
    /// Direction from the lesion centre towards the needle's entry point.
    pub direction: [f64; 3],
    #[serde(default = "default_shaft_radius")]
    pub shaft_radius_mm: f64,
    #[serde(default)]
    pub tine_count: usize,
    #[serde(default)]
    pub tine_length_mm: f64,
    #[serde(default = "default_needle_value")]
    pub value: i16,
}

fn default_lesion_value() -> i16 {
    40
}
fn default_background_value() -> i16 {
    110
}
fn default_rim_value() -> i16 {
    180
}
fn default_shaft_radius() -> f64 {
    0.5
}
fn default_needle_value() -> i16 {
    1500
}

impl PhantomSpec {
    /// Spherical lesion of `radius_mm` centred in a cubic 1 mm grid with
    /// `margin_mm` of background on every side.
    pub fn sphere(radius_mm: f64, margin_mm: f64) -> Self {
        let n = (2.0 * (radius_mm + margin_mm)).ceil() as usize + 1;
        let c = (n - 1) as f64 / 2.0;
        PhantomSpec {
            dims: [n; 3],
            spacing: [1.0; 3],
            origin: [0.0; 3],
            lesion_center: [c.floor(); 3],
            lesion_radii: [radius_mm; 3],
            lesion_value: default_lesion_value(),
            background_value: default_background_value(),
            rim_thickness_mm: 0.0,
            rim_value: default_rim_value(),
            needle: None,
            noise_sigma: 0.0,
            rng_seed: 0,
        }
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.rng_seed = seed;
        self
    }

    pub fn with_needle(mut self, needle: NeedleSpec) -> Self {
        self.needle = Some(needle);
        self
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.dims, self.spacing, self.origin).map_err(|e| Error::Spec(e.to_string()))
    }

    fn validate(&self) -> Result<Geometry> {
        let g = self.geometry()?;
        if self.lesion_radii.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::Spec("lesion radii must be >= 0".into()));
        }
        if !(self.rim_thickness_mm >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::Spec(
                "rim thickness and noise sigma must be >= 0".into(),
            ));
        }
        let (lo, hi) = g.hull();
        for a in 0..3 {
            let extent = self.lesion_radii[a] + self.rim_thickness_mm;
            if self.lesion_center[a] - extent < lo[a] - 1e-9
                || self.lesion_center[a] + extent > hi[a] + 1e-9
            {
                return Err(Error::Spec(format!(
                    "lesion (with rim) leaves the volume along axis {a}"
                )));
            }
        }
        if let Some(n) = &self.needle {
            if norm(n.direction) == 0.0 || !norm(n.direction).is_finite() {
                return Err(Error::Spec("needle direction must be non-zero".into()));
            }
            if !(n.shaft_radius_mm >= 0.0) || !(n.tine_length_mm >= 0.0) {
                return Err(Error::Spec("needle sizes must be >= 0".into()));
            }
        }
        Ok(g)
    }

    /// Whether a world point lies inside the lesion ellipsoid.
    pub fn in_lesion(&self, p: [f64; 3]) -> bool {
        ellipsoid_level(p, self.lesion_center, self.lesion_radii).is_some_and(|l| l <= 1.0)
    }
}

/// Σ((p - c) / r)², or `None` for a degenerate ellipsoid.
fn ellipsoid_level(p: [f64; 3], c: [f64; 3], r: [f64; 3]) -> Option<f64> {
    if r.iter().any(|&x| x <= 0.0) {
        return None;
    }
    Some((0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum())
}

struct NeedleGeometry {
    axis: [f64; 3],
    tines: Vec<[f64; 3]>,
    radius: f64,
    tine_length: f64,
    value: i16,
}

impl NeedleGeometry {
    fn new(spec: &NeedleSpec) -> Self {
        let axis = normalize(spec.direction);
        let forward = scale(axis, -1.0);
        let (e1, e2) = orthonormal_basis(axis);
        let tines = (0..spec.tine_count)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / spec.tine_count as f64;
                let side = add(scale(e1, phi.cos()), scale(e2, phi.sin()));
                normalize(add(
                    scale(forward, TINE_SPREAD_RAD.cos()),
                    scale(side, TINE_SPREAD_RAD.sin()),
                ))
            })
            .collect();
        NeedleGeometry {
            axis,
            tines,
            radius: spec.shaft_radius_mm,
            tine_length: spec.tine_length_mm,
            value: spec.value,
        }
    }

    fn contains(&self, rel: [f64; 3]) -> bool {
        on_segment(rel, self.axis, f64::INFINITY, self.radius)
            || self
                .tines
                .iter()
                .any(|&t| on_segment(rel, t, self.tine_length, self.radius))
    }
}

fn on_segment(rel: [f64; 3], dir: [f64; 3], length: f64, radius: f64) -> bool {
    let t = dot(rel, dir);
    if t < 0.0 || t > length {
        return false;
    }
    let perp = sub(rel, scale(dir, t));
    dot(perp, perp) <= radius * radius
}

/// Renders the phantom and its noise-free ground-truth lesion mask.
pub fn make_phantom(spec: &PhantomSpec) -> Result<(Volume, BinaryMask)> {
    let g = spec.validate()?;
    let needle = spec.needle.as_ref().map(NeedleGeometry::new);
    let rim_radii = spec.lesion_radii.map(|r| r + spec.rim_thickness_mm);
    let has_rim = spec.rim_thickness_mm > 0.0 && spec.lesion_radii.iter().all(|&r| r > 0.0);

    let mut values = vec![0f64; g.len()];
    let mut truth = vec![false; g.len()];
    for (idx, value) in values.iter_mut().enumerate() {
        let [i, j, k] = g.coords(idx);
        let p = g.world(i, j, k);
        let inside = spec.in_lesion(p);
        truth[idx] = inside;
        let mut v = if inside {
            spec.lesion_value
        } else if has_rim
            && ellipsoid_level(p, spec.lesion_center, rim_radii).is_some_and(|l| l <= 1.0)
        {
            spec.rim_value
        } else {
            spec.background_value
        };
        if let Some(n) = &needle {
            if n.contains(sub(p, spec.lesion_center)) {
                v = n.value;
            }
        }
        *value = f64::from(v);
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = GaussianStream::new(spec.rng_seed);
        for v in values.iter_mut() {
            *v += spec.noise_sigma * rng.next_normal();
        }
    }

    let data = values
        .into_iter()
        .map(|v| v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16)
        .collect();
    Ok((Volume::new(g, data)?, BinaryMask::new(g, truth)?))
}

/// SplitMix64 state advance.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in (0, 1].
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Standard normal deviates from SplitMix64 via the Box–Muller transform;
/// each pair of uniforms yields two deviates, cosine branch first.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream {
            rng: SplitMix64::new(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.rng.next_open01();
        let u2 = self.rng.next_open01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

fn orthonormal_basis(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if n[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let e1 = normalize(sub(helper, scale(n, dot(helper, n))));
    let e2 = [
        n[1] * e1[2] - n[2] * e1[1],
        n[2] * e1[0] - n[0] * e1[2],
        n[0] * e1[1] - n[1] * e1[0],
    ];
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn sphere_voxel_count_matches_brute_force() {
        let spec = PhantomSpec::sphere(20.0, 5.0);
        let (_, truth) = make_phantom(&spec).unwrap();
        let c = spec.lesion_center;
        let mut expected = 0usize;
        for k in 0..spec.dims[2] {
            for j in 0..spec.dims[1] {
                for i in 0..spec.dims[0] {
                    let d2 = (i as f64 - c[0]).powi(2)
                        + (j as f64 - c[1]).powi(2)
                        + (k as f64 - c[2]).powi(2);
                    if d2 <= 400.0 {
                        expected += 1;
                    }
                }
            }
        }
        // Lattice points in a radius-20 ball centred on a lattice point.
        assert_eq!(expected, 33_401);
        assert_eq!(truth.count(), expected);
    }

    #[test]
    fn zero_radius_gives_empty_truth() {
        let mut spec = PhantomSpec::sphere(10.0, 2.0);
        spec.lesion_radii = [0.0; 3];
        let (vol, truth) = make_phantom(&spec).unwrap();
        assert_eq!(truth.count(), 0);
        assert!(vol.data().iter().all(|&v| v == 110));
    }

    #[test]
    fn lesion_outside_volume_rejected() {
        let mut spec = PhantomSpec::sphere(10.0, 2.0);
        spec.lesion_center[0] = 3.0;
        assert!(matches!(make_phantom(&spec), Err(Error::Spec(_))));
        let mut spec = PhantomSpec::sphere(10.0, 2.0);
        spec.rim_thickness_mm = 3.0;
        assert!(make_phantom(&spec).is_err());
    }

    #[test]
    fn two_values_without_noise_needle_or_rim() {
        let spec = PhantomSpec::sphere(6.0, 3.0);
        let (vol, _) = make_phantom(&spec).unwrap();
        let distinct: BTreeSet<i16> = vol.data().iter().copied().collect();
        assert_eq!(distinct.into_iter().collect::<Vec<_>>(), vec![40, 110]);
    }

    #[test]
    fn needle_shaft_outside_lesion_has_needle_value() {
        let spec = PhantomSpec::sphere(10.0, 10.0).with_needle(NeedleSpec {
            direction: [0.0, 0.0, 1.0],
            shaft_radius_mm: 0.5,
            tine_count: 3,
            tine_length_mm: 6.0,
            value: 1500,
        });
        let (vol, truth) = make_phantom(&spec).unwrap();
        let c = spec.lesion_center.map(|x| x as usize);
        for k in c[2]..spec.dims[2] {
            assert_eq!(vol.get(c[0], c[1], k), 1500, "k = {k}");
        }
        // Needle voxels inside the lesion stay in the ground truth.
        assert!(truth.get(c[0], c[1], c[2] + 3));
        // Below the centre only tines may be present, never along the axis.
        assert_eq!(vol.get(c[0], c[1], c[2] - 8), 40);
    }

    #[test]
    fn rim_shell_is_bright() {
        let mut spec = PhantomSpec::sphere(8.0, 6.0);
        spec.rim_thickness_mm = 2.0;
        let (vol, _) = make_phantom(&spec).unwrap();
        let c = spec.lesion_center.map(|x| x as usize);
        assert_eq!(vol.get(c[0] + 9, c[1], c[2]), 180);
        assert_eq!(vol.get(c[0] + 8, c[1], c[2]), 40);
        assert_eq!(vol.get(c[0] + 11, c[1], c[2]), 110);
    }

    #[test]
    fn deterministic_noise() {
        let spec = PhantomSpec::sphere(5.0, 3.0).with_noise(10.0, 42);
        let (a, ma) = make_phantom(&spec).unwrap();
        let (b, mb) = make_phantom(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let (c, _) = make_phantom(&spec.clone().with_noise(10.0, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn splitmix_reference_values() {
        // Published SplitMix64 outputs for seed 1234567.
        let mut r = SplitMix64::new(1234567);
        assert_eq!(r.next_u64(), 6457827717110365317);
        assert_eq!(r.next_u64(), 3203168211198807973);
        assert_eq!(r.next_u64(), 9817491932198370423);
    }

    #[test]
    fn gaussian_moments() {
        let mut g = GaussianStream::new(7);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| g.next_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn spec_json_defaults() {
        let json = r#"{"dims":[10,10,10],"spacing":[1,1,1],
                       "lesion_center":[5,5,5],"lesion_radii":[3,3,3],
                       "needle":{"direction":[1,0,0]}}"#;
        let spec: PhantomSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.lesion_value, 40);
        assert_eq!(spec.background_value, 110);
        assert_eq!(spec.needle.as_ref().unwrap().value, 1500);
        assert!(serde_json::from_str::<PhantomSpec>(r#"{"dims":[1,1,1],"bogus":1}"#).is_err());
    }
}
