//! Scalar volumes, binary masks and intensity sampling.
//!
//! Voxel `(i, j, k)` has its centre at `origin + (i, j, k) * spacing` (mm).
//! Data is stored x-fastest: `index = i + nx * (j + ny * k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack (in voxel units) accepted when testing whether a point lies inside
/// the voxel-centre hull.
const HULL_EPS: f64 = 1e-9;

/// Grid geometry shared by volumes and masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Geometry(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Geometry(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Geometry(format!(
                "origin must be finite, got {origin:?}"
            )));
        }
        Ok(Geometry {
            dims,
            spacing,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// World position (mm) of a voxel centre.
    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Continuous voxel coordinates of a world point.
    #[inline]
    pub fn continuous_index(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Whether `p` lies inside the hull spanned by the voxel centres.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let u = self.continuous_index(p);
        (0..3).all(|a| u[a] >= -HULL_EPS && u[a] <= (self.dims[a] - 1) as f64 + HULL_EPS)
    }

    /// Index of the voxel whose centre is nearest to `p`, if `p` is inside the hull.
    pub fn nearest_voxel(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        if !self.contains(p) {
            return None;
        }
        let u = self.continuous_index(p);
        let mut out = [0usize; 3];
        for a in 0..3 {
            out[a] = (u[a].round().max(0.0) as usize).min(self.dims[a] - 1);
        }
        Some(out)
    }

    /// Lower and upper world corners of the voxel-centre hull.
    pub fn hull(&self) -> ([f64; 3], [f64; 3]) {
        let hi = self.world(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1);
        (self.origin, hi)
    }
}

/// A 3D scalar image with signed 16-bit intensities (HU-like units).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: Geometry,
    data: Vec<i16>,
}

impl Volume {
    pub fn new(geometry: Geometry, data: Vec<i16>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Size {
                expected: geometry.len(),
                actual: data.len(),
            });
        }
        Ok(Volume { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: i16) -> Self {
        Volume {
            data: vec![value; geometry.len()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [i16] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<i16> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> i16 {
        self.data[self.geometry.index(i, j, k)]
    }

    /// Trilinear interpolation of the eight surrounding voxel-centre values.
    ///
    /// Returns [`Error::OutOfBounds`] for points outside the voxel-centre hull.
    pub fn sample_trilinear(&self, p: [f64; 3]) -> Result<f64> {
        let g = &self.geometry;
        if !g.contains(p) {
            return Err(Error::OutOfBounds(p));
        }
        let u = g.continuous_index(p);
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let n = g.dims[a];
            let mut x = u[a].clamp(0.0, (n - 1) as f64);
            // Snap round-off from the world/index round trip onto the grid.
            if (x - x.round()).abs() < 1e-9 {
                x = x.round();
            }
            if n == 1 {
                base[a] = 0;
                frac[a] = 0.0;
            } else {
                let i0 = (x.floor() as usize).min(n - 2);
                base[a] = i0;
                frac[a] = x - i0 as f64;
            }
        }
        let step = [
            usize::from(g.dims[0] > 1),
            usize::from(g.dims[1] > 1),
            usize::from(g.dims[2] > 1),
        ];
        let mut acc = 0.0;
        for corner in 0..8usize {
            let (ox, oy, oz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = weight(frac[0], ox) * weight(frac[1], oy) * weight(frac[2], oz);
            if w == 0.0 {
                continue;
            }
            let v = self.get(
                base[0] + ox * step[0],
                base[1] + oy * step[1],
                base[2] + oz * step[2],
            );
            acc += w * f64::from(v);
        }
        Ok(acc)
    }

    /// Mean and spread of the voxel values whose centres fall inside the
    /// axis-aligned cube of side `edge_mm` centred at `center`.
    ///
    /// The cube is half-open (`[c - e/2, c + e/2)` per axis), so a 10 mm cube
    /// on a 1 mm grid centred on a voxel holds exactly 1000 voxels.
    pub fn region_stats(&self, center: [f64; 3], edge_mm: f64) -> Result<RegionStats> {
        if !(edge_mm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cube edge must be positive, got {edge_mm}"
            )));
        }
        let g = &self.geometry;
        if !g.contains(center) {
            return Err(Error::OutOfBounds(center));
        }
        let half = edge_mm / 2.0;
        let mut ranges = [(0usize, 0usize); 3];
        for a in 0..3 {
            let lo = ((center[a] - half - g.origin[a]) / g.spacing[a]).ceil();
            let hi = ((center[a] + half - g.origin[a]) / g.spacing[a]).ceil() - 1.0;
            let lo = lo.max(0.0);
            let hi = hi.min((g.dims[a] - 1) as f64);
            if hi < lo {
                return Err(Error::DegenerateRegion(center));
            }
            ranges[a] = (lo as usize, hi as usize);
        }
        let mut values = Vec::new();
        for k in ranges[2].0..=ranges[2].1 {
            for j in ranges[1].0..=ranges[1].1 {
                for i in ranges[0].0..=ranges[0].1 {
                    values.push(f64::from(self.get(i, j, k)));
                }
            }
        }
        RegionStats::from_values(&values).ok_or(Error::DegenerateRegion(center))
    }
}

#[inline]
fn weight(t: f64, upper: usize) -> f64 {
    if upper == 1 {
        t
    } else {
        1.0 - t
    }
}

/// Summary of the intensities in a seed neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub mean: f64,
    /// Sample standard deviation (divisor n - 1; zero for a single voxel).
    pub stddev: f64,
    pub voxel_count: usize,
    /// Outlier-resistant spread: 1.4826 × median absolute deviation.
    pub robust_sigma: f64,
}

impl RegionStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stddev = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let med = median(values.to_vec());
        let mad = median(values.iter().map(|v| (v - med).abs()).collect());
        Some(RegionStats {
            mean,
            stddev,
            voxel_count: n,
            robust_sigma: 1.4826 * mad,
        })
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One inclusion flag per voxel, on a grid shared with its parent volume.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    geometry: Geometry,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(geometry: Geometry, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != geometry.len() {
            return Err(Error::Size {
                expected: geometry.len(),
                actual: bits.len(),
            });
        }
        Ok(BinaryMask { geometry, bits })
    }

    pub fn empty(geometry: Geometry) -> Self {
        BinaryMask {
            bits: vec![false; geometry.len()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[self.geometry.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.geometry.index(i, j, k);
        self.bits[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn physical_volume_mm3(&self) -> f64 {
        self.count() as f64 * self.geometry.voxel_volume()
    }

    /// World positions of every set voxel centre.
    pub fn set_voxels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(idx, _)| {
                let [i, j, k] = self.geometry.coords(idx);
                self.geometry.world(i, j, k)
            })
    }
}
