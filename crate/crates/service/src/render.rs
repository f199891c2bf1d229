//! Slice bitmaps and contour overlays in slice pixel coordinates.
//!
//! A slice of plane `P` at index `i` holds the voxels whose normal-axis
//! index equals `i`. Pixel `(u, v)` is column `u` along the first in-plane
//! axis and row `v` along the second (`Plane::in_plane_axes`), with pixel
//! centres at integer coordinates and row 0 at the top of the bitmap.

use nuggetcut::surface::{Plane, SurfaceMesh};
use nuggetcut::vec3::Vec3;
use nuggetcut::{Geometry, Segmentation, Volume};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

pub const DEFAULT_WINDOW_CENTER: f64 = 40.0;
pub const DEFAULT_WINDOW_WIDTH: f64 = 400.0;

/// Width and height of a slice of `plane`.
pub fn slice_size(geometry: &Geometry, plane: Plane) -> (usize, usize) {
    let (a, b) = plane.in_plane_axes();
    (geometry.dims[a], geometry.dims[b])
}

pub fn check_index(geometry: &Geometry, plane: Plane, index: usize) -> ApiResult<()> {
    let n = geometry.dims[plane.normal_axis()];
    if index >= n {
        return Err(ApiError::unprocessable(format!(
            "{plane:?} slice index {index} outside 0..{n}"
        )));
    }
    Ok(())
}

/// Linear window: `center - width/2` maps to 0, `center + width/2` to 255.
pub fn window(value: f64, center: f64, width: f64) -> u8 {
    let lo = center - width / 2.0;
    let t = ((value - lo) / width * 255.0).round();
    t.clamp(0.0, 255.0) as u8
}

/// Row-major 8-bit pixels of one slice.
pub fn slice_pixels(
    volume: &Volume,
    plane: Plane,
    index: usize,
    center: f64,
    width: f64,
) -> ApiResult<Vec<u8>> {
    let g = volume.geometry();
    check_index(g, plane, index)?;
    if !(width > 0.0) || !center.is_finite() || !width.is_finite() {
        return Err(ApiError::unprocessable(
            "window width must be positive and finite",
        ));
    }
    let (a, b) = plane.in_plane_axes();
    let axis = plane.normal_axis();
    let (w, h) = slice_size(g, plane);
    let mut out = Vec::with_capacity(w * h);
    let mut ijk = [0usize; 3];
    ijk[axis] = index;
    for v in 0..h {
        for u in 0..w {
            ijk[a] = u;
            ijk[b] = v;
            out.push(window(
                volume.get(ijk[0], ijk[1], ijk[2]) as f64,
                center,
                width,
            ));
        }
    }
    Ok(out)
}

pub fn encode_png(width: usize, height: usize, pixels: &[u8]) -> ApiResult<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| ApiError::internal(e.to_string()))?;
        writer
            .write_image_data(pixels)
            .map_err(|e| ApiError::internal(e.to_string()))?;
    }
    Ok(buf)
}

pub fn slice_png(
    volume: &Volume,
    plane: Plane,
    index: usize,
    center: f64,
    width: f64,
) -> ApiResult<Vec<u8>> {
    let px = slice_pixels(volume, plane, index, center, width)?;
    let (w, h) = slice_size(volume.geometry(), plane);
    encode_png(w, h, &px)
}

pub fn world_to_pixel(geometry: &Geometry, plane: Plane, p: Vec3) -> [f64; 2] {
    let (a, b) = plane.in_plane_axes();
    [
        (p[a] - geometry.origin[a]) / geometry.spacing[a],
        (p[b] - geometry.origin[b]) / geometry.spacing[b],
    ]
}

pub fn pixel_to_world(geometry: &Geometry, plane: Plane, index: usize, px: [f64; 2]) -> Vec3 {
    let (a, b) = plane.in_plane_axes();
    let axis = plane.normal_axis();
    let mut p = [0.0; 3];
    p[a] = geometry.origin[a] + px[0] * geometry.spacing[a];
    p[b] = geometry.origin[b] + px[1] * geometry.spacing[b];
    p[axis] = plane_position(geometry, plane, index);
    p
}

/// World coordinate of the slice plane along its normal.
pub fn plane_position(geometry: &Geometry, plane: Plane, index: usize) -> f64 {
    let axis = plane.normal_axis();
    geometry.origin[axis] + index as f64 * geometry.spacing[axis]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    /// Projection onto the slice, in pixels.
    pub pixel: [f64; 2],
    pub world: Vec3,
    /// Signed distance from the slice plane along its normal, in mm.
    pub offset_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourOverlay {
    pub plane: Plane,
    pub slice_index: usize,
    pub polylines: Vec<Polyline>,
    pub seed: Marker,
    pub border_seeds: Vec<Marker>,
}

fn marker(geometry: &Geometry, plane: Plane, index: usize, p: Vec3) -> Marker {
    Marker {
        pixel: world_to_pixel(geometry, plane, p),
        world: p,
        offset_mm: p[plane.normal_axis()] - plane_position(geometry, plane, index),
    }
}

pub fn overlay(
    surface: &SurfaceMesh,
    geometry: &Geometry,
    plane: Plane,
    index: usize,
    seed: Vec3,
    border_seeds: &[Vec3],
) -> ApiResult<ContourOverlay> {
    check_index(geometry, plane, index)?;
    let polylines = surface
        .slice(plane, plane_position(geometry, plane, index))
        .into_iter()
        .map(|c| Polyline {
            points: c
                .points
                .iter()
                .map(|&p| world_to_pixel(geometry, plane, p))
                .collect(),
            closed: c.closed,
        })
        .collect();
    Ok(ContourOverlay {
        plane,
        slice_index: index,
        polylines,
        seed: marker(geometry, plane, index, seed),
        border_seeds: border_seeds
            .iter()
            .map(|&p| marker(geometry, plane, index, p))
            .collect(),
    })
}

/// Inclusive slice-index ranges on which a contour can appear, per plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourAvailability {
    pub axial: Option<[usize; 2]>,
    pub coronal: Option<[usize; 2]>,
    pub sagittal: Option<[usize; 2]>,
}

pub fn availability(surface: &SurfaceMesh, geometry: &Geometry) -> ContourAvailability {
    let range = |axis: usize| -> Option<[usize; 2]> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &surface.vertices {
            lo = lo.min(v[axis]);
            hi = hi.max(v[axis]);
        }
        let s = geometry.spacing[axis];
        let first = ((lo - geometry.origin[axis]) / s).ceil().max(0.0);
        let last = ((hi - geometry.origin[axis]) / s)
            .floor()
            .min(geometry.dims[axis] as f64 - 1.0);
        (first.is_finite() && last >= first).then(|| [first as usize, last as usize])
    };
    ContourAvailability {
        sagittal: range(0),
        coronal: range(1),
        axial: range(2),
    }
}

/// Overlays for a list of requested slices; out-of-range indices are errors.
pub fn overlays_for(
    seg: &Segmentation,
    geometry: &Geometry,
    border_seeds: &[Vec3],
    slices: &[SliceRef],
) -> ApiResult<Vec<ContourOverlay>> {
    slices
        .iter()
        .map(|s| {
            overlay(
                &seg.surface,
                geometry,
                s.plane,
                s.index,
                seg.seed,
                border_seeds,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceRef {
    pub plane: Plane,
    pub index: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> Geometry {
        Geometry::new([7, 5, 3], [0.5, 1.5, 2.0], [-3.0, 10.0, 4.0]).unwrap()
    }

    #[test]
    fn window_endpoints() {
        assert_eq!(window(-160.0, 40.0, 400.0), 0);
        assert_eq!(window(240.0, 40.0, 400.0), 255);
        assert_eq!(window(40.0, 40.0, 400.0), 128);
        assert_eq!(window(1e6, 40.0, 1.0), 255);
        assert_eq!(window(-1e6, 40.0, 1.0), 0);
    }

    #[test]
    fn pixel_world_round_trip() {
        let g = geometry();
        for plane in [Plane::Axial, Plane::Coronal, Plane::Sagittal] {
            let (w, h) = slice_size(&g, plane);
            for index in 0..g.dims[plane.normal_axis()] {
                for v in 0..h {
                    for u in 0..w {
                        let px = [u as f64 + 0.25, v as f64 - 0.4];
                        let p = pixel_to_world(&g, plane, index, px);
                        let back = world_to_pixel(&g, plane, p);
                        assert!((back[0] - px[0]).abs() < 1e-9 && (back[1] - px[1]).abs() < 1e-9);
                        let c = pixel_to_world(&g, plane, index, [u as f64, v as f64]);
                        let ijk = g.nearest_voxel(c).unwrap();
                        let (a, b) = plane.in_plane_axes();
                        assert_eq!((ijk[a], ijk[b], ijk[plane.normal_axis()]), (u, v, index));
                    }
                }
            }
        }
    }

    #[test]
    fn slice_pixels_follow_layout() {
        let g = geometry();
        let data: Vec<i16> = (0..g.len() as i16).collect();
        let vol = Volume::new(g, data).unwrap();
        let px = slice_pixels(&vol, Plane::Coronal, 2, 127.5, 255.0).unwrap();
        assert_eq!(px.len(), 7 * 3);
        for v in 0..3 {
            for u in 0..7 {
                assert_eq!(px[v * 7 + u], vol.get(u, 2, v) as u8);
            }
        }
        assert!(slice_pixels(&vol, Plane::Axial, 3, 0.0, 1.0).is_err());
        assert!(slice_pixels(&vol, Plane::Axial, 0, 0.0, 0.0).is_err());
    }

    #[test]
    fn png_header() {
        let bytes = encode_png(3, 2, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    }
}
