//! Seed-driven segmentation: neighbourhood statistics, node costs, terminal
//! weights, the graph cut, the surface and the voxel mask.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowgraph::{self, Constraint, CutIndices, Label, INFINITE_CAPACITY};
use crate::geometry::{Polyhedron, RayLattice};
use crate::surface::SurfaceMesh;
use crate::vec3::{cross, dot, norm, scale, sub, Vec3};
use crate::volume::{BinaryMask, Geometry, RegionStats, Volume};

/// Cost assigned to lattice nodes that fall outside the volume.
pub const OUTSIDE_COST: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    #[default]
    Auto,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// `w = tau - c`.
    #[default]
    Threshold,
    /// `w(r, 0) = inf`, `w(r, i) = c(r, i - 1) - c(r, i)`.
    Derivative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    /// Polyhedron refinement level, 0..=5 (12 to 2432 rays).
    pub refinement_level: usize,
    pub nodes_per_ray: usize,
    pub max_radius_mm: f64,
    pub delta_r: usize,
    pub tau_mode: TauMode,
    pub tau_fixed: f64,
    /// Auto mode: `tau = max(tau_floor, tau_k * robust_sigma)`.
    pub tau_k: f64,
    pub tau_floor: f64,
    pub strategy: Strategy,
    /// Edge of the cube around the seed used for the average value.
    pub region_edge_mm: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            refinement_level: 4,
            nodes_per_ray: 40,
            max_radius_mm: 50.0,
            delta_r: 1,
            tau_mode: TauMode::Auto,
            tau_fixed: 30.0,
            tau_k: 3.0,
            tau_floor: 30.0,
            strategy: Strategy::Threshold,
            region_edge_mm: 10.0,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.refinement_level > 5 {
            return bad(format!(
                "refinement level {} exceeds 5",
                self.refinement_level
            ));
        }
        if self.nodes_per_ray < 2 {
            return bad(format!(
                "nodes per ray must be at least 2, got {}",
                self.nodes_per_ray
            ));
        }
        if !(self.max_radius_mm > 0.0 && self.max_radius_mm.is_finite()) {
            return bad(format!(
                "max radius must be positive, got {}",
                self.max_radius_mm
            ));
        }
        if self.tau_mode == TauMode::Fixed && !(self.tau_fixed > 0.0 && self.tau_fixed.is_finite())
        {
            return bad(format!("tau must be positive, got {}", self.tau_fixed));
        }
        if !(self.tau_k >= 0.0 && self.tau_k.is_finite()) {
            return bad(format!("tau_k must be non-negative, got {}", self.tau_k));
        }
        if !(self.tau_floor > 0.0 && self.tau_floor.is_finite()) {
            return bad(format!(
                "tau_floor must be positive, got {}",
                self.tau_floor
            ));
        }
        if !(self.region_edge_mm > 0.0 && self.region_edge_mm.is_finite()) {
            return bad(format!(
                "region edge must be positive, got {}",
                self.region_edge_mm
            ));
        }
        Ok(())
    }

    pub fn ray_count(&self) -> usize {
        crate::geometry::LEVEL_VERTEX_COUNTS[self.refinement_level.min(5)]
    }

    /// Threshold used for the given neighbourhood statistics.
    pub fn tau_for(&self, stats: &RegionStats) -> f64 {
        match self.tau_mode {
            TauMode::Fixed => self.tau_fixed,
            TauMode::Auto => self.tau_floor.max(self.tau_k * stats.robust_sigma),
        }
    }
}

/// The refined polyhedron for a level, built once per process.
pub fn polyhedron(level: usize) -> &'static Polyhedron {
    static CACHE: [OnceLock<Polyhedron>; 6] = [const { OnceLock::new() }; 6];
    CACHE[level.min(5)].get_or_init(|| Polyhedron::with_level(level.min(5)))
}

/// `|avg - value|` at every lattice node, [`OUTSIDE_COST`] outside the volume.
pub fn node_costs(volume: &Volume, lattice: &RayLattice, avg: f64) -> Vec<f64> {
    let n = lattice.nodes_per_ray();
    let mut costs = Vec::with_capacity(lattice.node_count());
    for r in 0..lattice.ray_count() {
        for i in 0..n {
            let c = match volume.sample_trilinear(lattice.position(r, i)) {
                Ok(v) => (avg - v).abs(),
                Err(_) => OUTSIDE_COST,
            };
            costs.push(c);
        }
    }
    costs
}

/// Signed terminal weights from node costs; positive leans to the object.
pub fn terminal_weights(
    costs: &[f64],
    nodes_per_ray: usize,
    tau: f64,
    strategy: Strategy,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if nodes_per_ray == 0 || costs.len() % nodes_per_ray != 0 {
        return Err(Error::InvalidParameter(
            "cost count is not a multiple of the nodes per ray".into(),
        ));
    }
    Ok(match strategy {
        Strategy::Threshold => costs.iter().map(|c| tau - c).collect(),
        Strategy::Derivative => costs
            .chunks(nodes_per_ray)
            .flat_map(|ray| {
                (0..ray.len()).map(move |i| {
                    if i == 0 {
                        INFINITE_CAPACITY
                    } else {
                        ray[i - 1] - ray[i]
                    }
                })
            })
            .collect(),
    })
}

/// Maps border seeds to node constraints. Each seed picks the ray closest
/// in direction and the node closest in distance; a later seed on the same
/// ray replaces an earlier one.
pub fn border_constraints(lattice: &RayLattice, border_seeds: &[Vec3]) -> Result<Vec<Constraint>> {
    let n = lattice.nodes_per_ray();
    let mut per_ray: BTreeMap<usize, usize> = BTreeMap::new();
    for &p in border_seeds {
        let (ray, j) = border_node(lattice, p)?;
        per_ray.insert(ray, j);
    }
    let mut out = Vec::with_capacity(2 * per_ray.len());
    for (ray, j) in per_ray {
        out.push(Constraint {
            ray,
            index: j,
            label: Label::Foreground,
        });
        if j + 1 < n {
            out.push(Constraint {
                ray,
                index: j + 1,
                label: Label::Background,
            });
        }
    }
    Ok(out)
}

/// The (ray, node) a border seed pins.
pub fn border_node(lattice: &RayLattice, p: Vec3) -> Result<(usize, usize)> {
    let d = sub(p, lattice.seed());
    let dist = norm(d);
    if !(dist > 0.0) {
        return Err(Error::ConstraintOutOfRange(
            "border seed coincides with the seed".into(),
        ));
    }
    if dist > lattice.max_radius() {
        return Err(Error::ConstraintOutOfRange(format!(
            "border seed is {dist:.3} mm from the seed, beyond the {} mm ray length",
            lattice.max_radius()
        )));
    }
    let ray = lattice.nearest_ray(scale(d, 1.0 / dist));
    let n = lattice.nodes_per_ray();
    let j = (dist / lattice.node_spacing() - 1.0).round().max(0.0) as usize;
    Ok((ray, j.min(n - 1)))
}

/// Solid mask bounded by the star-shaped surface with the given per-ray
/// radii. Voxel directions are located in the spherical triangle of the
/// polyhedron that contains them and the three ray radii are blended; a
/// lattice without faces falls back to the nearest ray's radius.
pub fn voxelize(
    cut_radii: &[f64],
    lattice: &RayLattice,
    geometry: &Geometry,
) -> Result<BinaryMask> {
    if cut_radii.len() != lattice.ray_count() {
        return Err(Error::InvalidParameter(format!(
            "expected {} radii, got {}",
            lattice.ray_count(),
            cut_radii.len()
        )));
    }
    let g = *geometry;
    let mut mask = BinaryMask::empty(g);
    let max_r = cut_radii.iter().copied().fold(0.0f64, f64::max);
    let seed = lattice.seed();
    let locator = FaceLocator::new(lattice);
    let mut hint = 0usize;

    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let l = ((seed[a] - max_r - g.origin[a]) / g.spacing[a])
            .floor()
            .max(0.0);
        let h = ((seed[a] + max_r - g.origin[a]) / g.spacing[a]).ceil();
        if h < 0.0 || l > (g.dims[a] - 1) as f64 {
            return Ok(mask);
        }
        lo[a] = l as usize;
        hi[a] = (h as usize).min(g.dims[a] - 1);
    }
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let d = sub(g.world(i, j, k), seed);
                let dist = norm(d);
                if dist > max_r {
                    continue;
                }
                let inside = if dist == 0.0 {
                    true
                } else {
                    let u = scale(d, 1.0 / dist);
                    dist <= locator.radius(u, cut_radii, &mut hint)
                };
                if inside {
                    mask.set(i, j, k, true);
                }
            }
        }
    }
    if let Some([i, j, k]) = g.nearest_voxel(seed) {
        mask.set(i, j, k, true);
    }
    Ok(mask)
}

struct FaceLocator<'a> {
    lattice: &'a RayLattice,
    faces: &'a [[usize; 3]],
    /// Per face, the dual basis rows: `dot(u, dual[f][m])` is the cone
    /// coordinate of `u` on the face's m-th vertex.
    dual: Vec<[Vec3; 3]>,
    /// Per face, the neighbour across the edge opposite vertex m.
    across: Vec<[usize; 3]>,
}

impl<'a> FaceLocator<'a> {
    fn new(lattice: &'a RayLattice) -> Self {
        let faces = lattice.faces();
        let dirs = lattice.directions();
        let mut dual = Vec::with_capacity(faces.len());
        let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (f, &[a, b, c]) in faces.iter().enumerate() {
            let (va, vb, vc) = (dirs[a], dirs[b], dirs[c]);
            let det = dot(va, cross(vb, vc));
            dual.push([
                scale(cross(vb, vc), 1.0 / det),
                scale(cross(vc, va), 1.0 / det),
                scale(cross(va, vb), 1.0 / det),
            ]);
            for (x, y) in [(a, b), (b, c), (c, a)] {
                edge_faces.entry((x.min(y), x.max(y))).or_default().push(f);
            }
        }
        let across = faces
            .iter()
            .enumerate()
            .map(|(f, &[a, b, c])| {
                let other = |x: usize, y: usize| {
                    edge_faces[&(x.min(y), x.max(y))]
                        .iter()
                        .copied()
                        .find(|&g| g != f)
                        .unwrap_or(f)
                };
                [other(b, c), other(c, a), other(a, b)]
            })
            .collect();
        FaceLocator {
            lattice,
            faces,
            dual,
            across,
        }
    }

    fn coords(&self, f: usize, u: Vec3) -> [f64; 3] {
        let d = &self.dual[f];
        [dot(u, d[0]), dot(u, d[1]), dot(u, d[2])]
    }

    fn radius(&self, u: Vec3, radii: &[f64], hint: &mut usize) -> f64 {
        if self.faces.is_empty() {
            return radii[self.lattice.nearest_ray(u)];
        }
        let f = self.locate(u, *hint);
        *hint = f;
        let [a, b, c] = self.faces[f];
        let w = self.coords(f, u).map(|x| x.max(0.0));
        let sum = w[0] + w[1] + w[2];
        if !(sum > 0.0) {
            return radii[a];
        }
        let (wb, wc) = (w[1] / sum, w[2] / sum);
        radii[a] + wb * (radii[b] - radii[a]) + wc * (radii[c] - radii[a])
    }

    fn locate(&self, u: Vec3, start: usize) -> usize {
        const EPS: f64 = -1e-12;
        let mut f = start.min(self.faces.len() - 1);
        for _ in 0..self.faces.len() {
            let w = self.coords(f, u);
            let (m, &min) = w
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(y.1))
                .expect("three coordinates");
            if min >= EPS {
                return f;
            }
            let next = self.across[f][m];
            if next == f {
                break;
            }
            f = next;
        }
        // Walk failed to converge; pick the face with the best worst coordinate.
        (0..self.faces.len())
            .max_by(|&x, &y| {
                let mx = self.coords(x, u).into_iter().fold(f64::INFINITY, f64::min);
                let my = self.coords(y, u).into_iter().fold(f64::INFINITY, f64::min);
                mx.total_cmp(&my)
            })
            .unwrap_or(0)
    }
}

/// A finished segmentation snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub seed: Vec3,
    pub cut: CutIndices,
    pub cut_radii_mm: Vec<f64>,
    pub surface: SurfaceMesh,
    pub mask: BinaryMask,
    pub stats: RegionStats,
    pub avg_used: f64,
    pub tau_used: f64,
    pub flow_value: f64,
    /// Graph build, max-flow and cut extraction.
    pub recompute_ms: f64,
    pub voxelize_ms: f64,
    /// Whole pipeline from statistics to mask.
    pub elapsed_ms: f64,
}

/// Compact, serializable description of a [`Segmentation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub seed: Vec3,
    pub ray_count: usize,
    pub k_min: isize,
    pub k_max: isize,
    pub radius_min_mm: f64,
    pub radius_max_mm: f64,
    pub radius_mean_mm: f64,
    pub voxel_count: usize,
    pub volume_mm3: f64,
    pub avg_used: f64,
    pub tau_used: f64,
    pub flow_value: f64,
    pub recompute_ms: f64,
    pub voxelize_ms: f64,
    pub elapsed_ms: f64,
}

impl Segmentation {
    pub fn summary(&self) -> SegmentationSummary {
        let radii = &self.cut_radii_mm;
        SegmentationSummary {
            seed: self.seed,
            ray_count: radii.len(),
            k_min: self.cut.k.iter().copied().min().unwrap_or(0),
            k_max: self.cut.k.iter().copied().max().unwrap_or(0),
            radius_min_mm: radii.iter().copied().fold(f64::INFINITY, f64::min),
            radius_max_mm: radii.iter().copied().fold(0.0, f64::max),
            radius_mean_mm: radii.iter().sum::<f64>() / radii.len().max(1) as f64,
            voxel_count: self.mask.count(),
            volume_mm3: self.mask.physical_volume_mm3(),
            avg_used: self.avg_used,
            tau_used: self.tau_used,
            flow_value: self.flow_value,
            recompute_ms: self.recompute_ms,
            voxelize_ms: self.voxelize_ms,
            elapsed_ms: self.elapsed_ms,
        }
    }
}

/// Runs the full pipeline for one seed and set of border seeds.
pub fn segment_volume(
    volume: &Volume,
    params: &SegmentationParams,
    seed: Vec3,
    border_seeds: &[Vec3],
) -> Result<Segmentation> {
    params.validate()?;
    let start = Instant::now();
    let geometry = *volume.geometry();
    if !geometry.contains(seed) {
        return Err(Error::OutOfBounds(seed));
    }
    if let Some(&p) = border_seeds.iter().find(|&&p| !geometry.contains(p)) {
        return Err(Error::OutOfBounds(p));
    }
    let stats = volume.region_stats(seed, params.region_edge_mm)?;
    let avg = stats.mean;
    let tau = params.tau_for(&stats);

    let lattice = RayLattice::build(
        seed,
        polyhedron(params.refinement_level),
        params.max_radius_mm,
        params.nodes_per_ray,
    )?;
    let costs = node_costs(volume, &lattice, avg);
    let weights = terminal_weights(&costs, params.nodes_per_ray, tau, params.strategy)?;
    let constraints = border_constraints(&lattice, border_seeds)?;

    let solve_start = Instant::now();
    let (cut, flow_value) = solve_lattice(&lattice, &weights, params.delta_r, &constraints)?;
    let recompute_ms = ms_since(solve_start);

    let spacing = lattice.node_spacing();
    let cut_radii_mm: Vec<f64> = cut.k.iter().map(|&k| (k + 1) as f64 * spacing).collect();
    let surface = SurfaceMesh::from_radii(&lattice, &cut_radii_mm);

    let vox_start = Instant::now();
    let mask = voxelize(&cut_radii_mm, &lattice, &geometry)?;
    let voxelize_ms = ms_since(vox_start);

    Ok(Segmentation {
        seed,
        cut,
        cut_radii_mm,
        surface,
        mask,
        stats,
        avg_used: avg,
        tau_used: tau,
        flow_value,
        recompute_ms,
        voxelize_ms,
        elapsed_ms: ms_since(start),
    })
}

/// Graph build, max-flow and cut extraction for prepared weights.
pub fn solve_lattice(
    lattice: &RayLattice,
    weights: &[f64],
    delta_r: usize,
    constraints: &[Constraint],
) -> Result<(CutIndices, f64)> {
    let graph = flowgraph::build_graph(lattice, weights, delta_r, constraints)?;
    let result = flowgraph::max_flow(&graph);
    if result.is_infeasible() {
        return Err(Error::ConstraintConflict(
            "border seeds cannot be satisfied under the smoothness bound".into(),
        ));
    }
    let cut = flowgraph::extract_cut(&result, lattice)?;
    Ok((cut, result.flow_value))
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Serializable session state: everything needed to reproduce a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub params: SegmentationParams,
    pub seed: Vec3,
    #[serde(default)]
    pub border_seeds: Vec<Vec3>,
}

/// An interactive segmentation over one volume. Mutating calls leave the
/// session unchanged when they fail.
#[derive(Debug, Clone)]
pub struct Session {
    volume: Arc<Volume>,
    params: SegmentationParams,
    seed: Vec3,
    border_seeds: Vec<Vec3>,
    stats: Option<RegionStats>,
    last_result: Option<Arc<Segmentation>>,
}

impl Session {
    pub fn new(volume: Arc<Volume>, params: SegmentationParams, seed: Vec3) -> Result<Self> {
        params.validate()?;
        if !volume.geometry().contains(seed) {
            return Err(Error::OutOfBounds(seed));
        }
        Ok(Session {
            volume,
            params,
            seed,
            border_seeds: Vec::new(),
            stats: None,
            last_result: None,
        })
    }

    pub fn from_state(volume: Arc<Volume>, state: SessionState) -> Result<Self> {
        let mut s = Session::new(volume, state.params, state.seed)?;
        s.border_seeds = state.border_seeds;
        Ok(s)
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            params: self.params.clone(),
            seed: self.seed,
            border_seeds: self.border_seeds.clone(),
        }
    }

    pub fn volume(&self) -> &Arc<Volume> {
        &self.volume
    }

    pub fn params(&self) -> &SegmentationParams {
        &self.params
    }

    pub fn seed(&self) -> Vec3 {
        self.seed
    }

    pub fn border_seeds(&self) -> &[Vec3] {
        &self.border_seeds
    }

    pub fn stats(&self) -> Option<&RegionStats> {
        self.stats.as_ref()
    }

    pub fn last_result(&self) -> Option<&Arc<Segmentation>> {
        self.last_result.as_ref()
    }

    pub fn set_params(&mut self, params: SegmentationParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        self.last_result = None;
        Ok(())
    }

    pub fn segment(&mut self) -> Result<Arc<Segmentation>> {
        let seg = Arc::new(segment_volume(
            &self.volume,
            &self.params,
            self.seed,
            &self.border_seeds,
        )?);
        self.stats = Some(seg.stats);
        self.last_result = Some(seg.clone());
        Ok(seg)
    }

    pub fn drag_seed(&mut self, new_seed: Vec3) -> Result<Arc<Segmentation>> {
        let seg = Arc::new(segment_volume(
            &self.volume,
            &self.params,
            new_seed,
            &self.border_seeds,
        )?);
        self.seed = new_seed;
        self.stats = Some(seg.stats);
        self.last_result = Some(seg.clone());
        Ok(seg)
    }

    pub fn add_border_seed(&mut self, point: Vec3) -> Result<Arc<Segmentation>> {
        if !self.volume.geometry().contains(point) {
            return Err(Error::OutOfBounds(point));
        }
        let mut seeds = self.border_seeds.clone();
        seeds.push(point);
        let seg = Arc::new(segment_volume(
            &self.volume,
            &self.params,
            self.seed,
            &seeds,
        )?);
        self.border_seeds = seeds;
        self.stats = Some(seg.stats);
        self.last_result = Some(seg.clone());
        Ok(seg)
    }

    pub fn clear_border_seeds(&mut self) {
        self.border_seeds.clear();
        self.last_result = None;
    }
}
