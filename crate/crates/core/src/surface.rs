//! Closed triangle surface of a segmentation and its planar cross-sections.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::geometry::RayLattice;
use crate::vec3::{add, scale, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

/// Coordinate axis normal to a slicing plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    /// Constant z.
    Axial,
    /// Constant y.
    Coronal,
    /// Constant x.
    Sagittal,
}

impl Plane {
    pub fn normal_axis(self) -> usize {
        match self {
            Plane::Sagittal => 0,
            Plane::Coronal => 1,
            Plane::Axial => 2,
        }
    }

    /// The two in-plane axes, as (column, row).
    pub fn in_plane_axes(self) -> (usize, usize) {
        match self {
            Plane::Sagittal => (1, 2),
            Plane::Coronal => (0, 2),
            Plane::Axial => (0, 1),
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "axial" => Ok(Plane::Axial),
            "coronal" => Ok(Plane::Coronal),
            "sagittal" => Ok(Plane::Sagittal),
            other => Err(format!("unknown plane `{other}`")),
        }
    }
}

/// A polyline in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<Vec3>,
    pub closed: bool,
}

impl SurfaceMesh {
    /// One vertex per ray at `seed + dir * radius`, faces taken from the
    /// lattice polyhedron.
    pub fn from_radii(lattice: &RayLattice, radii: &[f64]) -> Self {
        let vertices = lattice
            .directions()
            .iter()
            .zip(radii)
            .map(|(&d, &r)| add(lattice.seed(), scale(d, r)))
            .collect();
        SurfaceMesh {
            vertices,
            faces: lattice.faces().to_vec(),
        }
    }

    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::BTreeSet::new();
        for &[a, b, c] in &self.faces {
            for (x, y) in [(a, b), (b, c), (c, a)] {
                edges.insert((x.min(y), x.max(y)));
            }
        }
        edges.len()
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.faces.len() as i64
    }

    /// ASCII OBJ with 1-based face indices.
    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(40 * (self.vertices.len() + self.faces.len()));
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.6} {:.6} {:.6}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, out: &mut impl io::Write) -> io::Result<()> {
        out.write_all(self.to_obj().as_bytes())
    }

    /// Intersection of the surface with the plane `x[axis] = value`.
    ///
    /// Vertices exactly on the plane count as lying above it, so every
    /// crossing happens strictly inside an edge and, on a closed mesh, the
    /// pieces chain into closed loops.
    pub fn slice(&self, plane: Plane, value: f64) -> Vec<Contour> {
        let axis = plane.normal_axis();
        let above: Vec<bool> = self.vertices.iter().map(|v| v[axis] >= value).collect();
        let crossing = |a: usize, b: usize| -> Vec3 {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let t = (value - pa[axis]) / (pb[axis] - pa[axis]);
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = pa[k] + t * (pb[k] - pa[k]);
            }
            p[axis] = value;
            p
        };

        // Each crossing edge is a graph node; each cut face links two.
        let mut links: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for &[a, b, c] in &self.faces {
            let cut: Vec<(usize, usize)> = [(a, b), (b, c), (c, a)]
                .into_iter()
                .filter(|&(x, y)| above[x] != above[y])
                .map(|(x, y)| (x.min(y), x.max(y)))
                .collect();
            if let [e0, e1] = cut[..] {
                links.entry(e0).or_default().push(e1);
                links.entry(e1).or_default().push(e0);
            }
        }

        let mut points: HashMap<(usize, usize), Vec3> = HashMap::new();
        let mut visited: BTreeMap<(usize, usize), bool> =
            links.keys().map(|&k| (k, false)).collect();
        let mut out = Vec::new();
        for &start in links.keys() {
            if visited[&start] {
                continue;
            }
            let mut chain = vec![start];
            visited.insert(start, true);
            let mut cur = start;
            let closed;
            loop {
                let next = links[&cur].iter().copied().find(|e| !visited[e]);
                match next {
                    Some(e) => {
                        visited.insert(e, true);
                        chain.push(e);
                        cur = e;
                    }
                    None => {
                        closed = chain.len() > 2 && links[&cur].contains(&start);
                        break;
                    }
                }
            }
            let pts = chain
                .iter()
                .map(|&(a, b)| *points.entry((a, b)).or_insert_with(|| crossing(a, b)))
                .collect();
            out.push(Contour {
                points: pts,
                closed,
            });
        }
        out
    }
}
