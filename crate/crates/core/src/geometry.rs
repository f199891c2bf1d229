//! Ray templates from refined polyhedra, and the node lattice sampled along them.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::vec3::{add, cross, dot, normalize, scale, sub, Vec3};

/// Vertex counts of the refinement levels 0..=5.
pub const LEVEL_VERTEX_COUNTS: [usize; 6] = [12, 32, 92, 272, 812, 2432];

/// A closed triangulated polyhedron with all vertices on the unit sphere and
/// faces wound counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Polyhedron {
    /// Regular icosahedron from the golden-ratio coordinates
    /// `(±1, ±φ, 0)` and cyclic permutations, normalized. The vertex order
    /// is fixed and part of the public contract.
    pub fn icosahedron() -> Self {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            [-1.0, p, 0.0],
            [1.0, p, 0.0],
            [-1.0, -p, 0.0],
            [1.0, -p, 0.0],
            [0.0, -1.0, p],
            [0.0, 1.0, p],
            [0.0, -1.0, -p],
            [0.0, 1.0, -p],
            [p, 0.0, -1.0],
            [p, 0.0, 1.0],
            [-p, 0.0, -1.0],
            [-p, 0.0, 1.0],
        ];
        let faces = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        Polyhedron {
            vertices: raw.iter().map(|&v| normalize(v)).collect(),
            faces,
        }
    }

    /// Icosahedron refined `level` times.
    pub fn with_level(level: usize) -> Self {
        Polyhedron::icosahedron().refine(level)
    }

    /// Refinement level whose vertex count equals `rays`, if any.
    pub fn level_for_ray_count(rays: usize) -> Option<usize> {
        LEVEL_VERTEX_COUNTS.iter().position(|&n| n == rays)
    }

    /// Applies `levels` rounds of centroid insertion. Each round adds one
    /// vertex per face (the face centroid pushed onto the sphere), splits the
    /// face in three, and then flips every pre-existing edge so that it joins
    /// the two new centroids on either side. Counts follow V' = V + F,
    /// F' = 3F. Old vertices keep their indices; new vertices follow in face
    /// order.
    pub fn refine(&self, levels: usize) -> Self {
        let mut current = self.clone();
        for _ in 0..levels {
            current = current.refine_once();
        }
        current
    }

    fn refine_once(&self) -> Self {
        let base = self.vertices.len();
        let mut vertices = self.vertices.clone();
        // Directed edge (a, b) -> centroid of the face on its left.
        let mut left_of: HashMap<(usize, usize), usize> =
            HashMap::with_capacity(self.faces.len() * 3);
        for (f, &[a, b, c]) in self.faces.iter().enumerate() {
            let m = add(add(self.vertices[a], self.vertices[b]), self.vertices[c]);
            vertices.push(normalize(m));
            let centroid = base + f;
            left_of.insert((a, b), centroid);
            left_of.insert((b, c), centroid);
            left_of.insert((c, a), centroid);
        }
        let mut faces = Vec::with_capacity(self.faces.len() * 3);
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                if u < v {
                    let m1 = left_of[&(u, v)];
                    let m2 = left_of[&(v, u)];
                    faces.push([m1, u, m2]);
                    faces.push([m2, v, m1]);
                }
            }
        }
        Polyhedron { vertices, faces }
    }

    /// Undirected edges as sorted index pairs, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                set.insert((u.min(v), u.max(v)));
            }
        }
        set.into_iter().collect()
    }

    /// Checks unit norms, closedness (every edge in exactly two faces with
    /// opposite orientation), outward winding and the Euler characteristic.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            if (dot(*v, *v).sqrt() - 1.0).abs() > 1e-12 {
                return Err(Error::Geometry(format!("vertex {i} is not unit length")));
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (f, &[a, b, c]) in self.faces.iter().enumerate() {
            if [a, b, c].iter().any(|&x| x >= self.vertices.len()) || a == b || b == c || a == c {
                return Err(Error::Geometry(format!("face {f} is malformed")));
            }
            let (va, vb, vc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            if dot(cross(sub(vb, va), sub(vc, va)), va) <= 0.0 {
                return Err(Error::Geometry(format!("face {f} is not wound outward")));
            }
            for e in [(a, b), (b, c), (c, a)] {
                if directed.insert(e, f).is_some() {
                    return Err(Error::Geometry(format!("directed edge {e:?} repeated")));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                return Err(Error::Geometry(format!(
                    "edge ({a}, {b}) is on the boundary"
                )));
            }
        }
        let (v, e, f) = (
            self.vertices.len() as i64,
            (directed.len() / 2) as i64,
            self.faces.len() as i64,
        );
        if v - e + f != 2 {
            return Err(Error::Geometry(format!(
                "Euler characteristic {} != 2",
                v - e + f
            )));
        }
        Ok(())
    }
}

/// The edge set of the polyhedron, read as pairs of adjacent rays.
pub fn ray_adjacency(polyhedron: &Polyhedron) -> Vec<(usize, usize)> {
    polyhedron.edges()
}

/// Rays from a seed through unit directions, with `nodes_per_ray` nodes on
/// each ray at distances `(i + 1) * max_radius / nodes_per_ray`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayLattice {
    seed: Vec3,
    directions: Vec<Vec3>,
    adjacency: Vec<(usize, usize)>,
    /// Polyhedron faces over ray indices; empty for hand-built lattices.
    faces: Vec<[usize; 3]>,
    nodes_per_ray: usize,
    max_radius: f64,
}

impl RayLattice {
    pub fn build(
        seed: Vec3,
        polyhedron: &Polyhedron,
        max_radius_mm: f64,
        nodes_per_ray: usize,
    ) -> Result<Self> {
        let mut lattice = RayLattice::from_parts(
            seed,
            polyhedron.vertices.clone(),
            ray_adjacency(polyhedron),
            max_radius_mm,
            nodes_per_ray,
        )?;
        lattice.faces = polyhedron.faces.clone();
        Ok(lattice)
    }

    /// A lattice with arbitrary directions and ray adjacency (no faces).
    pub fn from_parts(
        seed: Vec3,
        directions: Vec<Vec3>,
        adjacency: Vec<(usize, usize)>,
        max_radius_mm: f64,
        nodes_per_ray: usize,
    ) -> Result<Self> {
        if !(max_radius_mm > 0.0) || !max_radius_mm.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "max radius must be positive, got {max_radius_mm}"
            )));
        }
        if nodes_per_ray < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 nodes per ray, got {nodes_per_ray}"
            )));
        }
        let mut adj = BTreeSet::new();
        for &(a, b) in &adjacency {
            if a == b || a >= directions.len() || b >= directions.len() {
                return Err(Error::InvalidParameter(format!("bad ray pair ({a}, {b})")));
            }
            adj.insert((a.min(b), a.max(b)));
        }
        Ok(RayLattice {
            seed,
            directions,
            adjacency: adj.into_iter().collect(),
            faces: Vec::new(),
            nodes_per_ray,
            max_radius: max_radius_mm,
        })
    }

    pub fn seed(&self) -> Vec3 {
        self.seed
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn adjacency(&self) -> &[(usize, usize)] {
        &self.adjacency
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn ray_count(&self) -> usize {
        self.directions.len()
    }

    pub fn nodes_per_ray(&self) -> usize {
        self.nodes_per_ray
    }

    pub fn node_count(&self) -> usize {
        self.directions.len() * self.nodes_per_ray
    }

    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    /// Distance between consecutive nodes on a ray (mm).
    pub fn node_spacing(&self) -> f64 {
        self.max_radius / self.nodes_per_ray as f64
    }

    /// Distance of node `i` from the seed.
    pub fn node_radius(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.max_radius / self.nodes_per_ray as f64
    }

    #[inline]
    pub fn node_index(&self, ray: usize, i: usize) -> usize {
        ray * self.nodes_per_ray + i
    }

    pub fn position(&self, ray: usize, i: usize) -> Vec3 {
        add(self.seed, scale(self.directions[ray], self.node_radius(i)))
    }

    /// Ray whose direction is closest to `dir` (largest dot product; ties go
    /// to the lower index).
    pub fn nearest_ray(&self, dir: Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (r, d) in self.directions.iter().enumerate() {
            let v = dot(*d, dir);
            if v > best_dot {
                best_dot = v;
                best = r;
            }
        }
        best
    }

    /// Neighbour lists per ray.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.ray_count()];
        for &(a, b) in &self.adjacency {
            out[a].push(b);
            out[b].push(a);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_counts() {
        let p = Polyhedron::icosahedron();
        p.validate().unwrap();
        assert_eq!(p.vertices.len(), 12);
        assert_eq!(p.faces.len(), 20);
        assert_eq!(p.edges().len(), 30);
    }

    #[test]
    fn refinement_sequence() {
        let mut p = Polyhedron::icosahedron();
        for (level, &v) in LEVEL_VERTEX_COUNTS.iter().enumerate() {
            if level > 0 {
                let prev = p.clone();
                p = p.refine(1);
                assert_eq!(p.vertices.len(), prev.vertices.len() + prev.faces.len());
                assert_eq!(p.faces.len(), 3 * prev.faces.len());
                // Old vertices keep their positions and indices.
                assert_eq!(&p.vertices[..prev.vertices.len()], &prev.vertices[..]);
            }
            assert_eq!(p.vertices.len(), v, "level {level}");
            p.validate().unwrap();
        }
        assert_eq!(Polyhedron::with_level(1).faces.len(), 60);
        assert_eq!(Polyhedron::with_level(4).vertices.len(), 812);
    }

    #[test]
    fn refined_directions_are_distinct() {
        let p = Polyhedron::with_level(5);
        let mut min_angle = f64::INFINITY;
        for (a, b) in p.edges() {
            let c = dot(p.vertices[a], p.vertices[b]).clamp(-1.0, 1.0);
            min_angle = min_angle.min(c.acos());
        }
        assert!(min_angle > 1e-3, "{min_angle}");
        // Any duplicate direction would also show up as a non-edge pair.
        let mut sorted: Vec<_> = p
            .vertices
            .iter()
            .map(|v| v.map(|x| (x * 1e9).round() as i64))
            .collect();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 2432);
    }

    #[test]
    fn adjacency_counts() {
        let ico = Polyhedron::icosahedron();
        let adj = ray_adjacency(&ico);
        assert_eq!(adj.len(), 30);
        let lattice = RayLattice::build([0.0; 3], &ico, 10.0, 4).unwrap();
        assert!(lattice.neighbours().iter().all(|n| n.len() == 5));
        assert_eq!(ray_adjacency(&Polyhedron::with_level(1)).len(), 90);
        for (a, b) in adj {
            assert!(a < b);
        }
    }

    #[test]
    fn lattice_node_positions() {
        let p = Polyhedron::with_level(4);
        let seed = [3.0, -2.0, 7.5];
        let l = RayLattice::build(seed, &p, 50.0, 40).unwrap();
        assert_eq!(l.node_count(), 32_480);
        assert_eq!(l.node_spacing(), 1.25);
        for r in [0, 17, 811] {
            let outer = l.position(r, 39);
            let d = crate::vec3::norm(crate::vec3::sub(outer, seed));
            assert!((d - 50.0).abs() < 1e-12);
        }
        let l = RayLattice::build([0.0; 3], &p, 2.0, 2).unwrap();
        assert_eq!(l.node_radius(0), 1.0);
        assert_eq!(l.node_radius(1), 2.0);
    }

    #[test]
    fn lattice_translates_with_seed() {
        let p = Polyhedron::with_level(2);
        let a = RayLattice::build([0.0; 3], &p, 10.0, 5).unwrap();
        let b = RayLattice::build([1.0, 2.0, 3.0], &p, 10.0, 5).unwrap();
        assert_eq!(a.directions(), b.directions());
        for r in 0..a.ray_count() {
            for i in 0..5 {
                let (pa, pb) = (a.position(r, i), b.position(r, i));
                assert!((pb[0] - pa[0] - 1.0).abs() < 1e-12);
                assert!((pb[2] - pa[2] - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_lattice_parameters() {
        let p = Polyhedron::icosahedron();
        assert!(RayLattice::build([0.0; 3], &p, 0.0, 10).is_err());
        assert!(RayLattice::build([0.0; 3], &p, 10.0, 1).is_err());
        assert!(
            RayLattice::from_parts([0.0; 3], vec![[1.0, 0.0, 0.0]], vec![(0, 0)], 1.0, 2).is_err()
        );
    }
}
