//! Interactive 3D segmentation of round objects in CT-like volumes with a
//! radial graph cut.
//!
//! A seed point spawns rays toward the vertices of a refined icosahedron.
//! Nodes sampled along those rays form a graph whose minimum s–t cut picks,
//! for every ray, how far the object extends; a smoothness bound limits how
//! much that extent may change between neighbouring rays.

pub mod error;
pub mod evalstat;
pub mod flowgraph;
pub mod geometry;
pub mod maxflow;
pub mod metaimage;
pub mod phantom;
pub mod segmenter;
pub mod surface;
pub mod vec3;
pub mod volume;

pub use error::{Error, Result};
pub use flowgraph::{
    build_graph, extract_cut, max_flow, Constraint, CutIndices, CutResult, FlowGraph, Label,
};
pub use geometry::{Polyhedron, RayLattice};
pub use phantom::{make_phantom, NeedleSpec, PhantomSpec};
pub use segmenter::{Segmentation, SegmentationParams, Session, Strategy, TauMode};
pub use surface::SurfaceMesh;
pub use volume::{BinaryMask, Geometry, RegionStats, Volume};
