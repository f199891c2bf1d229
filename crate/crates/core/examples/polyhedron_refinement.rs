//! Refine the icosahedron level by level and check the counts and closure.

use nuggetcut::geometry::{Polyhedron, LEVEL_VERTEX_COUNTS};
use nuggetcut::vec3::dot;

fn main() -> nuggetcut::Result<()> {
    for level in 0..LEVEL_VERTEX_COUNTS.len() {
        let p = Polyhedron::with_level(level);
        p.validate()?;
        let edges = p.edges();
        let v = p.vertices.len() as i64;
        let euler = v - edges.len() as i64 + p.faces.len() as i64;
        let min_cos = edges
            .iter()
            .map(|&(a, b)| dot(p.vertices[a], p.vertices[b]))
            .fold(1.0, f64::min);
        println!(
            "level {level}: V {v:>5}  E {:>5}  F {:>5}  V-E+F {euler}  widest neighbour angle {:.2} deg",
            edges.len(),
            p.faces.len(),
            min_cos.acos().to_degrees()
        );
    }
    Ok(())
}
