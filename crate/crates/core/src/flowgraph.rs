//! The capacitated s–t graph over a ray lattice, its minimum cut, and the
//! per-ray cut indices read back from it.
//!
//! Arc layout for a lattice with `n` nodes per ray:
//!
//! * intra: `(r, i) -> (r, i - 1)` with infinite capacity, so a source-side
//!   node drags every inner node of its ray along (closed set);
//! * inter: for each adjacent ray pair, both orientations,
//!   `(r, i) -> (q, max(i - Δr, 0))` with infinite capacity, so cut indices
//!   of neighbouring rays differ by at most Δr;
//! * terminal: a positive weight `w` becomes `s -> v` with capacity `w`, a
//!   negative one `v -> t` with capacity `-w`, zero adds nothing;
//! * constraints replace the terminal arc with an infinite one, and the
//!   innermost node of every ray is always forced to the source.
//!
//! With this layout the cut capacity of index vector `k` is
//! `Σ_r Σ_{i > k_r} max(w, 0) + Σ_r Σ_{i <= k_r} max(-w, 0)`.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RayLattice;
use crate::maxflow::Solver;

/// Stand-in for infinite capacity: `f64::MAX / 2^32`. Summing it over more
/// than four billion arcs still stays finite.
pub const INFINITE_CAPACITY: f64 = f64::MAX / 4_294_967_296.0;

/// Flow values at or above this bound mean an infinite-capacity path joined
/// source and sink, i.e. the constraints are unsatisfiable.
pub const INFEASIBLE_FLOW: f64 = INFINITE_CAPACITY / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

/// Directed capacitated graph with implicit source and sink.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    node_count: usize,
    arcs: Vec<FlowArc>,
    source_caps: Vec<f64>,
    sink_caps: Vec<f64>,
}

impl FlowGraph {
    pub fn new(node_count: usize) -> Self {
        FlowGraph {
            node_count,
            arcs: Vec::new(),
            source_caps: vec![0.0; node_count],
            sink_caps: vec![0.0; node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn arcs(&self) -> &[FlowArc] {
        &self.arcs
    }

    pub fn source_caps(&self) -> &[f64] {
        &self.source_caps
    }

    pub fn sink_caps(&self) -> &[f64] {
        &self.sink_caps
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) -> Result<()> {
        if from >= self.node_count || to >= self.node_count {
            return Err(Error::InvalidParameter(format!(
                "arc ({from}, {to}) references a node outside 0..{}",
                self.node_count
            )));
        }
        if !(capacity >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "arc ({from}, {to}) has negative capacity {capacity}"
            )));
        }
        if from != to {
            self.arcs.push(FlowArc { from, to, capacity });
        }
        Ok(())
    }

    pub fn set_source_cap(&mut self, node: usize, capacity: f64) {
        self.source_caps[node] = capacity;
    }

    pub fn set_sink_cap(&mut self, node: usize, capacity: f64) {
        self.sink_caps[node] = capacity;
    }

    pub fn terminal_arc_count(&self) -> usize {
        self.source_caps.iter().filter(|&&c| c > 0.0).count()
            + self.sink_caps.iter().filter(|&&c| c > 0.0).count()
    }

    /// Total capacity of arcs leaving the source side of a partition.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        let mut total = 0.0;
        for v in 0..self.node_count {
            if source_side[v] {
                total += self.sink_caps[v];
            } else {
                total += self.source_caps[v];
            }
        }
        for arc in &self.arcs {
            if source_side[arc.from] && !source_side[arc.to] {
                total += arc.capacity;
            }
        }
        total
    }

    /// Line-oriented dump: `s <v> <cap>`, `<v> t <cap>`, `<u> <v> <cap>`,
    /// terminal lines first in node order, then arcs in insertion order.
    /// Infinite capacities print as `inf`.
    pub fn dump(&self, out: &mut impl io::Write) -> io::Result<()> {
        out.write_all(self.dump_string().as_bytes())
    }

    pub fn dump_string(&self) -> String {
        fn cap(c: f64) -> String {
            if c >= INFINITE_CAPACITY {
                "inf".to_string()
            } else {
                format!("{c}")
            }
        }
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.node_count);
        for v in 0..self.node_count {
            if self.source_caps[v] > 0.0 {
                let _ = writeln!(s, "s {v} {}", cap(self.source_caps[v]));
            }
            if self.sink_caps[v] > 0.0 {
                let _ = writeln!(s, "{v} t {}", cap(self.sink_caps[v]));
            }
        }
        for a in &self.arcs {
            let _ = writeln!(s, "{} {} {}", a.from, a.to, cap(a.capacity));
        }
        s
    }
}

/// Result of a max-flow computation.
#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub flow_value: f64,
    /// True for nodes reachable from the source in the final residual graph.
    pub source_side: Vec<bool>,
}

impl CutResult {
    /// Whether an infinite-capacity s–t path was found.
    pub fn is_infeasible(&self) -> bool {
        self.flow_value >= INFEASIBLE_FLOW
    }
}

/// Maximum s–t flow and the source side of a minimum cut.
pub fn max_flow(graph: &FlowGraph) -> CutResult {
    let mut solver = Solver::new(graph.node_count, graph.arcs.len());
    for v in 0..graph.node_count {
        let (s, t) = (graph.source_caps[v], graph.sink_caps[v]);
        if s > 0.0 || t > 0.0 {
            solver.add_terminal(v, s, t);
        }
    }
    for a in &graph.arcs {
        solver.add_edge(a.from, a.to, a.capacity, 0.0);
    }
    let flow_value = solver.solve();
    CutResult {
        flow_value,
        source_side: solver.source_reachable(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Foreground,
    Background,
}

/// A node forced to one side of the cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub ray: usize,
    pub index: usize,
    pub label: Label,
}

/// Builds the lattice graph from signed terminal weights (one per node,
/// indexed `ray * n + i`), the smoothness bound and forced labels.
pub fn build_graph(
    lattice: &RayLattice,
    tlinks: &[f64],
    delta_r: usize,
    constraints: &[Constraint],
) -> Result<FlowGraph> {
    let n = lattice.nodes_per_ray();
    let rays = lattice.ray_count();
    let total = lattice.node_count();
    if tlinks.len() != total {
        return Err(Error::InvalidParameter(format!(
            "expected {total} terminal weights, got {}",
            tlinks.len()
        )));
    }

    let mut forced: Vec<Option<Label>> = vec![None; total];
    for c in constraints {
        if c.ray >= rays || c.index >= n {
            return Err(Error::InvalidParameter(format!(
                "constraint on node ({}, {}) outside the lattice",
                c.ray, c.index
            )));
        }
        let slot = &mut forced[lattice.node_index(c.ray, c.index)];
        match *slot {
            Some(existing) if existing != c.label => {
                return Err(Error::ConstraintConflict(format!(
                    "node ({}, {}) forced to both foreground and background",
                    c.ray, c.index
                )))
            }
            _ => *slot = Some(c.label),
        }
    }
    for r in 0..rays {
        let slot = &mut forced[lattice.node_index(r, 0)];
        if *slot == Some(Label::Background) {
            return Err(Error::ConstraintConflict(format!(
                "innermost node of ray {r} cannot be background"
            )));
        }
        *slot = Some(Label::Foreground);
    }

    let mut g = FlowGraph::new(total);
    g.arcs
        .reserve(rays * (n - 1) + 2 * lattice.adjacency().len() * n);
    for r in 0..rays {
        for i in 1..n {
            g.add_arc(
                lattice.node_index(r, i),
                lattice.node_index(r, i - 1),
                INFINITE_CAPACITY,
            )?;
        }
    }
    for &(r, q) in lattice.adjacency() {
        for (a, b) in [(r, q), (q, r)] {
            for i in 0..n {
                let j = i.saturating_sub(delta_r);
                g.add_arc(
                    lattice.node_index(a, i),
                    lattice.node_index(b, j),
                    INFINITE_CAPACITY,
                )?;
            }
        }
    }
    for (v, (&w, label)) in tlinks.iter().zip(&forced).enumerate() {
        match label {
            Some(Label::Foreground) => g.set_source_cap(v, INFINITE_CAPACITY),
            Some(Label::Background) => g.set_sink_cap(v, INFINITE_CAPACITY),
            None if w > 0.0 => g.set_source_cap(v, w.min(INFINITE_CAPACITY)),
            None if w < 0.0 => g.set_sink_cap(v, (-w).min(INFINITE_CAPACITY)),
            None => {}
        }
    }
    Ok(g)
}

/// Outermost source-side node per ray; `-1` when even the innermost node is
/// on the sink side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutIndices {
    pub k: Vec<isize>,
}

impl CutIndices {
    /// Largest |k_r - k_q| over adjacent rays.
    pub fn max_neighbour_step(&self, lattice: &RayLattice) -> usize {
        lattice
            .adjacency()
            .iter()
            .map(|&(a, b)| self.k[a].abs_diff(self.k[b]))
            .max()
            .unwrap_or(0)
    }
}

/// Reads per-ray cut indices from a cut and checks that each ray's source
/// side is a contiguous inner run.
pub fn extract_cut(result: &CutResult, lattice: &RayLattice) -> Result<CutIndices> {
    let n = lattice.nodes_per_ray();
    if result.source_side.len() != lattice.node_count() {
        return Err(Error::InvalidParameter(
            "cut result does not match the lattice".into(),
        ));
    }
    let mut k = Vec::with_capacity(lattice.ray_count());
    for r in 0..lattice.ray_count() {
        let side = &result.source_side[r * n..(r + 1) * n];
        let kr = side.iter().rposition(|&s| s).map_or(-1, |i| i as isize);
        if side[..(kr + 1) as usize].iter().any(|&s| !s) {
            return Err(Error::Internal(format!(
                "ray {r} source side is not a contiguous inner run"
            )));
        }
        k.push(kr);
    }
    Ok(CutIndices { k })
}

/// Cut energy of index vector `k` under signed weights, skipping nodes whose
/// weight is infinite on the side they sit on (never the case for feasible
/// vectors).
pub fn cut_energy(tlinks: &[f64], nodes_per_ray: usize, k: &[isize]) -> f64 {
    let mut e = 0.0;
    for (r, &kr) in k.iter().enumerate() {
        for i in 0..nodes_per_ray {
            let w = tlinks[r * nodes_per_ray + i];
            if (i as isize) <= kr {
                e += (-w).max(0.0);
            } else {
                e += w.max(0.0);
            }
        }
    }
    e
}
