//! Dual search tree augmenting-path max-flow.
//!
//! Two trees grow from the source and the sink over non-saturated residual
//! arcs. When they touch, flow is pushed along the joined path; nodes whose
//! parent arc saturated become orphans and are either re-adopted inside
//! their tree or released as free nodes. Ties are broken by arc insertion
//! order and FIFO processing of active nodes, so results are reproducible.
//!
//! Arcs are stored in pairs: arc `a` and its reverse `a ^ 1`.

use std::collections::VecDeque;

const NO_ARC: usize = usize::MAX;
const INFINITE_DIST: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parent {
    None,
    Terminal,
    Orphan,
    /// Arc from this node towards its parent.
    Arc(usize),
}

/// Residual network for one max-flow computation.
#[derive(Debug, Clone)]
pub struct Solver {
    // per node
    first: Vec<usize>,
    parent: Vec<Parent>,
    in_sink_tree: Vec<bool>,
    /// Positive: residual capacity from the source; negative: to the sink.
    terminal: Vec<f64>,
    timestamp: Vec<u64>,
    dist: Vec<usize>,
    queued: Vec<bool>,
    // per arc
    head: Vec<usize>,
    next: Vec<usize>,
    residual: Vec<f64>,

    flow: f64,
    time: u64,
    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
}

impl Solver {
    pub fn new(node_count: usize, arc_hint: usize) -> Self {
        Solver {
            first: vec![NO_ARC; node_count],
            parent: vec![Parent::None; node_count],
            in_sink_tree: vec![false; node_count],
            terminal: vec![0.0; node_count],
            timestamp: vec![0; node_count],
            dist: vec![0; node_count],
            queued: vec![false; node_count],
            head: Vec::with_capacity(2 * arc_hint),
            next: Vec::with_capacity(2 * arc_hint),
            residual: Vec::with_capacity(2 * arc_hint),
            flow: 0.0,
            time: 0,
            active: VecDeque::new(),
            orphans: VecDeque::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.first.len()
    }

    /// Adds the arc pair `from -> to` (capacity `cap`) and `to -> from`
    /// (capacity `rev_cap`).
    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64, rev_cap: f64) {
        debug_assert!(from != to);
        let a = self.head.len();
        self.head.push(to);
        self.next.push(self.first[from]);
        self.residual.push(cap);
        self.first[from] = a;

        self.head.push(from);
        self.next.push(self.first[to]);
        self.residual.push(rev_cap);
        self.first[to] = a + 1;
    }

    /// Adds terminal capacities `source -> node` and `node -> sink`.
    pub fn add_terminal(&mut self, node: usize, source_cap: f64, sink_cap: f64) {
        let delta = self.terminal[node];
        let (mut s, mut t) = (source_cap, sink_cap);
        if delta > 0.0 {
            s += delta;
        } else {
            t -= delta;
        }
        self.flow += s.min(t);
        self.terminal[node] = s - t;
    }

    /// Runs the computation and returns the maximum flow value.
    pub fn solve(&mut self) -> f64 {
        self.init_trees();
        let mut current: Option<usize> = None;
        loop {
            let i = match current.take().filter(|&i| self.parent[i] != Parent::None) {
                Some(i) => i,
                None => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            let bridge = self.grow(i);
            self.time += 1;
            if let Some(a) = bridge {
                current = Some(i);
                self.augment(a);
                self.adopt_orphans();
            }
        }
        self.flow
    }

    fn init_trees(&mut self) {
        for i in 0..self.node_count() {
            self.timestamp[i] = 0;
            if self.terminal[i] > 0.0 {
                self.in_sink_tree[i] = false;
                self.parent[i] = Parent::Terminal;
                self.dist[i] = 1;
                self.set_active(i);
            } else if self.terminal[i] < 0.0 {
                self.in_sink_tree[i] = true;
                self.parent[i] = Parent::Terminal;
                self.dist[i] = 1;
                self.set_active(i);
            } else {
                self.parent[i] = Parent::None;
            }
        }
    }

    fn set_active(&mut self, i: usize) {
        if !self.queued[i] {
            self.queued[i] = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            self.queued[i] = false;
            if self.parent[i] != Parent::None {
                return Some(i);
            }
        }
        None
    }

    /// Expands the tree containing `i` by one layer of neighbours. Returns the
    /// source-to-sink arc joining the two trees when one is found.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let sink_side = self.in_sink_tree[i];
        let mut a = self.first[i];
        while a != NO_ARC {
            // Residual capacity in the direction flow would travel.
            let cap = if sink_side {
                self.residual[a ^ 1]
            } else {
                self.residual[a]
            };
            if cap > 0.0 {
                let j = self.head[a];
                match self.parent[j] {
                    Parent::None => {
                        self.in_sink_tree[j] = sink_side;
                        self.parent[j] = Parent::Arc(a ^ 1);
                        self.timestamp[j] = self.timestamp[i];
                        self.dist[j] = self.dist[i] + 1;
                        self.set_active(j);
                    }
                    _ if self.in_sink_tree[j] != sink_side => {
                        return Some(if sink_side { a ^ 1 } else { a });
                    }
                    _ => {
                        if self.timestamp[j] <= self.timestamp[i] && self.dist[j] > self.dist[i] {
                            self.parent[j] = Parent::Arc(a ^ 1);
                            self.timestamp[j] = self.timestamp[i];
                            self.dist[j] = self.dist[i] + 1;
                        }
                    }
                }
            }
            a = self.next[a];
        }
        None
    }

    fn make_orphan(&mut self, i: usize) {
        self.parent[i] = Parent::Orphan;
        self.orphans.push_back(i);
    }

    /// Pushes the bottleneck amount along source-tree path, `bridge`, and
    /// sink-tree path.
    fn augment(&mut self, bridge: usize) {
        let mut bottleneck = self.residual[bridge];

        let mut i = self.head[bridge ^ 1];
        loop {
            match self.parent[i] {
                Parent::Arc(pa) => {
                    bottleneck = bottleneck.min(self.residual[pa ^ 1]);
                    i = self.head[pa];
                }
                _ => {
                    bottleneck = bottleneck.min(self.terminal[i]);
                    break;
                }
            }
        }
        let mut j = self.head[bridge];
        loop {
            match self.parent[j] {
                Parent::Arc(pa) => {
                    bottleneck = bottleneck.min(self.residual[pa]);
                    j = self.head[pa];
                }
                _ => {
                    bottleneck = bottleneck.min(-self.terminal[j]);
                    break;
                }
            }
        }

        self.residual[bridge ^ 1] += bottleneck;
        self.residual[bridge] -= bottleneck;

        let mut i = self.head[bridge ^ 1];
        loop {
            match self.parent[i] {
                Parent::Arc(pa) => {
                    self.residual[pa] += bottleneck;
                    self.residual[pa ^ 1] -= bottleneck;
                    let next = self.head[pa];
                    if self.residual[pa ^ 1] == 0.0 {
                        self.make_orphan(i);
                    }
                    i = next;
                }
                _ => {
                    self.terminal[i] -= bottleneck;
                    if self.terminal[i] == 0.0 {
                        self.make_orphan(i);
                    }
                    break;
                }
            }
        }
        let mut j = self.head[bridge];
        loop {
            match self.parent[j] {
                Parent::Arc(pa) => {
                    self.residual[pa ^ 1] += bottleneck;
                    self.residual[pa] -= bottleneck;
                    let next = self.head[pa];
                    if self.residual[pa] == 0.0 {
                        self.make_orphan(j);
                    }
                    j = next;
                }
                _ => {
                    self.terminal[j] += bottleneck;
                    if self.terminal[j] == 0.0 {
                        self.make_orphan(j);
                    }
                    break;
                }
            }
        }

        self.flow += bottleneck;
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.process_orphan(i);
        }
    }

    /// Length of the valid path from `j` to its terminal, or `None` when the
    /// path runs into an orphan. Caches distances with the current timestamp.
    fn origin_distance(&mut self, j: usize) -> Option<usize> {
        let mut d = 0usize;
        let mut k = j;
        loop {
            if self.timestamp[k] == self.time {
                d += self.dist[k];
                break;
            }
            d += 1;
            match self.parent[k] {
                Parent::Terminal => {
                    self.timestamp[k] = self.time;
                    self.dist[k] = 1;
                    break;
                }
                Parent::Orphan | Parent::None => return None,
                Parent::Arc(pa) => k = self.head[pa],
            }
        }
        // Stamp the path so later walks stop early.
        let mut k = j;
        let mut dk = d;
        while self.timestamp[k] != self.time {
            self.timestamp[k] = self.time;
            self.dist[k] = dk;
            dk -= 1;
            match self.parent[k] {
                Parent::Arc(pa) => k = self.head[pa],
                _ => break,
            }
        }
        Some(d)
    }

    fn process_orphan(&mut self, i: usize) {
        let sink_side = self.in_sink_tree[i];
        let mut best_arc = NO_ARC;
        let mut best_dist = INFINITE_DIST;

        let mut a = self.first[i];
        while a != NO_ARC {
            // Candidate parent j must be able to send flow along the tree
            // direction: j -> i in the source tree, i -> j in the sink tree.
            let cap = if sink_side {
                self.residual[a]
            } else {
                self.residual[a ^ 1]
            };
            let j = self.head[a];
            if cap > 0.0 && self.in_sink_tree[j] == sink_side && self.parent[j] != Parent::None {
                if let Some(d) = self.origin_distance(j) {
                    if d < best_dist {
                        best_dist = d;
                        best_arc = a;
                    }
                }
            }
            a = self.next[a];
        }

        if best_arc != NO_ARC {
            self.parent[i] = Parent::Arc(best_arc);
            self.timestamp[i] = self.time;
            self.dist[i] = best_dist + 1;
            return;
        }

        self.parent[i] = Parent::None;
        let mut a = self.first[i];
        while a != NO_ARC {
            let j = self.head[a];
            if self.in_sink_tree[j] == sink_side && self.parent[j] != Parent::None {
                let cap = if sink_side {
                    self.residual[a]
                } else {
                    self.residual[a ^ 1]
                };
                if cap > 0.0 {
                    self.set_active(j);
                }
                if let Parent::Arc(pa) = self.parent[j] {
                    if self.head[pa] == i {
                        self.make_orphan(j);
                    }
                }
            }
            a = self.next[a];
        }
    }

    /// Nodes reachable from the source through arcs with positive residual
    /// capacity in the final residual network.
    pub fn source_reachable(&self) -> Vec<bool> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| self.terminal[i] > 0.0).collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(i) = queue.pop_front() {
            let mut a = self.first[i];
            while a != NO_ARC {
                let j = self.head[a];
                if !seen[j] && self.residual[a] > 0.0 {
                    seen[j] = true;
                    queue.push_back(j);
                }
                a = self.next[a];
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottleneck_single_node() {
        let mut s = Solver::new(1, 0);
        s.add_terminal(0, 5.0, 3.0);
        assert_eq!(s.solve(), 3.0);
        assert_eq!(s.source_reachable(), vec![true]);
    }

    #[test]
    fn path_bottleneck() {
        let mut s = Solver::new(2, 1);
        s.add_terminal(0, 3.0, 0.0);
        s.add_edge(0, 1, 2.0, 0.0);
        s.add_terminal(1, 0.0, 4.0);
        assert_eq!(s.solve(), 2.0);
        assert_eq!(s.source_reachable(), vec![true, false]);
    }

    #[test]
    fn textbook_network() {
        // CLRS figure 26.1 with s = source terminal, t = sink terminal.
        // Nodes: v1..v4 -> 0..3.
        let mut s = Solver::new(4, 6);
        s.add_terminal(0, 16.0, 0.0);
        s.add_terminal(1, 13.0, 0.0);
        s.add_edge(0, 2, 12.0, 0.0);
        s.add_edge(1, 0, 4.0, 0.0);
        s.add_edge(2, 1, 9.0, 0.0);
        s.add_edge(1, 3, 14.0, 0.0);
        s.add_edge(3, 2, 7.0, 0.0);
        s.add_terminal(2, 0.0, 20.0);
        s.add_terminal(3, 0.0, 4.0);
        assert_eq!(s.solve(), 23.0);
    }
}
