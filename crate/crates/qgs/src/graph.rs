//! Data model for metric and quantum graphs: combinatorial structure with
//! oriented bonds, edge lengths and sampled potentials, per-vertex unitary
//! conditions, rooting, the added-vertex construction and combinatorial balls.

use crate::conditions::{self, ConditionKind, VertexCondition};
use crate::{Error, Result};

/// Default number of uniform potential samples per edge.
pub const N_POT_SAMPLES: usize = 64;

/// Tolerance for `||U U* - Id||` when validating vertex unitaries.
pub const UNITARITY_TOL: f64 = 1e-12;

pub type VertexId = usize;
pub type EdgeId = usize;

/// An oriented edge. `rev == false` is the canonical orientation (from
/// `edges[edge].0` to `edges[edge].1`); `rev == true` is its reversal.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct BondId {
    pub edge: EdgeId,
    pub rev: bool,
}

impl BondId {
    pub fn forward(edge: EdgeId) -> Self {
        BondId { edge, rev: false }
    }

    pub fn reversed(self) -> Self {
        BondId { edge: self.edge, rev: !self.rev }
    }

    /// Dense index in `0..2|E|`: forward bonds first half convention is not
    /// used; bonds interleave as `2*edge + rev`.
    pub fn index(self) -> usize {
        2 * self.edge + self.rev as usize
    }

    pub fn from_index(i: usize) -> Self {
        BondId { edge: i / 2, rev: i % 2 == 1 }
    }
}

/// Finite simple connected graph with oriented-bond bookkeeping.
#[derive(Clone, Debug)]
pub struct CombinatorialGraph {
    vertex_count: usize,
    edges: Vec<(VertexId, VertexId)>,
    outgoing: Vec<Vec<BondId>>,
}

impl CombinatorialGraph {
    /// Builds the graph and checks simplicity; connectivity is checked
    /// separately so that ball extraction can reuse this constructor.
    pub fn new(vertex_count: usize, edges: Vec<(VertexId, VertexId)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (i, &(u, v)) in edges.iter().enumerate() {
            if u >= vertex_count || v >= vertex_count {
                return Err(Error::InvalidGraph(format!(
                    "edge {i} endpoint out of range ({u},{v}) with {vertex_count} vertices"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("edge {i} is a self-loop at vertex {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidGraph(format!("duplicate edge {i} between {u} and {v}")));
            }
        }
        let mut outgoing = vec![Vec::new(); vertex_count];
        for (e, &(u, v)) in edges.iter().enumerate() {
            outgoing[u].push(BondId { edge: e, rev: false });
            outgoing[v].push(BondId { edge: e, rev: true });
        }
        Ok(CombinatorialGraph { vertex_count, edges, outgoing })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn bond_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn edge(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.edges[e]
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    /// Origin vertex of a bond.
    pub fn origin(&self, b: BondId) -> VertexId {
        let (u, v) = self.edges[b.edge];
        if b.rev { v } else { u }
    }

    /// Terminal vertex of a bond.
    pub fn terminus(&self, b: BondId) -> VertexId {
        self.origin(b.reversed())
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.outgoing[v].len()
    }

    /// Bonds with origin `v`, in construction order.
    pub fn outgoing(&self, v: VertexId) -> &[BondId] {
        &self.outgoing[v]
    }

    pub fn bonds(&self) -> impl Iterator<Item = BondId> {
        (0..self.bond_count()).map(BondId::from_index)
    }

    pub fn is_connected(&self) -> bool {
        if self.vertex_count == 0 {
            return false;
        }
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &b in &self.outgoing[v] {
                let w = self.terminus(b);
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.vertex_count
    }

    /// BFS distances from `v` (usize::MAX for unreachable).
    pub fn distances(&self, v: VertexId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertex_count];
        let mut queue = std::collections::VecDeque::new();
        dist[v] = 0;
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            for &b in &self.outgoing[u] {
                let w = self.terminus(b);
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

/// Sub-graph returned by [`combinatorial_ball`], with injections into the
/// parent graph.
#[derive(Clone, Debug)]
pub struct BallGraph {
    pub graph: CombinatorialGraph,
    /// `vertex_map[sub] = parent`.
    pub vertex_map: Vec<VertexId>,
    /// `edge_map[sub] = parent`.
    pub edge_map: Vec<EdgeId>,
}

/// Vertices at combinatorial distance at most `r` from `v`, together with all
/// edges having both endpoints in that set.
pub fn combinatorial_ball(g: &CombinatorialGraph, v: VertexId, r: usize) -> BallGraph {
    let dist = g.distances(v);
    let mut vertex_map = Vec::new();
    let mut to_sub = vec![usize::MAX; g.vertex_count()];
    // BFS order with the root first keeps ball nesting transparent.
    let mut order: Vec<VertexId> = (0..g.vertex_count()).filter(|&w| dist[w] <= r).collect();
    order.sort_by_key(|&w| (dist[w], w));
    for w in order {
        to_sub[w] = vertex_map.len();
        vertex_map.push(w);
    }
    let mut edge_map = Vec::new();
    let mut edges = Vec::new();
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        if to_sub[a] != usize::MAX && to_sub[b] != usize::MAX {
            edge_map.push(e);
            edges.push((to_sub[a], to_sub[b]));
        }
    }
    let graph = CombinatorialGraph::new(vertex_map.len(), edges).expect("sub-graph of simple graph");
    BallGraph { graph, vertex_map, edge_map }
}

/// Metric data of one undirected edge in its canonical orientation.
///
/// The potential is the piecewise-linear interpolant of `potential` values at
/// the `breaks` positions (ascending, from `0` to `length`); [`EdgeData::new`]
/// places them on a uniform grid. The reversed orientation is always the
/// reflection `W(length - x)`, evaluated through [`EdgeData::potential_at`],
/// never a stored copy. Restrictions keep the breakpoints, so a sub-edge
/// carries exactly the same potential as its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeData {
    pub length: f64,
    pub potential: Vec<f64>,
    breaks: Vec<f64>,
}

impl EdgeData {
    pub fn new(length: f64, potential: Vec<f64>) -> Result<Self> {
        if potential.len() < 2 {
            return Err(Error::InvalidGraph("potential grid needs at least 2 samples".into()));
        }
        let n = potential.len();
        let breaks = (0..n).map(|i| length * i as f64 / (n - 1) as f64).collect();
        EdgeData::from_breakpoints(length, breaks, potential)
    }

    /// Potential given at explicit breakpoint positions.
    pub fn from_breakpoints(length: f64, breaks: Vec<f64>, potential: Vec<f64>) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGraph(format!("edge length {length} must be positive")));
        }
        if breaks.len() != potential.len() || breaks.len() < 2 {
            return Err(Error::InvalidGraph("breakpoint and value lists must match".into()));
        }
        if breaks[0] != 0.0
            || (breaks[breaks.len() - 1] - length).abs() > 1e-12 * length
            || breaks.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidGraph("breakpoints must ascend from 0 to the length".into()));
        }
        if potential.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidGraph("potential sample not finite".into()));
        }
        let mut breaks = breaks;
        let last = breaks.len() - 1;
        breaks[last] = length;
        Ok(EdgeData { length, potential, breaks })
    }

    pub fn free(length: f64) -> Self {
        EdgeData::new(length, vec![0.0; N_POT_SAMPLES]).expect("positive length")
    }

    pub fn is_free(&self) -> bool {
        self.potential.iter().all(|&w| w == 0.0)
    }

    /// Breakpoint positions, canonical orientation.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Breakpoints strictly inside `(0, length)`, where the interpolant kinks.
    pub fn interior_kinks(&self) -> &[f64] {
        &self.breaks[1..self.breaks.len() - 1]
    }

    /// Linear interpolation of the canonical-orientation samples.
    pub fn potential_canonical(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.length);
        let i = self.breaks.partition_point(|&b| b <= x).clamp(1, self.breaks.len() - 1);
        let (x0, x1) = (self.breaks[i - 1], self.breaks[i]);
        let frac = (x - x0) / (x1 - x0);
        self.potential[i - 1] * (1.0 - frac) + self.potential[i] * frac
    }

    /// Potential seen from a bond: the canonical samples for the forward bond,
    /// the reflection `W(L - x)` for the reversed one.
    pub fn potential_at(&self, rev: bool, x: f64) -> f64 {
        if rev {
            self.potential_canonical(self.length - x)
        } else {
            self.potential_canonical(x)
        }
    }

    pub fn potential_sup(&self) -> f64 {
        self.potential.iter().fold(0.0_f64, |m, w| m.max(w.abs()))
    }

    /// Lipschitz constant of the interpolant.
    pub fn potential_lipschitz(&self) -> f64 {
        let mut m = 0.0_f64;
        for i in 1..self.breaks.len() {
            let slope = (self.potential[i] - self.potential[i - 1])
                / (self.breaks[i] - self.breaks[i - 1]);
            m = m.max(slope.abs());
        }
        m
    }

    /// Exact restriction to `[a, b]` (in canonical coordinates): the parent's
    /// interior breakpoints are kept, so the interpolants agree identically.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= self.length) {
            return Err(Error::InvalidGraph(format!(
                "restriction [{a}, {b}] outside [0, {}]",
                self.length
            )));
        }
        if self.is_free() {
            return Ok(EdgeData::free(b - a));
        }
        let len = b - a;
        let guard = 1e-12 * self.length;
        let mut breaks = vec![0.0];
        let mut vals = vec![self.potential_canonical(a)];
        for (i, &x) in self.breaks.iter().enumerate() {
            if x > a + guard && x < b - guard {
                breaks.push(x - a);
                vals.push(self.potential[i]);
            }
        }
        breaks.push(len);
        vals.push(self.potential_canonical(b));
        EdgeData::from_breakpoints(len, breaks, vals)
    }

    /// The same edge seen from the other end: `W(length - x)` as canonical.
    pub fn reversed_copy(&self) -> Self {
        let n = self.breaks.len();
        let breaks = (0..n).map(|i| self.length - self.breaks[n - 1 - i]).collect();
        let vals = self.potential.iter().rev().copied().collect();
        EdgeData::from_breakpoints(self.length, breaks, vals).expect("valid reflection")
    }
}

/// Uniform bounds under which families of quantum graphs are compared.
#[derive(Clone, Copy, Debug)]
pub struct ValidationBounds {
    /// Max degree.
    pub max_degree: usize,
    /// Min edge length.
    pub min_length: f64,
    /// Max edge length.
    pub max_length: f64,
    /// Sup and Lipschitz bound on potentials.
    pub max_potential: f64,
    /// Bound on the Robin parts `||Lambda_v||`.
    pub max_robin: f64,
}

impl ValidationBounds {
    pub fn new(
        max_degree: usize,
        min_length: f64,
        max_length: f64,
        max_potential: f64,
        max_robin: f64,
    ) -> Result<Self> {
        if !(0.0 < min_length && min_length <= max_length) || max_degree < 1 {
            return Err(Error::InvalidGraph("bounds need 0 < m <= M and D >= 1".into()));
        }
        Ok(ValidationBounds { max_degree, min_length, max_length, max_potential, max_robin })
    }
}

/// A finite quantum graph: combinatorics, metric data, per-vertex unitary
/// condition and bond labellings.
#[derive(Clone, Debug)]
pub struct QuantumGraph {
    graph: CombinatorialGraph,
    edge_data: Vec<EdgeData>,
    conditions: Vec<VertexCondition>,
    /// `beta[v]` is an ordering of the bonds with origin `v`.
    beta: Vec<Vec<BondId>>,
}

impl QuantumGraph {
    /// Validates and assembles a quantum graph. `beta` may be `None`, in which
    /// case the construction order of outgoing bonds is used; this is only
    /// material for conditions that are not permutation invariant.
    pub fn new(
        graph: CombinatorialGraph,
        edge_data: Vec<EdgeData>,
        conditions: Vec<VertexCondition>,
        beta: Option<Vec<Vec<BondId>>>,
    ) -> Result<Self> {
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        if edge_data.len() != graph.edge_count() {
            return Err(Error::InvalidGraph("edge data count mismatch".into()));
        }
        if conditions.len() != graph.vertex_count() {
            return Err(Error::InvalidGraph("vertex condition count mismatch".into()));
        }
        for (v, cond) in conditions.iter().enumerate() {
            let d = graph.degree(v);
            if cond.unitary().nrows() != d {
                return Err(Error::InvalidGraph(format!(
                    "vertex {v}: condition is {}x{} but degree is {d}",
                    cond.unitary().nrows(),
                    cond.unitary().ncols()
                )));
            }
            let res = conditions::unitarity_defect(cond.unitary());
            if res > UNITARITY_TOL {
                return Err(Error::InvalidGraph(format!(
                    "vertex {v}: matrix is non-unitary (||UU* - Id|| = {res:.3e})"
                )));
            }
        }
        let beta = match beta {
            Some(beta) => {
                if beta.len() != graph.vertex_count() {
                    return Err(Error::InvalidGraph("beta count mismatch".into()));
                }
                for (v, order) in beta.iter().enumerate() {
                    let mut expect: Vec<BondId> = graph.outgoing(v).to_vec();
                    let mut got = order.clone();
                    expect.sort();
                    got.sort();
                    if expect != got {
                        return Err(Error::InvalidGraph(format!(
                            "beta at vertex {v} is not a bijection onto outgoing bonds"
                        )));
                    }
                }
                beta
            }
            None => (0..graph.vertex_count()).map(|v| graph.outgoing(v).to_vec()).collect(),
        };
        Ok(QuantumGraph { graph, edge_data, conditions, beta })
    }

    pub fn graph(&self) -> &CombinatorialGraph {
        &self.graph
    }

    pub fn edge_data(&self, e: EdgeId) -> &EdgeData {
        &self.edge_data[e]
    }

    pub fn edge_datas(&self) -> &[EdgeData] {
        &self.edge_data
    }

    pub fn condition(&self, v: VertexId) -> &VertexCondition {
        &self.conditions[v]
    }

    pub fn beta(&self, v: VertexId) -> &[BondId] {
        &self.beta[v]
    }

    /// Index of bond `b` in `beta[origin(b)]`.
    pub fn beta_index(&self, b: BondId) -> usize {
        let v = self.graph.origin(b);
        self.beta[v].iter().position(|&c| c == b).expect("beta is a bijection")
    }

    pub fn total_length(&self) -> f64 {
        self.edge_data.iter().map(|d| d.length).sum()
    }

    pub fn potential_sup(&self) -> f64 {
        self.edge_data.iter().fold(0.0_f64, |m, d| m.max(d.potential_sup()))
    }

    pub fn max_robin_norm(&self) -> f64 {
        self.conditions.iter().fold(0.0_f64, |m, c| m.max(c.boundary().lambda_norm))
    }

    /// Checks the uniform-family conditions (degree, lengths, potential sup
    /// and Lipschitz constant, Robin norms) against explicit bounds.
    pub fn check_bounds(&self, bounds: &ValidationBounds) -> Result<()> {
        for v in 0..self.graph.vertex_count() {
            let d = self.graph.degree(v);
            if d > bounds.max_degree {
                return Err(Error::BoundViolation(format!(
                    "vertex {v} has degree {d} > {}",
                    bounds.max_degree
                )));
            }
            let l = self.conditions[v].boundary().lambda_norm;
            if l > bounds.max_robin + 1e-12 {
                return Err(Error::BoundViolation(format!(
                    "vertex {v} has ||Lambda|| = {l:.6} > {}",
                    bounds.max_robin
                )));
            }
        }
        for (e, d) in self.edge_data.iter().enumerate() {
            if d.length < bounds.min_length - 1e-15 || d.length > bounds.max_length + 1e-15 {
                return Err(Error::BoundViolation(format!(
                    "edge {e} length {} outside [{}, {}]",
                    d.length, bounds.min_length, bounds.max_length
                )));
            }
            if d.potential_sup() > bounds.max_potential + 1e-12 {
                return Err(Error::BoundViolation(format!(
                    "edge {e} potential sup {} > {}",
                    d.potential_sup(),
                    bounds.max_potential
                )));
            }
            if d.potential_lipschitz() > bounds.max_potential + 1e-9 {
                return Err(Error::BoundViolation(format!(
                    "edge {e} potential Lipschitz constant {} > {}",
                    d.potential_lipschitz(),
                    bounds.max_potential
                )));
            }
        }
        Ok(())
    }
}

/// A quantum graph with a marked interior point `(root_bond, root_offset)`,
/// `root_offset` measured from the origin of `root_bond`.
#[derive(Clone, Debug)]
pub struct RootedQuantumGraph {
    pub base: QuantumGraph,
    pub root_bond: BondId,
    pub root_offset: f64,
}

impl RootedQuantumGraph {
    pub fn new(base: QuantumGraph, root_bond: BondId, root_offset: f64) -> Result<Self> {
        let len = base.edge_data(root_bond.edge).length;
        if !(root_offset > 0.0 && root_offset < len) {
            return Err(Error::InvalidGraph(format!(
                "root offset {root_offset} not strictly inside (0, {len})"
            )));
        }
        Ok(RootedQuantumGraph { base, root_bond, root_offset })
    }
}

/// Bookkeeping returned by [`add_root_vertex`].
#[derive(Clone, Copy, Debug)]
pub struct RootInsertion {
    /// Id of the new degree-2 vertex.
    pub new_vertex: VertexId,
    /// Bond from the new vertex towards the origin of the root bond
    /// (first in the new vertex's beta ordering).
    pub to_origin: BondId,
    /// Bond from the new vertex towards the terminus of the root bond.
    pub to_target: BondId,
}

/// The added-vertex construction: splits the root edge at the root point,
/// inserting a degree-2 vertex with `U = [[0,1],[1,0]]` (Kirchhoff) and beta
/// ordering (towards origin, towards terminus).
pub fn add_root_vertex(rq: &RootedQuantumGraph) -> Result<(QuantumGraph, RootInsertion)> {
    let q = &rq.base;
    let g = q.graph();
    let rb = rq.root_bond;
    let e0 = rb.edge;
    let data = q.edge_data(e0);
    let len = data.length;
    let x0 = rq.root_offset;
    let w = g.vertex_count();

    // Both halves are stored canonically oriented along the root bond, so the
    // restrictions below are taken in root-bond coordinates.
    let along: EdgeData = if rb.rev { data.reversed_copy() } else { data.clone() };
    let first = along.restrict(0.0, x0)?;
    let second = along.restrict(x0, len)?;

    let mut edges = g.edges().to_vec();
    edges[e0] = (g.origin(rb), w);
    edges.push((w, g.terminus(rb)));
    let new_edge = edges.len() - 1;
    let graph = CombinatorialGraph::new(g.vertex_count() + 1, edges)?;

    let mut edge_data = q.edge_datas().to_vec();
    edge_data[e0] = first;
    edge_data.push(second);

    let mut conds: Vec<VertexCondition> = (0..g.vertex_count()).map(|v| q.condition(v).clone()).collect();
    conds.push(VertexCondition::named(ConditionKind::Kirchhoff, 2));

    // Re-point beta orderings: the root bond becomes the first half, its
    // reversal becomes the reversed second half; order is preserved.
    let relabel = |b: BondId| -> BondId {
        if b.edge != e0 {
            b
        } else if b == rb {
            BondId::forward(e0)
        } else {
            BondId { edge: new_edge, rev: true }
        }
    };
    let mut beta: Vec<Vec<BondId>> =
        (0..g.vertex_count()).map(|v| q.beta(v).iter().map(|&b| relabel(b)).collect()).collect();
    let to_origin = BondId { edge: e0, rev: true };
    let to_target = BondId::forward(new_edge);
    beta.push(vec![to_origin, to_target]);

    let out = QuantumGraph::new(graph, edge_data, conds, Some(beta))?;
    Ok((out, RootInsertion { new_vertex: w, to_origin, to_target }))
}
