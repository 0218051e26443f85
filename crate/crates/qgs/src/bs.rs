//! Benjamini-Schramm pseudometric between rooted quantum graphs.
//!
//! Rooting adds a degree-2 vertex at the marked point; distances compare
//! combinatorial k-balls around that vertex through root-preserving
//! isomorphisms, with the data distance `delta_k` taken over lengths,
//! rescaled potentials and vertex unitaries. `d = 1/(1+alpha)` where `alpha`
//! is the supremum of radii r with an isomorphism of the `floor(r)`-balls
//! whose data distance stays below `1/r`.
//!
//! Bond-ordering compatibility is quotiented out at vertices whose condition
//! is invariant under permutations (the named families); a strict mode keeps
//! the verbatim requirement.

use serde::Serialize;

use crate::conditions::operator_norm;
use crate::graph::{
    add_root_vertex, combinatorial_ball, BallGraph, BondId, EdgeId, QuantumGraph,
    RootedQuantumGraph, VertexId,
};
use crate::greens::Point;
use crate::linalg::gauss_legendre_on;
use crate::Result;

/// The radius-k sub-structure of `Q^{x0}` around the root vertex.
pub struct RootedBall {
    pub radius: usize,
    pub ball: BallGraph,
    /// The rooted parent `Q^{x0}`; data lookups go through the ball's maps.
    pub parent: QuantumGraph,
    /// Root vertex in ball labels (always 0: BFS order starts at the root).
    pub root: VertexId,
    /// `edge_to_ball[parent edge] = ball edge` or MAX.
    edge_to_ball: Vec<usize>,
}

impl RootedBall {
    pub fn new(rq: &RootedQuantumGraph, radius: usize) -> Result<Self> {
        let (parent, ins) = add_root_vertex(rq)?;
        let ball = combinatorial_ball(parent.graph(), ins.new_vertex, radius);
        debug_assert_eq!(ball.vertex_map[0], ins.new_vertex);
        let mut edge_to_ball = vec![usize::MAX; parent.graph().edge_count()];
        for (be, &pe) in ball.edge_map.iter().enumerate() {
            edge_to_ball[pe] = be;
        }
        Ok(RootedBall { radius, ball, parent, root: 0, edge_to_ball })
    }

    /// Ball bond corresponding to a parent bond, if its edge is in the ball.
    fn to_ball_bond(&self, pb: BondId) -> Option<BondId> {
        let be = self.edge_to_ball[pb.edge];
        // ball edges keep the parent's canonical orientation
        (be != usize::MAX).then_some(BondId { edge: be, rev: pb.rev })
    }
}

/// A root-preserving isomorphism between two balls of equal radius.
#[derive(Clone, Debug)]
pub struct BallIso {
    /// `vertex_map[ball1 vertex] = ball2 vertex`.
    pub vertex_map: Vec<VertexId>,
    /// `edge_map[ball1 edge] = (ball2 edge, orientation flipped)`.
    pub edge_map: Vec<(EdgeId, bool)>,
}

impl BallIso {
    pub fn map_bond(&self, b: BondId) -> BondId {
        let (e2, flipped) = self.edge_map[b.edge];
        BondId { edge: e2, rev: b.rev ^ flipped }
    }
}

fn edge_between(g: &crate::graph::CombinatorialGraph, u: VertexId, v: VertexId) -> Option<EdgeId> {
    g.outgoing(u).iter().find(|b| g.terminus(**b) == v).map(|b| b.edge)
}

/// All root-preserving isomorphisms of two equal-radius balls. With
/// `strict`, the bond orderings must correspond index by index at every
/// vertex; otherwise only at vertices where some condition is not
/// permutation-invariant.
pub fn ball_isomorphisms(b1: &RootedBall, b2: &RootedBall, strict: bool) -> Vec<BallIso> {
    assert_eq!(b1.radius, b2.radius, "isomorphisms need equal radii");
    let g1 = &b1.ball.graph;
    let g2 = &b2.ball.graph;
    let n = g1.vertex_count();
    if n != g2.vertex_count() || g1.edge_count() != g2.edge_count() {
        return Vec::new();
    }
    let dist1 = g1.distances(b1.root);
    let dist2 = g2.distances(b2.root);
    let mut out = Vec::new();
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    // BFS labelling of balls makes vertex order non-decreasing in root
    // distance, so each new vertex attaches to an assigned one
    fn assign(
        i: usize,
        g1: &crate::graph::CombinatorialGraph,
        g2: &crate::graph::CombinatorialGraph,
        dist1: &[usize],
        dist2: &[usize],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        b1: &RootedBall,
        b2: &RootedBall,
        strict: bool,
        out: &mut Vec<BallIso>,
    ) {
        let n = g1.vertex_count();
        if i == n {
            if let Some(iso) = finish_iso(g1, g2, map, b1, b2, strict) {
                out.push(iso);
            }
            return;
        }
        'cand: for w in 0..n {
            if used[w] || dist2[w] != dist1[i] || g2.degree(w) != g1.degree(i) {
                continue;
            }
            for j in 0..i {
                let a1 = edge_between(g1, i, j).is_some();
                let a2 = edge_between(g2, w, map[j]).is_some();
                if a1 != a2 {
                    continue 'cand;
                }
            }
            map[i] = w;
            used[w] = true;
            assign(i + 1, g1, g2, dist1, dist2, map, used, b1, b2, strict, out);
            used[w] = false;
            map[i] = usize::MAX;
        }
    }
    assign(0, g1, g2, &dist1, &dist2, &mut map, &mut used, b1, b2, strict, &mut out);
    out
}

/// Builds the edge map from a complete vertex assignment and verifies bond
/// ordering compatibility; `None` if the candidate fails.
fn finish_iso(
    g1: &crate::graph::CombinatorialGraph,
    g2: &crate::graph::CombinatorialGraph,
    map: &[usize],
    b1: &RootedBall,
    b2: &RootedBall,
    strict: bool,
) -> Option<BallIso> {
    let mut edge_map = Vec::with_capacity(g1.edge_count());
    for e in 0..g1.edge_count() {
        let (u, v) = g1.edge(e);
        let e2 = edge_between(g2, map[u], map[v])?;
        let flipped = g2.edge(e2).0 != map[u];
        edge_map.push((e2, flipped));
    }
    let iso = BallIso { vertex_map: map.to_vec(), edge_map };
    for v in 0..g1.vertex_count() {
        let pv1 = b1.ball.vertex_map[v];
        let pv2 = b2.ball.vertex_map[iso.vertex_map[v]];
        let inv1 = b1.parent.condition(pv1).kind().permutation_invariant();
        let inv2 = b2.parent.condition(pv2).kind().permutation_invariant();
        if !strict && inv1 && inv2 {
            continue;
        }
        let beta1 = b1.parent.beta(pv1);
        let beta2 = b2.parent.beta(pv2);
        if beta1.len() != beta2.len() {
            return None;
        }
        for (pb1, pb2) in beta1.iter().zip(beta2) {
            match (b1.to_ball_bond(*pb1), b2.to_ball_bond(*pb2)) {
                (Some(bb1), Some(bb2)) => {
                    if iso.map_bond(bb1) != bb2 {
                        return None;
                    }
                }
                (None, None) => {}
                _ => return None,
            }
        }
    }
    Some(iso)
}

/// `delta_{k,phi}`: the max over length gaps, rescaled-potential sups on both
/// bond orientations, and unitary gaps in operator norm. Infinite when the
/// parent degrees of matched vertices differ (the unitaries have different
/// shapes).
pub fn data_distance(b1: &RootedBall, b2: &RootedBall, iso: &BallIso) -> f64 {
    let mut delta = 0.0_f64;
    for be in 0..b1.ball.graph.edge_count() {
        let d1 = b1.parent.edge_data(b1.ball.edge_map[be]);
        let (e2, flipped) = iso.edge_map[be];
        let d2 = b2.parent.edge_data(b2.ball.edge_map[e2]);
        delta = delta.max((d1.length - d2.length).abs());
        for rev in [false, true] {
            let rev2 = rev ^ flipped;
            // the difference of the rescaled interpolants is piecewise linear
            // in t; a 4x refinement of the joint breakpoint grid is evaluated
            let mut ts: Vec<f64> = Vec::new();
            for &x in d1.breaks() {
                ts.push(if rev { (d1.length - x) / d1.length } else { x / d1.length });
            }
            for &x in d2.breaks() {
                ts.push(if rev2 { (d2.length - x) / d2.length } else { x / d2.length });
            }
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.dedup();
            let mut grid = Vec::with_capacity(4 * ts.len());
            for w in ts.windows(2) {
                for s in 0..4 {
                    grid.push(w[0] + (w[1] - w[0]) * s as f64 / 4.0);
                }
            }
            grid.push(1.0);
            for &t in &grid {
                let w1 = d1.potential_at(rev, t * d1.length);
                let w2 = d2.potential_at(rev2, t * d2.length);
                delta = delta.max((w1 - w2).abs());
            }
        }
    }
    for v in 0..b1.ball.graph.vertex_count() {
        let u1 = b1.parent.condition(b1.ball.vertex_map[v]).unitary();
        let u2 = b2.parent.condition(b2.ball.vertex_map[iso.vertex_map[v]]).unitary();
        if u1.nrows() != u2.nrows() {
            return f64::INFINITY;
        }
        delta = delta.max(operator_norm(&(u1 - u2)));
    }
    delta
}

/// Per-radius record in a [`DistanceReport`].
#[derive(Clone, Debug, Serialize)]
pub struct RadiusEntry {
    pub k: usize,
    pub isomorphisms: usize,
    /// Best data distance over all isomorphisms; `None` when there are none.
    pub delta: Option<f64>,
    /// Supremum of feasible radii in `[k, k+1)`, if any.
    pub sup_r: Option<f64>,
}

/// Truncated evaluation of the pseudometric `d = 1/(1+alpha)`.
#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub k_max: usize,
    pub entries: Vec<RadiusEntry>,
    /// Certified lower bound on alpha (the attained value unless truncated).
    pub alpha_lower: f64,
    /// `None` when the search was cut off while still feasible (alpha may be
    /// anything above the lower bound, including infinity).
    pub alpha_upper: Option<f64>,
    pub d_upper: f64,
    /// `None` in the truncated case: only the upper bound on d is certified.
    pub d_lower: Option<f64>,
    pub truncated: bool,
}

impl DistanceReport {
    /// Point value of the distance; panics when only an interval is known.
    pub fn d(&self) -> f64 {
        assert!(!self.truncated, "distance only known as an interval");
        self.d_upper
    }
}

/// Evaluates the pseudometric up to ball radius `k_max`.
pub fn bs_distance(
    rq1: &RootedQuantumGraph,
    rq2: &RootedQuantumGraph,
    k_max: usize,
    strict: bool,
) -> Result<DistanceReport> {
    assert!(k_max >= 1);
    let mut entries = Vec::new();
    let mut alpha = 0.0_f64;
    let mut prev_delta: Option<f64> = None;
    let mut open_ended = false;
    for k in 0..=k_max {
        let b1 = RootedBall::new(rq1, k)?;
        let b2 = RootedBall::new(rq2, k)?;
        let isos = ball_isomorphisms(&b1, &b2, strict);
        let delta = isos.iter().map(|iso| data_distance(&b1, &b2, iso)).fold(
            None,
            |best: Option<f64>, d| Some(best.map_or(d, |b| b.min(d))),
        );
        if let (Some(p), Some(d)) = (prev_delta, delta) {
            debug_assert!(d >= p - 1e-12, "delta_k must be non-decreasing");
        }
        prev_delta = delta.or(prev_delta);
        // once both balls exhaust their graphs with matching data, nothing
        // changes at larger radii: alpha is infinite and the distance is 0
        let saturated = b1.ball.graph.vertex_count() == b1.parent.graph().vertex_count()
            && b2.ball.graph.vertex_count() == b2.parent.graph().vertex_count();
        if delta == Some(0.0) && saturated {
            entries.push(RadiusEntry {
                k,
                isomorphisms: isos.len(),
                delta,
                sup_r: Some(f64::INFINITY),
            });
            return Ok(DistanceReport {
                k_max,
                entries,
                alpha_lower: f64::INFINITY,
                alpha_upper: Some(f64::INFINITY),
                d_upper: 0.0,
                d_lower: Some(0.0),
                truncated: false,
            });
        }
        // feasible radii r in [max(k, epsilon), k+1) need delta < 1/r, a
        // strict inequality, so the per-k supremum is min(k+1, 1/delta)
        let sup_r = match delta {
            Some(d) if d == 0.0 => Some((k + 1) as f64),
            Some(d) if 1.0 / d > (k as f64).max(f64::MIN_POSITIVE) => {
                Some((1.0 / d).min((k + 1) as f64))
            }
            _ => None,
        };
        if let Some(s) = sup_r {
            alpha = alpha.max(s);
        }
        open_ended = sup_r == Some((k + 1) as f64) && k == k_max;
        let infeasible = sup_r.is_none();
        entries.push(RadiusEntry { k, isomorphisms: isos.len(), delta, sup_r });
        if infeasible {
            // balls of larger radius contain these, so no further radii can
            // contribute
            break;
        }
    }
    let (alpha_upper, truncated) = if open_ended { (None, true) } else { (Some(alpha), false) };
    Ok(DistanceReport {
        k_max,
        entries,
        alpha_lower: alpha,
        alpha_upper,
        d_upper: 1.0 / (1.0 + alpha),
        d_lower: alpha_upper.map(|a| 1.0 / (1.0 + a)),
        truncated,
    })
}

/// Samples a root from the length-uniform measure: an edge with probability
/// `L_e / L`, then a uniform interior offset.
pub fn sample_root<R: rand::Rng>(q: &QuantumGraph, rng: &mut R) -> RootedQuantumGraph {
    let total = q.total_length();
    let mut t = rng.gen_range(0.0..total);
    let mut edge = q.graph().edge_count() - 1;
    for e in 0..q.graph().edge_count() {
        let len = q.edge_data(e).length;
        if t < len {
            edge = e;
            break;
        }
        t -= len;
    }
    let len = q.edge_data(edge).length;
    let mut offset = rng.gen_range(0.0..len);
    if offset == 0.0 {
        offset = len * 0.5;
    }
    RootedQuantumGraph::new(q.clone(), BondId::forward(edge), offset).expect("interior offset")
}

/// Both sides of the re-rooting identity
/// `E(F[Q,x0]) = E((1/|B_o^1|) int_{B_o^1} F[Q,x] dx)` for the
/// length-uniform root measure, by an `n`-node Gauss-Legendre rule per edge.
/// `F` is given the base graph and the root point.
pub fn reroot_average_check<F>(q: &QuantumGraph, f: F, n: usize) -> Result<(f64, f64)>
where
    F: Fn(&QuantumGraph, Point) -> Result<f64>,
{
    let g = q.graph();
    let total = q.total_length();
    // one quadrature pass per edge; both sides reuse these integrals (the
    // reversed-bond integral equals the forward one by symmetry of the rule)
    let mut edge_int = vec![0.0; g.edge_count()];
    for e in 0..g.edge_count() {
        let len = q.edge_data(e).length;
        let (xs, ws) = gauss_legendre_on(n, 0.0, len);
        for (&x, &w) in xs.iter().zip(&ws) {
            edge_int[e] += w * f(q, Point::new(e, x))?;
        }
    }
    let lhs = edge_int.iter().sum::<f64>() / total;
    // star average around the origin of each bond, weighted by the bond's
    // share of the root measure
    let mut rhs = 0.0;
    for b in g.bonds() {
        let v = g.origin(b);
        let star_len: f64 = g.outgoing(v).iter().map(|b| q.edge_data(b.edge).length).sum();
        let star_int: f64 = g.outgoing(v).iter().map(|b| edge_int[b.edge]).sum();
        rhs += q.edge_data(b.edge).length * star_int / star_len;
    }
    rhs /= 2.0 * total;
    Ok((lhs, rhs))
}
