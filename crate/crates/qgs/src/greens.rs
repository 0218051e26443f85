//! Green's function of `(H - z)^{-1}` through the bond evolution-operator
//! system.
//!
//! Reference waves are `E = C - i sqrt(z) S` (so `E(x) = e^{-i sqrt(z) x}` on
//! free edges). The kernel rooted at a point `x1` solves
//! `(Id - S(z) D(z)) a = xi` with `xi = 1/(2 i sqrt(z))` on the two bonds
//! leaving the root vertex, and expands on every edge as
//! `G(x1, y) = a(b) E_b(y) + a(b_hat) E_bhat(L - y)`.
//!
//! Pointwise values away from the root use midpoint rooting: the kernel and
//! its derivative at the midpoint of the edge carrying `x` propagate to `x`
//! through `C, S`, the derivative being recovered by the dual functional `Z`
//! on a one-sixth initial segment, whose integrand is supplied by re-rooted
//! solves. Sub-edges shorter than a third of an edge never appear.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::conditions::ConditionKind;
use crate::edge::{fund_at, sqrt_z, DualFunctionals, EdgeSolutionTable};
use crate::graph::{add_root_vertex, BondId, EdgeId, QuantumGraph, RootedQuantumGraph, VertexId};
use crate::{Error, Result};

/// Condition-number guard on the `(A1 - i sqrt(z) A2)` inversions.
pub const COND_GUARD: f64 = 1e12;
/// Neumann-series truncation threshold on the term norm.
pub const NEUMANN_TRUNC: f64 = 1e-14;

const I: C64 = C64::new(0.0, 1.0);

/// The assembled bond system at a fixed `z` with `Im z > 0`.
pub struct EvolutionSystem {
    pub z: C64,
    pub s_matrix: DMatrix<C64>,
    /// Diagonal of `D`, `D_bb = E_b(L_b)`.
    pub d_diag: DVector<C64>,
    pub sigma_blocks: Vec<DMatrix<C64>>,
    pub delta_blocks: Vec<DVector<C64>>,
}

impl EvolutionSystem {
    /// Assembles the system, using the z-independent scattering blocks when
    /// every vertex is Kirchhoff and every edge potential-free.
    pub fn new(q: &QuantumGraph, z: C64) -> Result<Self> {
        if z.im <= 0.0 {
            return Err(Error::Numerical("evolution system needs Im z > 0".into()));
        }
        let kirchhoff_free = (0..q.graph().vertex_count())
            .all(|v| matches!(q.condition(v).kind(), ConditionKind::Kirchhoff))
            && q.edge_datas().iter().all(|d| d.is_free());
        if kirchhoff_free {
            Self::new_kirchhoff_free(q, z)
        } else {
            Self::new_general(q, z)
        }
    }

    /// The general assembly; public so the fast path can be cross-checked.
    pub fn new_general(q: &QuantumGraph, z: C64) -> Result<Self> {
        let g = q.graph();
        let table = EdgeSolutionTable::new(q, z)?;
        let w = sqrt_z(z);
        let n = g.bond_count();
        let mut d_diag = DVector::<C64>::zeros(n);
        for b in g.bonds() {
            d_diag[b.index()] = table.endpoint(b).e(z);
        }
        let mut sigma_blocks = Vec::with_capacity(g.vertex_count());
        let mut delta_blocks = Vec::with_capacity(g.vertex_count());
        let mut s_matrix = DMatrix::<C64>::zeros(n, n);
        for v in 0..g.vertex_count() {
            let d = g.degree(v);
            let beta = q.beta(v);
            let mut delta = DVector::<C64>::zeros(d);
            for (j, &b) in beta.iter().enumerate() {
                let rev = table.endpoint(b.reversed());
                let e = rev.e(z);
                let de = rev.de(z);
                if e.norm() < 1e-12 * (1.0 + de.norm()) {
                    return Err(Error::Numerical(format!(
                        "E vanishes on bond {:?} at z = {z}; z too close to the real axis",
                        b
                    )));
                }
                delta[j] = -de / e;
            }
            let bm = q.condition(v).boundary();
            let a = bm.a1.map(|x| x) - bm.a2.map(|x| I * w * x);
            let sv = a.clone().svd(false, false).singular_values;
            let cond = sv[0] / sv[sv.len() - 1];
            if !cond.is_finite() || cond > COND_GUARD {
                return Err(Error::Numerical(format!(
                    "(A1 - i sqrt(z) A2) at vertex {v} has condition number {cond:.3e}"
                )));
            }
            let mut rhs = bm.a1.clone();
            for j in 0..d {
                for i in 0..d {
                    rhs[(i, j)] += bm.a2[(i, j)] * delta[j];
                }
            }
            let sigma = -(a.lu().solve(&rhs).ok_or_else(|| {
                Error::Numerical(format!("singular (A1 - i sqrt(z) A2) at vertex {v}"))
            })?);
            for (j, &bj) in beta.iter().enumerate() {
                for (k, &bk) in beta.iter().enumerate() {
                    // S_{b, b'} = sigma^v_{j, k} with b' = reversed(beta(k))
                    s_matrix[(bj.index(), bk.reversed().index())] = sigma[(j, k)];
                }
            }
            sigma_blocks.push(sigma);
            delta_blocks.push(delta);
        }
        Ok(EvolutionSystem { z, s_matrix, d_diag, sigma_blocks, delta_blocks })
    }

    fn new_kirchhoff_free(q: &QuantumGraph, z: C64) -> Result<Self> {
        let g = q.graph();
        let w = sqrt_z(z);
        let n = g.bond_count();
        let mut d_diag = DVector::<C64>::zeros(n);
        for b in g.bonds() {
            let l = q.edge_data(b.edge).length;
            d_diag[b.index()] = (-I * w * l).exp();
        }
        let mut sigma_blocks = Vec::with_capacity(g.vertex_count());
        let mut delta_blocks = Vec::with_capacity(g.vertex_count());
        let mut s_matrix = DMatrix::<C64>::zeros(n, n);
        for v in 0..g.vertex_count() {
            let d = g.degree(v);
            let c = 2.0 / d as f64;
            let sigma = DMatrix::from_fn(d, d, |i, j| {
                C64::new(if i == j { c - 1.0 } else { c }, 0.0)
            });
            let beta = q.beta(v);
            for (j, &bj) in beta.iter().enumerate() {
                for (k, &bk) in beta.iter().enumerate() {
                    s_matrix[(bj.index(), bk.reversed().index())] = sigma[(j, k)];
                }
            }
            sigma_blocks.push(sigma);
            delta_blocks.push(DVector::from_element(d, I * w));
        }
        Ok(EvolutionSystem { z, s_matrix, d_diag, sigma_blocks, delta_blocks })
    }

    /// `S D` as a dense matrix.
    pub fn sd(&self) -> DMatrix<C64> {
        let mut m = self.s_matrix.clone();
        for j in 0..m.ncols() {
            let d = self.d_diag[j];
            for i in 0..m.nrows() {
                m[(i, j)] *= d;
            }
        }
        m
    }

    /// `||(S D)^{-1}||` in operator norm.
    pub fn sd_inverse_norm(&self) -> f64 {
        let sv = self.sd().svd(false, false).singular_values;
        1.0 / sv[sv.len() - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreenMethod {
    Direct,
    NeumannSeries,
}

/// Solves `(Id - S D) a = xi` with the source on the bonds leaving `root`.
pub fn green_coefficients(
    sys: &EvolutionSystem,
    q: &QuantumGraph,
    root: VertexId,
    method: GreenMethod,
) -> Result<DVector<C64>> {
    let n = q.graph().bond_count();
    let w = sqrt_z(sys.z);
    let mut xi = DVector::<C64>::zeros(n);
    for &b in q.beta(root) {
        xi[b.index()] = 1.0 / (2.0 * I * w);
    }
    let sd = sys.sd();
    match method {
        GreenMethod::Direct => {
            let m = DMatrix::<C64>::identity(n, n) - sd;
            m.lu()
                .solve(&xi)
                .ok_or_else(|| Error::Numerical("singular (Id - S D); assembly bug".into()))
        }
        GreenMethod::NeumannSeries => {
            let norm = sys.sd_inverse_norm();
            if norm >= 0.5 {
                return Err(Error::Numerical(format!(
                    "Neumann series outside the contraction regime: ||(SD)^-1|| = {norm:.3}"
                )));
            }
            let lu = sd.lu();
            let mut term = xi;
            let mut acc = DVector::<C64>::zeros(n);
            for _ in 0..200 {
                term = lu
                    .solve(&term)
                    .ok_or_else(|| Error::Numerical("singular S D".into()))?;
                acc -= &term;
                if term.norm() < NEUMANN_TRUNC {
                    return Ok(acc);
                }
            }
            Err(Error::Numerical("Neumann series did not truncate".into()))
        }
    }
}

/// A point on the metric graph in canonical edge coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub edge: EdgeId,
    pub x: f64,
}

impl Point {
    pub fn new(edge: EdgeId, x: f64) -> Self {
        Point { edge, x }
    }
}

struct RootedSolve {
    q1: QuantumGraph,
    split_edge: EdgeId,
    offset: f64,
    new_edge: EdgeId,
    #[allow(dead_code)]
    root_vertex: VertexId,
    a: DVector<C64>,
}

impl RootedSolve {
    /// `G(root, y)` or its y-derivative (in canonical coordinates of the base
    /// graph) from the coefficient expansion.
    fn expand(&self, z: C64, y: Point, dy: bool) -> Result<C64> {
        let (e1, ybar) = if y.edge == self.split_edge && y.x > self.offset {
            (self.new_edge, y.x - self.offset)
        } else {
            (y.edge, y.x)
        };
        let data = self.q1.edge_data(e1);
        let fwd = fund_at(data, false, z, &[ybar])?[0];
        let rev = fund_at(data, true, z, &[data.length - ybar])?[0];
        let af = self.a[BondId { edge: e1, rev: false }.index()];
        let ar = self.a[BondId { edge: e1, rev: true }.index()];
        Ok(if dy {
            af * fwd.de(z) - ar * rev.de(z)
        } else {
            af * fwd.e(z) + ar * rev.e(z)
        })
    }
}

/// Pointwise Green's function evaluator at a fixed `z` with `Im z != 0`.
pub struct GreenEvaluator<'a> {
    q: &'a QuantumGraph,
    z: C64,
    method: GreenMethod,
    conjugated: bool,
}

impl<'a> GreenEvaluator<'a> {
    pub fn new(q: &'a QuantumGraph, z: C64) -> Result<Self> {
        Self::with_method(q, z, GreenMethod::Direct)
    }

    pub fn with_method(q: &'a QuantumGraph, z: C64, method: GreenMethod) -> Result<Self> {
        if z.im == 0.0 {
            return Err(Error::Numerical("Green's function needs Im z != 0".into()));
        }
        // the lower half-plane is reached by conjugation
        let conjugated = z.im < 0.0;
        Ok(GreenEvaluator { q, z: if conjugated { z.conj() } else { z }, method, conjugated })
    }

    pub fn value(&self, x: Point, y: Point) -> Result<C64> {
        self.eval(x, y, false, false)
    }

    /// Derivative in the first argument, canonical coordinate of `x.edge`.
    pub fn value_dx(&self, x: Point, y: Point) -> Result<C64> {
        self.eval(x, y, true, false)
    }

    /// Derivative in the second argument, canonical coordinate of `y.edge`.
    pub fn value_dy(&self, x: Point, y: Point) -> Result<C64> {
        self.eval(x, y, false, true)
    }

    fn check_interior(&self, p: Point) -> Result<()> {
        let len = self.q.edge_data(p.edge).length;
        if p.x <= 0.0 || p.x >= len {
            return Err(Error::BoundViolation(format!(
                "point x = {} is not interior to edge {} (length {len})",
                p.x, p.edge
            )));
        }
        Ok(())
    }

    fn eval(&self, x: Point, y: Point, dx: bool, dy: bool) -> Result<C64> {
        self.check_interior(x)?;
        self.check_interior(y)?;
        let v = self.eval_upper(x, y, dx, dy)?;
        Ok(if self.conjugated { v.conj() } else { v })
    }

    fn solve_at(&self, edge: EdgeId, offset: f64) -> Result<RootedSolve> {
        let rq = RootedQuantumGraph::new(self.q.clone(), BondId::forward(edge), offset)?;
        let (q1, ins) = add_root_vertex(&rq)?;
        let sys = EvolutionSystem::new(&q1, self.z)?;
        let a = green_coefficients(&sys, &q1, ins.new_vertex, self.method)?;
        Ok(RootedSolve {
            q1,
            split_edge: edge,
            offset,
            new_edge: ins.to_target.edge,
            root_vertex: ins.new_vertex,
            a,
        })
    }

    fn eval_upper(&self, x: Point, y: Point, dx: bool, dy: bool) -> Result<C64> {
        let len = self.q.edge_data(x.edge).length;
        let mid = 0.5 * len;
        // the propagation from the midpoint to x must not cross the
        // singularity at y; when y lies strictly between, swap the arguments
        // (the kernel is symmetric)
        if y.edge == x.edge && y.x > x.x.min(mid) && y.x < x.x.max(mid) {
            return self.eval_upper(y, x, dy, dx);
        }
        let solve = self.solve_at(x.edge, mid)?;
        let val1 = solve.expand(self.z, y, dy)?;
        let at_mid = (x.x - mid).abs() < 1e-12 * len;
        if at_mid && !dx {
            return Ok(val1);
        }
        let u = self.midpoint_derivative(&solve, x.edge, y, dy)?;
        if at_mid {
            return Ok(u);
        }
        // propagate from the midpoint through C, S on the sub-edge holding x
        if x.x >= mid {
            let data = solve.q1.edge_data(solve.new_edge);
            let f = fund_at(data, false, self.z, &[x.x - mid])?[0];
            Ok(if dx { f.dc * val1 + f.ds * u } else { f.c * val1 + f.s * u })
        } else {
            // sub-edge oriented from the root towards the original origin;
            // its coordinate runs against the canonical one
            let data = solve.q1.edge_data(x.edge);
            let f = fund_at(data, true, self.z, &[mid - x.x])?[0];
            let fp0 = -u;
            Ok(if dx { -(f.dc * val1 + f.ds * fp0) } else { f.c * val1 + f.s * fp0 })
        }
    }

    /// `d/dx G((x.edge, t), y)` at the midpoint `t = L/2`, in canonical
    /// coordinates, via the `Z` dual functional on a one-sixth segment. The
    /// segment on the side not containing `y` is integrated, with fresh
    /// rooted solves supplying the kernel at the quadrature nodes.
    fn midpoint_derivative(&self, solve: &RootedSolve, e0: EdgeId, y: Point, dy: bool) -> Result<C64> {
        let len = self.q.edge_data(e0).length;
        let mid = 0.5 * len;
        let zeta = len / 6.0;
        let y_in_right = y.edge == e0 && y.x >= mid - 1e-12 * len && y.x <= mid + zeta + 1e-12 * len;
        if !y_in_right {
            // right segment, along (root -> terminus), same direction as the
            // canonical coordinate
            let data = solve.q1.edge_data(solve.new_edge);
            let df = DualFunctionals::new(data, false, self.z, zeta)?;
            let vals = df
                .nodes
                .iter()
                .map(|&t| self.solve_at(e0, mid + t)?.expand(self.z, y, dy))
                .collect::<Result<Vec<_>>>()?;
            Ok(df.apply_z(&vals))
        } else {
            // left segment, along (root -> origin), against the canonical
            // coordinate; the recovered derivative flips sign
            let data = solve.q1.edge_data(e0);
            let df = DualFunctionals::new(data, true, self.z, zeta)?;
            let vals = df
                .nodes
                .iter()
                .map(|&t| self.solve_at(e0, mid - t)?.expand(self.z, y, dy))
                .collect::<Result<Vec<_>>>()?;
            Ok(-df.apply_z(&vals))
        }
    }

    /// Kernel value at the root of a single midpoint-rooted system; used by
    /// the trace quadrature where `x` stays on one edge.
    fn diagonal_on_edge(&self, e: EdgeId, xs: &[f64]) -> Result<Vec<C64>> {
        xs.iter().map(|&x| self.eval_upper(Point::new(e, x), Point::new(e, x), false, false)).collect()
    }
}

/// `Tr[(H - z)^{-1}] = int_G G_z(x, x) dx` by per-edge composite
/// Gauss-Legendre quadrature, refined until the change drops below 1e-8.
pub fn resolvent_trace(q: &QuantumGraph, z: C64) -> Result<C64> {
    if z.im < 0.0 {
        return Ok(resolvent_trace(q, z.conj())?.conj());
    }
    let ev = GreenEvaluator::new(q, z)?;
    let w = sqrt_z(z).norm();
    let mut total = C64::new(0.0, 0.0);
    for e in 0..q.graph().edge_count() {
        let len = q.edge_data(e).length;
        let mut panels = ((len * (1.0 + w) / 2.0).ceil() as usize).max(2);
        let mut last = edge_diagonal_integral(&ev, e, len, panels)?;
        for _ in 0..4 {
            panels *= 2;
            let next = edge_diagonal_integral(&ev, e, len, panels)?;
            let change = (next - last).norm();
            last = next;
            if change < 1e-8 * (1.0 + last.norm()) {
                break;
            }
        }
        total += last;
    }
    Ok(total)
}

fn edge_diagonal_integral(
    ev: &GreenEvaluator,
    e: EdgeId,
    len: f64,
    panels: usize,
) -> Result<C64> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in 0..panels {
        let a = len * p as f64 / panels as f64;
        let b = len * (p + 1) as f64 / panels as f64;
        let (xs, ws) = crate::linalg::gauss_legendre_on(8, a, b);
        nodes.extend(xs);
        weights.extend(ws);
    }
    let vals = ev.diagonal_on_edge(e, &nodes)?;
    Ok(vals.iter().zip(&weights).map(|(v, &w)| w * v).sum())
}

/// `(1/(pi L)) Im Tr[(H - (lambda + i eps))^{-1}]` per grid point.
pub fn smoothed_spectral_density(q: &QuantumGraph, lambda_grid: &[f64], eps: f64) -> Result<Vec<f64>> {
    assert!(eps > 0.0);
    let total = q.total_length();
    lambda_grid
        .par_iter()
        .map(|&l| {
            let tr = resolvent_trace(q, C64::new(l, eps))?;
            Ok(tr.im / (std::f64::consts::PI * total))
        })
        .collect()
}

/// `Theta(sqrt(z)) = (A1 - i sqrt(z) A2)^{-1} (A1 + i sqrt(z) A2)` for one
/// vertex condition.
pub fn theta_matrix(cond: &crate::conditions::VertexCondition, z: C64) -> Result<DMatrix<C64>> {
    let w = sqrt_z(z);
    let b = cond.boundary();
    let a_minus = b.a1.map(|x| x) - b.a2.map(|x| I * w * x);
    let a_plus = b.a1.map(|x| x) + b.a2.map(|x| I * w * x);
    a_minus
        .lu()
        .solve(&a_plus)
        .ok_or_else(|| Error::Numerical("singular (A1 - i sqrt(z) A2)".into()))
}
