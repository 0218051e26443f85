//! Eigenvalues, eigenfunctions, empirical spectral measures and
//! functional-calculus kernels.
//!
//! Eigenvalues are located as dips of the smallest singular value of the
//! secular matrix `M(lambda)`: per canonical edge the unknowns are
//! `(f(0), f'(0))`, and every vertex contributes its `A1 F + A2 F' = 0` rows,
//! with values and outgoing derivatives at the far end expressed through the
//! fundamental system `C, S`. Dips found on a scan grid are refined by
//! golden-section search and their multiplicity read off the singular values
//! at the refined point.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::edge::{fund_at, FundEntry, N_GRID};
use crate::graph::{EdgeId, QuantumGraph, VertexId};
use crate::linalg::{golden_min, BandedMatrix};
use crate::{Error, Result};

/// Singular values below this count towards the multiplicity.
pub const MULT_TOL: f64 = 1e-6;
/// Dense singular value decompositions are used for scanning up to this size;
/// larger systems scan through a banded LU estimator.
pub const DENSE_SCAN_LIMIT: usize = 80;

/// The secular matrix at a real spectral parameter.
pub struct SecularSystem {
    pub lambda: f64,
    pub matrix: DMatrix<C64>,
}

impl SecularSystem {
    pub fn sigma_min(&self) -> f64 {
        let sv = self.matrix.clone().singular_values();
        sv[sv.len() - 1]
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.matrix.clone().singular_values().iter().copied().collect()
    }
}

pub fn secular_matrix(q: &QuantumGraph, lambda: f64) -> Result<SecularSystem> {
    let ordering = SecularOrdering::new(q);
    let endpoints = endpoints_at(q, C64::new(lambda, 0.0))?;
    let n = ordering.n;
    let mut m = DMatrix::<C64>::zeros(n, n);
    assemble_into(q, &endpoints, &ordering, &mut |r, c, v| m[(r, c)] += v);
    Ok(SecularSystem { lambda, matrix: m })
}

/// Bandwidth-reducing ordering of rows (grouped by vertex) and columns
/// (pairs per edge), based on reverse Cuthill-McKee over the vertices.
#[derive(Clone, Debug)]
struct SecularOrdering {
    n: usize,
    row_offset: Vec<usize>,
    edge_rank: Vec<usize>,
    edge_of_rank: Vec<EdgeId>,
    kl: usize,
    ku: usize,
}

impl SecularOrdering {
    fn new(q: &QuantumGraph) -> Self {
        let g = q.graph();
        let order = rcm_order(g);
        let mut pos = vec![0usize; g.vertex_count()];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        let mut row_offset = vec![0usize; g.vertex_count()];
        let mut acc = 0;
        for &v in &order {
            row_offset[v] = acc;
            acc += g.degree(v);
        }
        let mut edge_of_rank: Vec<EdgeId> = (0..g.edge_count()).collect();
        edge_of_rank.sort_by_key(|&e| {
            let (u, v) = g.edge(e);
            (pos[u].min(pos[v]), pos[u].max(pos[v]))
        });
        let mut edge_rank = vec![0usize; g.edge_count()];
        for (r, &e) in edge_of_rank.iter().enumerate() {
            edge_rank[e] = r;
        }
        let n = g.bond_count();
        let mut kl = 0usize;
        let mut ku = 0usize;
        for v in 0..g.vertex_count() {
            for i in 0..g.degree(v) {
                let r = row_offset[v] + i;
                for &b in q.beta(v) {
                    for c in [2 * edge_rank[b.edge], 2 * edge_rank[b.edge] + 1] {
                        if r >= c {
                            kl = kl.max(r - c);
                        } else {
                            ku = ku.max(c - r);
                        }
                    }
                }
            }
        }
        SecularOrdering { n, row_offset, edge_rank, edge_of_rank, kl, ku }
    }
}

fn rcm_order(g: &crate::graph::CombinatorialGraph) -> Vec<VertexId> {
    let n = g.vertex_count();
    let start = (0..n).min_by_key(|&v| g.degree(v)).unwrap_or(0);
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        let mut nbrs: Vec<VertexId> =
            g.outgoing(v).iter().map(|&b| g.terminus(b)).filter(|&w| !seen[w]).collect();
        nbrs.sort_by_key(|&w| g.degree(w));
        for w in nbrs {
            seen[w] = true;
            queue.push_back(w);
        }
    }
    order.reverse();
    order
}

/// Fundamental-system endpoints of every canonical edge at a fixed `z`,
/// deduplicating identical edges (common in equilateral ensembles).
fn endpoints_at(q: &QuantumGraph, z: C64) -> Result<Vec<FundEntry>> {
    let mut out: Vec<FundEntry> = Vec::with_capacity(q.graph().edge_count());
    let mut memo: Vec<(usize, FundEntry)> = Vec::new();
    for e in 0..q.graph().edge_count() {
        let data = q.edge_data(e);
        let hit = memo.iter().find(|&&(prev, _)| q.edge_data(prev) == data);
        let entry = match hit {
            Some(&(_, entry)) => entry,
            None => {
                let entry = crate::edge::fund_endpoint(data, false, z)?;
                memo.push((e, entry));
                entry
            }
        };
        out.push(entry);
    }
    Ok(out)
}

/// Feeds all nonzero secular-matrix entries to `sink(row, col, value)`.
fn assemble_into(
    q: &QuantumGraph,
    endpoints: &[FundEntry],
    ord: &SecularOrdering,
    sink: &mut dyn FnMut(usize, usize, C64),
) {
    let g = q.graph();
    for v in 0..g.vertex_count() {
        let b = q.condition(v).boundary();
        let (a1, a2) = (&b.a1, &b.a2);
        for i in 0..g.degree(v) {
            let r = ord.row_offset[v] + i;
            for (j, &bond) in q.beta(v).iter().enumerate() {
                let c0 = 2 * ord.edge_rank[bond.edge];
                if !bond.rev {
                    // unknowns are the boundary data at this very endpoint
                    sink(r, c0, a1[(i, j)]);
                    sink(r, c0 + 1, a2[(i, j)]);
                } else {
                    // transfer through the edge: value C(L)u + S(L)u',
                    // outgoing derivative -(C'(L)u + S'(L)u')
                    let ep = &endpoints[bond.edge];
                    sink(r, c0, a1[(i, j)] * ep.c - a2[(i, j)] * ep.dc);
                    sink(r, c0 + 1, a1[(i, j)] * ep.s - a2[(i, j)] * ep.ds);
                }
            }
        }
    }
}

fn dense_matrix(q: &QuantumGraph, endpoints: &[FundEntry], ord: &SecularOrdering) -> DMatrix<C64> {
    let mut m = DMatrix::<C64>::zeros(ord.n, ord.n);
    assemble_into(q, endpoints, ord, &mut |r, c, v| m[(r, c)] += v);
    m
}

/// Smallest-singular-value estimate through a banded LU and a few inverse
/// iterations on `M M^H`. Exact enough to locate dips; the refined points are
/// re-examined densely.
fn sigma_min_banded(q: &QuantumGraph, endpoints: &[FundEntry], ord: &SecularOrdering) -> f64 {
    let mut m = BandedMatrix::zeros(ord.n, ord.kl, ord.ku);
    assemble_into(q, endpoints, ord, &mut |r, c, v| m.add(r, c, v));
    let adj = m.adjoint();
    let (lu, lu_h) = match (m.clone().lu(), adj.lu()) {
        (Some(a), Some(b)) => (a, b),
        _ => return 0.0,
    };
    // deterministic start vector with all components active
    let mut v: Vec<C64> = (0..ord.n)
        .map(|i| {
            let t = i as f64 + 1.0;
            C64::new((1.3 * t).sin(), (0.7 * t).cos())
        })
        .collect();
    normalize(&mut v);
    for _ in 0..3 {
        lu_h.solve(&mut v);
        lu.solve(&mut v);
        if !normalize(&mut v) {
            return 0.0;
        }
    }
    // v approximates the left singular vector of sigma_min
    let w = m.mul_vec(&v);
    w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [C64]) -> bool {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if !n.is_finite() || n == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    true
}

#[derive(Clone, Copy, Debug)]
pub struct Eigenvalue {
    pub lambda: f64,
    pub multiplicity: usize,
    pub sigma_min: f64,
    /// Set when the singular values below the multiplicity threshold are
    /// spread over several orders of magnitude, suggesting a near-degenerate
    /// pair merged at the scan resolution rather than an exact degeneracy.
    pub merged_risk: bool,
}

/// One eigenfunction: per canonical edge the coefficients `(a, b)` of
/// `a C + b S`, normalized in the half-weighted bond measure (each undirected
/// edge counted once).
#[derive(Clone, Debug)]
pub struct Eigenfunction {
    pub lambda: f64,
    pub coeffs: Vec<(C64, C64)>,
}

impl Eigenfunction {
    /// Values on edge `e` (canonical coordinate) at sorted points `xs`.
    pub fn eval(&self, q: &QuantumGraph, e: EdgeId, xs: &[f64]) -> Result<Vec<C64>> {
        let sols = fund_at(q.edge_data(e), false, C64::new(self.lambda, 0.0), xs)?;
        let (a, b) = self.coeffs[e];
        Ok(sols.iter().map(|f| a * f.c + b * f.s).collect())
    }
}

#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<Eigenvalue>,
    /// One entry per eigenvalue, holding `multiplicity` orthonormal functions;
    /// empty when eigenfunctions were not requested.
    pub eigenfunctions: Vec<Vec<Eigenfunction>>,
    pub lambda_min_scan: f64,
    pub lambda_max: f64,
    pub total_length: f64,
}

impl SpectralData {
    /// Eigenvalue count `N(lambda)` with multiplicity.
    pub fn count_up_to(&self, lambda: f64) -> usize {
        self.eigenvalues.iter().filter(|e| e.lambda <= lambda).map(|e| e.multiplicity).sum()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ScanOptions {
    /// Scan grid spacing; default `(pi / L)^2 / 8`.
    pub resolution: Option<f64>,
    pub compute_eigenfunctions: bool,
    /// Route the scan through the banded estimator regardless of size (used
    /// to cross-validate the two paths).
    pub force_banded: bool,
}

pub fn eigenvalues_up_to(q: &QuantumGraph, lambda_max: f64, opts: ScanOptions) -> Result<SpectralData> {
    assert!(lambda_max > 0.0);
    let total = q.total_length();
    // capped so short graphs keep interior grid points below the lowest
    // eigenvalue (lambda_min carries a margin of 1)
    let base = opts
        .resolution
        .unwrap_or(((std::f64::consts::PI / total).powi(2) / 8.0).min(0.5));
    let mut last_err = None;
    for attempt in 0..2 {
        let resolution = base / 4.0_f64.powi(attempt);
        let sd = scan(q, lambda_max, resolution, &opts)?;
        // Weyl bracket; a miss indicates merged dips at this resolution
        let n = sd.count_up_to(lambda_max) as f64;
        let weyl = total * lambda_max.sqrt() / std::f64::consts::PI;
        let slack = (q.graph().vertex_count() + q.graph().edge_count()) as f64;
        if (n - weyl).abs() <= slack {
            return Ok(sd);
        }
        last_err = Some(Error::Numerical(format!(
            "eigenvalue count {n} outside Weyl bracket {weyl:.2} +- {slack}; increase resolution"
        )));
    }
    Err(last_err.expect("two attempts"))
}

fn scan(q: &QuantumGraph, lambda_max: f64, resolution: f64, opts: &ScanOptions) -> Result<SpectralData> {
    let ord = SecularOrdering::new(q);
    let total = q.total_length();
    // lower scan bound catching negative eigenvalues from potentials and
    // Robin terms
    let g = q.graph();
    let robin = (0..g.vertex_count())
        .map(|v| g.degree(v) as f64 * q.condition(v).boundary().lambda_norm)
        .fold(0.0_f64, f64::max);
    let len_min = (0..g.edge_count()).map(|e| q.edge_data(e).length).fold(f64::INFINITY, f64::min);
    // form bound via the trace inequality |f(v)|^2 <= eps |f'|^2 + (1/eps +
    // 2/l) |f|^2 per incident edge; on short edges the coupling scales like
    // robin / l, not robin^2
    let lambda_min = -(q.potential_sup() + 4.0 * robin * robin + 6.0 * robin / len_min + 1.0);
    let count = ((lambda_max - lambda_min) / resolution).ceil() as usize + 2;
    let grid: Vec<f64> = (0..count).map(|i| lambda_min + i as f64 * resolution).collect();

    let use_dense = ord.n <= DENSE_SCAN_LIMIT && !opts.force_banded;
    let sigma_at = |lambda: f64| -> Result<f64> {
        let endpoints = endpoints_at(q, C64::new(lambda, 0.0))?;
        if use_dense {
            let sv = dense_matrix(q, &endpoints, &ord).singular_values();
            Ok(sv[sv.len() - 1])
        } else {
            Ok(sigma_min_banded(q, &endpoints, &ord))
        }
    };

    let sigmas: Vec<f64> =
        grid.par_iter().map(|&l| sigma_at(l)).collect::<Result<Vec<_>>>()?;

    // strict-on-the-left local minima
    let mut dips = Vec::new();
    for i in 1..count - 1 {
        if sigmas[i] < sigmas[i - 1] && sigmas[i] <= sigmas[i + 1] {
            dips.push(i);
        }
    }

    let mut refined: Vec<(f64, Vec<f64>, DMatrix<C64>)> = dips
        .par_iter()
        .map(|&i| -> Result<Vec<(f64, Vec<f64>, DMatrix<C64>)>> {
            // a dip may stand for several roots split by less than the grid
            // spacing, and the sampled minimum can sit a full cell away from
            // the cluster; re-sample 2.5 steps to each side on a fine grid
            let a = grid[i] - 2.5 * resolution;
            let b = grid[i] + 2.5 * resolution;
            let sub = 40usize;
            let h = (b - a) / sub as f64;
            let subs: Vec<f64> = (0..=sub).map(|j| a + j as f64 * h).collect();
            let vals: Vec<f64> =
                subs.iter().map(|&l| sigma_at(l)).collect::<Result<Vec<_>>>()?;
            let mut found = Vec::new();
            for j in 1..subs.len() - 1 {
                if !(vals[j] < vals[j - 1] && vals[j] <= vals[j + 1]) {
                    continue;
                }
                let tol = 1e-10 * (1.0 + subs[j].abs());
                let (lam, _) = golden_min(
                    |l| sigma_at(l).unwrap_or(f64::INFINITY),
                    subs[j - 1],
                    subs[j + 1],
                    tol,
                );
                let endpoints = endpoints_at(q, C64::new(lam, 0.0))?;
                let m = dense_matrix(q, &endpoints, &ord);
                let sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
                if *sv.last().unwrap() < MULT_TOL {
                    found.push((lam, sv, m));
                }
            }
            Ok(found)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    // padded brackets overlap, so order before deduplicating
    refined.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut eigenvalues: Vec<Eigenvalue> = Vec::new();
    let mut eigenfunctions: Vec<Vec<Eigenfunction>> = Vec::new();
    for (lam, sv, m) in refined {
        if lam > lambda_max + 1e-9 * (1.0 + lambda_max) {
            continue;
        }
        // deduplicate dips refining to the same point
        if let Some(last) = eigenvalues.last() {
            if (lam - last.lambda).abs() < 1e-8 * (1.0 + lam.abs()) {
                continue;
            }
        }
        let sigma_min = *sv.last().unwrap();
        let below: Vec<f64> = sv.iter().copied().filter(|&s| s < MULT_TOL).collect();
        let multiplicity = below.len();
        let spread = below.first().map_or(false, |&s| sigma_min > 0.0 && s > 1e3 * sigma_min);
        let near_threshold = sv.iter().any(|&s| s >= MULT_TOL && s < 10.0 * MULT_TOL);
        let ev = Eigenvalue {
            lambda: lam,
            multiplicity,
            sigma_min,
            merged_risk: (multiplicity > 1 && spread) || near_threshold,
        };
        eigenvalues.push(ev);
        if opts.compute_eigenfunctions {
            eigenfunctions.push(extract_eigenfunctions(q, &ord, lam, multiplicity, &m)?);
        }
    }
    Ok(SpectralData {
        eigenvalues,
        eigenfunctions,
        lambda_min_scan: lambda_min,
        lambda_max,
        total_length: total,
    })
}

/// Simpson weights on the uniform grid of `n` points (n odd) over `[0, len]`.
fn simpson_weights(n: usize, len: f64) -> Vec<f64> {
    debug_assert!(n >= 3 && n % 2 == 1);
    let h = len / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

fn extract_eigenfunctions(
    q: &QuantumGraph,
    ord: &SecularOrdering,
    lambda: f64,
    multiplicity: usize,
    m: &DMatrix<C64>,
) -> Result<Vec<Eigenfunction>> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut idx: Vec<usize> = (0..ord.n).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
    let n_edges = q.graph().edge_count();
    let mut raw: Vec<Vec<(C64, C64)>> = Vec::new();
    for &k in idx.iter().take(multiplicity) {
        let row = v_t.row(k);
        let mut coeffs = vec![(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); n_edges];
        for (rank, &e) in ord.edge_of_rank.iter().enumerate() {
            coeffs[e] = (row[2 * rank].conj(), row[2 * rank + 1].conj());
        }
        raw.push(coeffs);
    }
    // sample every candidate on a per-edge Simpson grid for the L2 geometry
    let z = C64::new(lambda, 0.0);
    let mut samples: Vec<Vec<C64>> = vec![Vec::new(); multiplicity];
    let mut weights: Vec<f64> = Vec::new();
    for e in 0..n_edges {
        let len = q.edge_data(e).length;
        let xs: Vec<f64> = (0..N_GRID).map(|i| len * i as f64 / (N_GRID - 1) as f64).collect();
        let sols = fund_at(q.edge_data(e), false, z, &xs)?;
        weights.extend(simpson_weights(N_GRID, len));
        for (s, coeffs) in samples.iter_mut().zip(&raw) {
            let (a, b) = coeffs[e];
            s.extend(sols.iter().map(|f| a * f.c + b * f.s));
        }
    }
    // modified Gram-Schmidt in the sampled inner product, applied to the
    // coefficient vectors in lockstep
    let mut out: Vec<Eigenfunction> = Vec::new();
    for k in 0..multiplicity {
        let mut coeffs = raw[k].clone();
        let mut vals = samples[k].clone();
        for prev in &out {
            let prev_vals = &samples_of(prev, q, z)?;
            let ip: C64 = prev_vals
                .iter()
                .zip(&vals)
                .zip(&weights)
                .map(|((p, v), &w)| w * p.conj() * v)
                .sum();
            for e in 0..n_edges {
                coeffs[e].0 -= ip * prev.coeffs[e].0;
                coeffs[e].1 -= ip * prev.coeffs[e].1;
            }
            for (v, p) in vals.iter_mut().zip(prev_vals) {
                *v -= ip * p;
            }
        }
        let norm: f64 =
            vals.iter().zip(&weights).map(|(v, &w)| w * v.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return Err(Error::Numerical(format!(
                "eigenfunction candidate at lambda = {lambda} collapsed during orthonormalization"
            )));
        }
        for c in coeffs.iter_mut() {
            c.0 /= norm;
            c.1 /= norm;
        }
        out.push(Eigenfunction { lambda, coeffs });
    }
    Ok(out)
}

fn samples_of(f: &Eigenfunction, q: &QuantumGraph, z: C64) -> Result<Vec<C64>> {
    let mut vals = Vec::new();
    for e in 0..q.graph().edge_count() {
        let len = q.edge_data(e).length;
        let xs: Vec<f64> = (0..N_GRID).map(|i| len * i as f64 / (N_GRID - 1) as f64).collect();
        let sols = fund_at(q.edge_data(e), false, z, &xs)?;
        let (a, b) = f.coeffs[e];
        vals.extend(sols.iter().map(|s| a * s.c + b * s.s));
    }
    Ok(vals)
}

/// The empirical spectral measure `(1/L) sum_k delta_{lambda_k}`.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<(f64, usize)>,
    pub total_length: f64,
}

pub fn empirical_measure(sd: &SpectralData) -> EmpiricalMeasure {
    EmpiricalMeasure {
        atoms: sd.eigenvalues.iter().map(|e| (e.lambda, e.multiplicity)).collect(),
        total_length: sd.total_length,
    }
}

impl EmpiricalMeasure {
    pub fn evaluate<F: Fn(f64) -> f64>(&self, chi: F) -> f64 {
        self.atoms.iter().map(|&(l, m)| m as f64 * chi(l)).sum::<f64>() / self.total_length
    }

    /// `mu([lambda_min_scan, lambda])`.
    pub fn mass_up_to(&self, lambda: f64) -> f64 {
        self.atoms.iter().filter(|&&(l, _)| l <= lambda).map(|&(_, m)| m as f64).sum::<f64>()
            / self.total_length
    }
}

/// Kernel diagonal of the functional calculus:
/// `chi(H)(x0, x0) = sum_k chi(lambda_k) |psi_k(x0)|^2`.
///
/// `x0 = (edge, x)` must lie strictly inside its edge.
pub fn functional_calculus_kernel<F: Fn(f64) -> f64>(
    q: &QuantumGraph,
    sd: &SpectralData,
    chi: F,
    x0: (EdgeId, f64),
) -> Result<f64> {
    let (e, x) = x0;
    let len = q.edge_data(e).length;
    if x <= 0.0 || x >= len {
        return Err(Error::BoundViolation(format!(
            "evaluation point x = {x} is not interior to edge {e} (length {len})"
        )));
    }
    if sd.eigenfunctions.len() != sd.eigenvalues.len() {
        return Err(Error::Numerical("eigenfunctions were not computed".into()));
    }
    let mut acc = 0.0;
    for funcs in &sd.eigenfunctions {
        for f in funcs {
            let w = chi(f.lambda);
            if w != 0.0 {
                let v = f.eval(q, e, &[x])?[0];
                acc += w * v.norm_sqr();
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{ConditionKind, VertexCondition};
    use crate::graph::CombinatorialGraph;

    fn interval(length: f64, kind: ConditionKind) -> QuantumGraph {
        let g = CombinatorialGraph::new(2, vec![(0, 1)]).unwrap();
        let conds = vec![VertexCondition::named(kind.clone(), 1), VertexCondition::named(kind, 1)];
        QuantumGraph::new(g, vec![crate::graph::EdgeData::free(length)], conds, None).unwrap()
    }

    fn equilateral(g: CombinatorialGraph, length: f64) -> QuantumGraph {
        let conds = (0..g.vertex_count())
            .map(|v| VertexCondition::named(ConditionKind::Kirchhoff, g.degree(v)))
            .collect();
        let data = vec![crate::graph::EdgeData::free(length); g.edge_count()];
        QuantumGraph::new(g, data, conds, None).unwrap()
    }

    #[test]
    fn dirichlet_interval_spectrum() {
        let q = interval(std::f64::consts::PI, ConditionKind::Dirichlet);
        let sd = eigenvalues_up_to(&q, 100.0, ScanOptions::default()).unwrap();
        let lambdas: Vec<f64> = sd.eigenvalues.iter().map(|e| e.lambda).collect();
        assert_eq!(lambdas.len(), 10);
        for (k, l) in lambdas.iter().enumerate() {
            let exact = ((k + 1) * (k + 1)) as f64;
            assert!((l - exact).abs() / exact < 1e-8, "k={k} lambda={l}");
            assert_eq!(sd.eigenvalues[k].multiplicity, 1);
        }
    }

    #[test]
    fn neumann_interval_spectrum() {
        let q = interval(std::f64::consts::PI, ConditionKind::Neumann);
        let sd = eigenvalues_up_to(&q, 50.0, ScanOptions::default()).unwrap();
        let lambdas: Vec<f64> = sd.eigenvalues.iter().map(|e| e.lambda).collect();
        assert_eq!(lambdas.len(), 8);
        for (k, l) in lambdas.iter().enumerate() {
            let exact = (k * k) as f64;
            assert!((l - exact).abs() < 1e-7 * (1.0 + exact), "k={k} lambda={l}");
        }
    }

    #[test]
    fn secular_nullspace_dimensions() {
        let q = interval(std::f64::consts::PI, ConditionKind::Dirichlet);
        let off = secular_matrix(&q, 2.5).unwrap();
        assert!(off.sigma_min() > 1e-3);
        let on = secular_matrix(&q, 4.0).unwrap();
        let sv = on.singular_values();
        assert!(*sv.last().unwrap() < 1e-10);
        assert!(sv[sv.len() - 2] > 1e-3);
    }

    #[test]
    fn cycle_multiplicity_two() {
        // C3 equilateral Kirchhoff at lambda = (2 pi / 3)^2: two-dimensional
        let g = CombinatorialGraph::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let q = equilateral(g, 1.0);
        let lam = (2.0 * std::f64::consts::PI / 3.0).powi(2);
        let sys = secular_matrix(&q, lam).unwrap();
        let sv = sys.singular_values();
        let below = sv.iter().filter(|&&s| s < MULT_TOL).count();
        assert_eq!(below, 2);

        let sd = eigenvalues_up_to(&q, 10.0, ScanOptions::default()).unwrap();
        let hit = sd
            .eigenvalues
            .iter()
            .find(|e| (e.lambda - lam).abs() < 1e-6)
            .expect("eigenvalue found");
        assert_eq!(hit.multiplicity, 2);
    }

    #[test]
    fn cycle_c4_against_closed_form() {
        // lambda = (2 pi k / 4)^2 with multiplicity 2, plus 0
        let g = CombinatorialGraph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let q = equilateral(g, 1.0);
        let sd = eigenvalues_up_to(&q, 30.0, ScanOptions::default()).unwrap();
        let mut expect: Vec<(f64, usize)> = vec![(0.0, 1)];
        for k in 1..=3 {
            let l = (2.0 * std::f64::consts::PI * k as f64 / 4.0).powi(2);
            if l <= 30.0 {
                expect.push((l, 2));
            }
        }
        assert_eq!(sd.eigenvalues.len(), expect.len());
        for (got, want) in sd.eigenvalues.iter().zip(&expect) {
            assert!((got.lambda - want.0).abs() < 1e-6 * (1.0 + want.0));
            assert_eq!(got.multiplicity, want.1, "at lambda = {}", want.0);
        }
    }

    #[test]
    fn banded_path_matches_dense() {
        let g = CombinatorialGraph::new(
            10,
            (0..10).map(|i| (i, (i + 1) % 10)).collect(),
        )
        .unwrap();
        let q = equilateral(g, 0.7);
        let dense = eigenvalues_up_to(&q, 20.0, ScanOptions::default()).unwrap();
        let banded = eigenvalues_up_to(
            &q,
            20.0,
            ScanOptions { force_banded: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(dense.eigenvalues.len(), banded.eigenvalues.len());
        for (a, b) in dense.eigenvalues.iter().zip(&banded.eigenvalues) {
            assert!((a.lambda - b.lambda).abs() < 1e-7 * (1.0 + a.lambda.abs()));
            assert_eq!(a.multiplicity, b.multiplicity);
        }
    }

    #[test]
    fn negative_robin_eigenvalue() {
        // delta with alpha < 0 at one end of an interval, Neumann at the
        // other: one bound state at -k^2 with k tanh(k L) = -alpha
        let g = CombinatorialGraph::new(2, vec![(0, 1)]).unwrap();
        let conds = vec![
            VertexCondition::named(ConditionKind::Delta { alpha: -2.0 }, 1),
            VertexCondition::named(ConditionKind::Neumann, 1),
        ];
        let q =
            QuantumGraph::new(g, vec![crate::graph::EdgeData::free(3.0)], conds, None).unwrap();
        let sd = eigenvalues_up_to(&q, 1.0, ScanOptions::default()).unwrap();
        let neg: Vec<&Eigenvalue> =
            sd.eigenvalues.iter().filter(|e| e.lambda < 0.0).collect();
        assert_eq!(neg.len(), 1);
        // bisection oracle for k tanh(3k) = 2
        let f = |k: f64| k * (3.0 * k).tanh() - 2.0;
        let (mut a, mut b) = (1.0_f64, 3.0_f64);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if f(a) * f(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        let k = 0.5 * (a + b);
        assert!((neg[0].lambda + k * k).abs() < 1e-6, "lambda = {}", neg[0].lambda);
    }

    #[test]
    fn eigenfunction_norms_and_residuals() {
        let g = CombinatorialGraph::new(4, vec![(0, 1), (0, 2), (0, 3)]).unwrap();
        let mut conds = vec![VertexCondition::named(ConditionKind::Kirchhoff, 3)];
        conds.extend((0..3).map(|_| VertexCondition::named(ConditionKind::Dirichlet, 1)));
        let data = vec![crate::graph::EdgeData::free(1.0); 3];
        let q = QuantumGraph::new(g, data, conds, None).unwrap();
        let sd = eigenvalues_up_to(
            &q,
            40.0,
            ScanOptions { compute_eigenfunctions: true, ..Default::default() },
        )
        .unwrap();
        assert!(!sd.eigenvalues.is_empty());
        for (ev, funcs) in sd.eigenvalues.iter().zip(&sd.eigenfunctions) {
            assert_eq!(funcs.len(), ev.multiplicity);
            let sys = secular_matrix(&q, ev.lambda).unwrap();
            for f in funcs {
                // norm
                let z = C64::new(ev.lambda, 0.0);
                let vals = samples_of(f, &q, z).unwrap();
                let mut weights = Vec::new();
                for e in 0..3 {
                    weights.extend(simpson_weights(N_GRID, q.edge_data(e).length));
                }
                let norm: f64 =
                    vals.iter().zip(&weights).map(|(v, &w)| w * v.norm_sqr()).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-8);
                // secular residual of the coefficient vector
                let ord = SecularOrdering::new(&q);
                let mut vec = nalgebra::DVector::<C64>::zeros(ord.n);
                for (rank, &e) in ord.edge_of_rank.iter().enumerate() {
                    vec[2 * rank] = f.coeffs[e].0;
                    vec[2 * rank + 1] = f.coeffs[e].1;
                }
                let res = (&sys.matrix * &vec).norm() / vec.norm();
                assert!(res < 1e-8, "residual {res}");
            }
        }
    }

    #[test]
    fn kernel_diagonal_dirichlet_interval() {
        // chi picking out lambda = 1: chi(H)(x, x) = (2/pi) sin^2 x
        let q = interval(std::f64::consts::PI, ConditionKind::Dirichlet);
        let sd = eigenvalues_up_to(
            &q,
            20.0,
            ScanOptions { compute_eigenfunctions: true, ..Default::default() },
        )
        .unwrap();
        let chi = |l: f64| if (l - 1.0).abs() < 0.5 { 1.0 } else { 0.0 };
        for &x in &[0.3, 1.0, 2.5] {
            let v = functional_calculus_kernel(&q, &sd, chi, (0, x)).unwrap();
            let exact = 2.0 / std::f64::consts::PI * x.sin().powi(2);
            assert!((v - exact).abs() < 1e-7, "x={x} v={v} exact={exact}");
        }
        assert!(functional_calculus_kernel(&q, &sd, chi, (0, 0.0)).is_err());
    }

    #[test]
    fn kernel_trace_matches_direct_sum() {
        let g = CombinatorialGraph::new(4, vec![(0, 1), (0, 2), (0, 3)]).unwrap();
        let mut conds = vec![VertexCondition::named(ConditionKind::Kirchhoff, 3)];
        conds.extend((0..3).map(|_| VertexCondition::named(ConditionKind::Neumann, 1)));
        let data = vec![crate::graph::EdgeData::free(1.0); 3];
        let q = QuantumGraph::new(g, data, conds, None).unwrap();
        let sd = eigenvalues_up_to(
            &q,
            30.0,
            ScanOptions { compute_eigenfunctions: true, ..Default::default() },
        )
        .unwrap();
        let chi = |l: f64| (-(l - 5.0) * (l - 5.0) / 40.0).exp();
        let direct: f64 = sd
            .eigenvalues
            .iter()
            .map(|e| e.multiplicity as f64 * chi(e.lambda))
            .sum();
        // integrate the kernel diagonal over the graph; the kernel extends
        // continuously to the endpoints, so nudge those nodes inward
        let mut integral = 0.0;
        for e in 0..3 {
            let len = q.edge_data(e).length;
            let ws = simpson_weights(N_GRID, len);
            for i in 0..N_GRID {
                let x = (len * i as f64 / (N_GRID - 1) as f64).clamp(1e-9, len - 1e-9);
                integral += ws[i] * functional_calculus_kernel(&q, &sd, chi, (e, x)).unwrap();
            }
        }
        assert!((integral - direct).abs() < 1e-6, "integral={integral} direct={direct}");
    }

    #[test]
    fn empirical_measure_interval() {
        let q = interval(std::f64::consts::PI, ConditionKind::Dirichlet);
        let sd = eigenvalues_up_to(&q, 20.0, ScanOptions::default()).unwrap();
        let mu = empirical_measure(&sd);
        let v = mu.evaluate(|l| if l <= 10.0 { 1.0 } else { 0.0 });
        assert!((v - 3.0 / std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(mu.evaluate(|_| 0.0), 0.0);
        assert!((mu.mass_up_to(10.0) - v).abs() < 1e-15);
    }

    #[test]
    fn kernel_monotone_and_additive() {
        let q = interval(std::f64::consts::PI, ConditionKind::Dirichlet);
        let sd = eigenvalues_up_to(
            &q,
            30.0,
            ScanOptions { compute_eigenfunctions: true, ..Default::default() },
        )
        .unwrap();
        let chi1 = |l: f64| (-l / 10.0).exp();
        let chi2 = |l: f64| (-l / 5.0).exp();
        let x0 = (0usize, 1.1);
        let a = functional_calculus_kernel(&q, &sd, chi1, x0).unwrap();
        let b = functional_calculus_kernel(&q, &sd, chi2, x0).unwrap();
        let sum = functional_calculus_kernel(&q, &sd, |l| chi1(l) + chi2(l), x0).unwrap();
        assert!(a >= b); // chi1 >= chi2 pointwise on [0, inf)
        assert!((sum - (a + b)).abs() < 1e-12);
    }

    #[test]
    fn secular_entries_continuous_in_lambda() {
        let g = CombinatorialGraph::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let q = equilateral(g, 1.0);
        let h = 1e-6;
        let m0 = secular_matrix(&q, 7.0).unwrap().matrix;
        let m1 = secular_matrix(&q, 7.0 + h).unwrap().matrix;
        let diff = (&m1 - &m0).norm();
        assert!(diff < 1e-4, "secular matrix jump {diff}");
    }
}
