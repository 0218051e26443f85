//! Generators for the example families, random N-lifts, and the desk-scale
//! Benjamini-Schramm convergence experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conditions::{ConditionKind, VertexCondition};
use crate::graph::{CombinatorialGraph, EdgeData, QuantumGraph};
use crate::linalg::gauss_legendre_on;
use crate::spectral::{eigenvalues_up_to, empirical_measure, ScanOptions};
use crate::{Error, Result};

/// Graph family of an ensemble; the size parameter comes in at generation.
#[derive(Clone, Debug)]
pub enum Family {
    /// Cycle C_N.
    Cycle,
    /// Path with N edges; Neumann at the two ends.
    Interval,
    /// Star with N legs.
    Star,
    /// Complete graph K_N.
    Complete,
    /// Equilateral version of a given combinatorial graph.
    EquilateralFromDiscrete(CombinatorialGraph),
}

#[derive(Clone, Copy, Debug)]
pub enum LengthLaw {
    Fixed(f64),
    /// Iid uniform on `[lo, hi]`.
    Iid { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug)]
pub enum ConditionLaw {
    Kirchhoff,
    Delta { alpha: f64 },
    /// Iid uniform coupling on `[-bound, bound]` at every interior vertex.
    IidDelta { bound: f64 },
}

#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub family: Family,
    pub lengths: LengthLaw,
    pub conditions: ConditionLaw,
    pub seed: u64,
}

impl LengthLaw {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            LengthLaw::Fixed(l) => l,
            LengthLaw::Iid { lo, hi } => rng.gen_range(lo..=hi),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            LengthLaw::Fixed(l) => (l, l),
            LengthLaw::Iid { lo, hi } => (lo, hi),
        }
    }
}

impl ConditionLaw {
    fn sample<R: Rng>(&self, rng: &mut R, degree: usize) -> VertexCondition {
        match *self {
            ConditionLaw::Kirchhoff => VertexCondition::named(ConditionKind::Kirchhoff, degree),
            ConditionLaw::Delta { alpha } => {
                VertexCondition::named(ConditionKind::Delta { alpha }, degree)
            }
            ConditionLaw::IidDelta { bound } => VertexCondition::named(
                ConditionKind::Delta { alpha: rng.gen_range(-bound..=bound) },
                degree,
            ),
        }
    }
}

fn family_graph(family: &Family, n: usize) -> Result<CombinatorialGraph> {
    match family {
        Family::Cycle => {
            if n < 3 {
                return Err(Error::InvalidGraph(format!("cycle needs N >= 3, got {n}")));
            }
            CombinatorialGraph::new(n, (0..n).map(|i| (i, (i + 1) % n)).collect())
        }
        Family::Interval => {
            if n < 1 {
                return Err(Error::InvalidGraph("interval needs N >= 1".into()));
            }
            CombinatorialGraph::new(n + 1, (0..n).map(|i| (i, i + 1)).collect())
        }
        Family::Star => {
            if n < 1 {
                return Err(Error::InvalidGraph("star needs N >= 1".into()));
            }
            CombinatorialGraph::new(n + 1, (1..=n).map(|i| (0, i)).collect())
        }
        Family::Complete => {
            if n < 2 {
                return Err(Error::InvalidGraph(format!("complete graph needs N >= 2, got {n}")));
            }
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    edges.push((u, v));
                }
            }
            CombinatorialGraph::new(n, edges)
        }
        Family::EquilateralFromDiscrete(g) => Ok(g.clone()),
    }
}

/// Builds a concrete quantum graph of size `n`; deterministic under the
/// spec's seed. Degree-1 vertices get Neumann conditions, the rest follow the
/// condition law.
pub fn generate(spec: &EnsembleSpec, n: usize) -> Result<QuantumGraph> {
    let g = family_graph(&spec.family, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = (0..g.edge_count())
        .map(|_| EdgeData::free(spec.lengths.sample(&mut rng)))
        .collect();
    let conds = (0..g.vertex_count())
        .map(|v| {
            let d = g.degree(v);
            if d == 1 {
                VertexCondition::named(ConditionKind::Neumann, 1)
            } else {
                spec.conditions.sample(&mut rng, d)
            }
        })
        .collect();
    QuantumGraph::new(g, data, conds, None)
}

/// Random N-lift: vertex set V x {1..N}, each base edge wired through a
/// uniformly random permutation; data and conditions are copied to every
/// lift. Resamples the permutations until the lift is connected (up to 100
/// tries).
pub fn n_lift(base: &QuantumGraph, n: usize, seed: u64) -> Result<QuantumGraph> {
    if n == 0 {
        return Err(Error::InvalidGraph("lift degree must be positive".into()));
    }
    let g = base.graph();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let mut edges = Vec::with_capacity(g.edge_count() * n);
        for e in 0..g.edge_count() {
            let (u, v) = g.edge(e);
            let mut perm: Vec<usize> = (0..n).collect();
            // Fisher-Yates
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            for (i, &pi) in perm.iter().enumerate() {
                edges.push((u * n + i, v * n + pi));
            }
        }
        let lifted = CombinatorialGraph::new(g.vertex_count() * n, edges)?;
        if !lifted.is_connected() {
            continue;
        }
        let mut data = Vec::with_capacity(g.edge_count() * n);
        for e in 0..g.edge_count() {
            for _ in 0..n {
                data.push(base.edge_data(e).clone());
            }
        }
        let conds = (0..lifted.vertex_count())
            .map(|vc| base.condition(vc / n).clone())
            .collect();
        return QuantumGraph::new(lifted, data, conds, None);
    }
    Err(Error::InvalidGraph(format!("no connected {n}-lift found in 100 tries")))
}

/// Injectivity radius of `v`: the largest r whose metric r-ball around `v` is
/// a tree. An edge (u, w) lies inside the ball exactly when
/// d(u) + d(w) + 1 <= 2r; induced chords outside the ball do not count.
pub fn injectivity_radius(g: &CombinatorialGraph, v: usize, r_max: usize) -> usize {
    let dist = g.distances(v);
    let mut rho = 0;
    for r in 1..=r_max {
        let verts = dist.iter().filter(|&&d| d <= r).count();
        let edges = (0..g.edge_count())
            .filter(|&e| {
                let (u, w) = g.edge(e);
                dist[u].saturating_add(dist[w]).saturating_add(1) <= 2 * r
            })
            .count();
        if edges + 1 == verts {
            rho = r;
        } else {
            break;
        }
    }
    rho
}

/// `profile[r - 1]` = fraction of vertices with injectivity radius `< r`,
/// for r = 1..=r_max.
pub fn injectivity_profile(g: &CombinatorialGraph, r_max: usize) -> Vec<f64> {
    let n = g.vertex_count();
    let radii: Vec<usize> = (0..n).map(|v| injectivity_radius(g, v, r_max)).collect();
    (1..=r_max)
        .map(|r| radii.iter().filter(|&&rho| rho < r).count() as f64 / n as f64)
        .collect()
}

/// Test functions for spectral-measure comparisons.
#[derive(Clone, Copy, Debug)]
pub enum ChiFn {
    /// Smooth bump `exp(1 - 1/(1-t^2))` rescaled to `[a, b]`, zero outside.
    Bump { a: f64, b: f64 },
    /// Indicator of `[a, b]`.
    Indicator { a: f64, b: f64 },
}

impl ChiFn {
    /// Parses descriptors of the form `bump:a:b` or `indicator:a:b`.
    pub fn parse(desc: &str) -> Result<Self> {
        let parts: Vec<&str> = desc.split(':').collect();
        let bad = || Error::Format(format!("bad test-function descriptor '{desc}'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[1].parse().map_err(|_| bad())?;
        let b: f64 = parts[2].parse().map_err(|_| bad())?;
        if !(a < b) {
            return Err(bad());
        }
        match parts[0] {
            "bump" => Ok(ChiFn::Bump { a, b }),
            "indicator" => Ok(ChiFn::Indicator { a, b }),
            _ => Err(bad()),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            ChiFn::Bump { a, b } | ChiFn::Indicator { a, b } => (a, b),
        }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        match *self {
            ChiFn::Bump { a, b } => {
                let t = (2.0 * lambda - a - b) / (b - a);
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - t * t)).exp()
                }
            }
            ChiFn::Indicator { a, b } => {
                if (a..=b).contains(&lambda) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One row of a convergence experiment.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Empirical spectral measure applied to chi.
    pub esm: f64,
    pub limit: f64,
    pub gap: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub enum LimitMode {
    /// Closed-form limit density, available for the fixed-length Kirchhoff
    /// cycle family (free line: `(1/pi) (2 sqrt(lambda))^{-1} dlambda`).
    Analytic,
    /// Empirical measure of a single much larger graph of the same family.
    Truncation { size: usize },
}

fn esm_of(q: &QuantumGraph, chi: &ChiFn) -> Result<f64> {
    let (_, b) = chi.support();
    // a 4x coarser grid than the scan default: measure evaluation does not
    // need the last digits of every eigenvalue, and large ensembles dominate
    // the experiment's runtime; the Weyl recheck still guards undercounting
    let resolution = ((std::f64::consts::PI / q.total_length()).powi(2) / 2.0).min(0.5);
    let opts = ScanOptions { resolution: Some(resolution), ..ScanOptions::default() };
    // the scan window always reaches down to the negative spectral bound, so
    // a non-positive support upper end only needs a token positive cutoff
    let sd = eigenvalues_up_to(q, b.max(1e-9), opts)?;
    Ok(empirical_measure(&sd).evaluate(|l| chi.eval(l)))
}

fn analytic_limit(spec: &EnsembleSpec, chi: &ChiFn) -> Result<f64> {
    match (&spec.family, spec.lengths, spec.conditions) {
        (Family::Cycle, LengthLaw::Fixed(_), ConditionLaw::Kirchhoff) => {
            let (a, b) = chi.support();
            let lo = a.max(0.0);
            if b <= lo {
                return Ok(0.0);
            }
            // integrable singularity at 0 never enters for the supported
            // windows; composite rule for safety
            let mut acc = 0.0;
            let panels = 64;
            for p in 0..panels {
                let pa = lo + (b - lo) * p as f64 / panels as f64;
                let pb = lo + (b - lo) * (p + 1) as f64 / panels as f64;
                let (xs, ws) = gauss_legendre_on(12, pa, pb);
                for (&x, &w) in xs.iter().zip(&ws) {
                    acc += w * chi.eval(x) / (2.0 * x.sqrt());
                }
            }
            Ok(acc / std::f64::consts::PI)
        }
        _ => Err(Error::Numerical(
            "no analytic limit registered for this ensemble".into(),
        )),
    }
}

/// Runs the experiment across `sizes`, returning one row per size.
pub fn convergence_experiment(
    spec: &EnsembleSpec,
    sizes: &[usize],
    chi: &ChiFn,
    mode: LimitMode,
) -> Result<Vec<ConvergenceRow>> {
    assert!(sizes.windows(2).all(|w| w[0] < w[1]), "sizes must increase");
    let limit = match mode {
        LimitMode::Analytic => analytic_limit(spec, chi)?,
        LimitMode::Truncation { size } => esm_of(&generate(spec, size)?, chi)?,
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let esm = esm_of(&generate(spec, n)?, chi)?;
        rows.push(ConvergenceRow { n, esm, limit, gap: (esm - limit).abs(), seed: spec.seed });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kirchhoff_cycles() -> EnsembleSpec {
        EnsembleSpec {
            family: Family::Cycle,
            lengths: LengthLaw::Fixed(1.0),
            conditions: ConditionLaw::Kirchhoff,
            seed: 1,
        }
    }

    #[test]
    fn family_shapes() {
        let c4 = generate(&kirchhoff_cycles(), 4).unwrap();
        assert_eq!(c4.graph().vertex_count(), 4);
        assert_eq!(c4.graph().edge_count(), 4);
        let k4 = generate(
            &EnsembleSpec {
                family: Family::Complete,
                lengths: LengthLaw::Fixed(1.0),
                conditions: ConditionLaw::Kirchhoff,
                seed: 1,
            },
            4,
        )
        .unwrap();
        assert_eq!(k4.graph().edge_count(), 6);
        assert!(generate(
            &EnsembleSpec {
                family: Family::Complete,
                lengths: LengthLaw::Fixed(1.0),
                conditions: ConditionLaw::Kirchhoff,
                seed: 1,
            },
            1,
        )
        .is_err());
    }

    #[test]
    fn iid_lengths_reproducible_and_bounded() {
        let spec = EnsembleSpec {
            family: Family::Star,
            lengths: LengthLaw::Iid { lo: 0.5, hi: 1.5 },
            conditions: ConditionLaw::IidDelta { bound: 1.0 },
            seed: 99,
        };
        let a = generate(&spec, 6).unwrap();
        let b = generate(&spec, 6).unwrap();
        for e in 0..6 {
            let la = a.edge_data(e).length;
            assert_eq!(la, b.edge_data(e).length);
            assert!((0.5..=1.5).contains(&la));
        }
        match (a.condition(0).kind(), b.condition(0).kind()) {
            (ConditionKind::Delta { alpha: x }, ConditionKind::Delta { alpha: y }) => {
                assert_eq!(x, y);
                assert!(x.abs() <= 1.0);
            }
            other => panic!("unexpected conditions {other:?}"),
        }
    }

    #[test]
    fn lift_counts_and_lengths() {
        let base = generate(
            &EnsembleSpec {
                family: Family::Complete,
                lengths: LengthLaw::Fixed(1.0),
                conditions: ConditionLaw::Kirchhoff,
                seed: 5,
            },
            4,
        )
        .unwrap();
        let lift = n_lift(&base, 8, 17).unwrap();
        assert_eq!(lift.graph().vertex_count(), 32);
        assert_eq!(lift.graph().edge_count(), 48);
        for v in 0..32 {
            assert_eq!(lift.graph().degree(v), 3);
        }
        // total length multiplies exactly
        assert_eq!(lift.total_length(), 8.0 * base.total_length());
        for e in 0..lift.graph().edge_count() {
            assert_eq!(lift.edge_data(e).length, base.edge_data(e / 8).length);
        }
        // N = 1 reproduces the base combinatorics
        let one = n_lift(&base, 1, 3).unwrap();
        assert_eq!(one.graph().edges(), base.graph().edges());
    }

    #[test]
    fn injectivity_on_trees_and_cycles() {
        let path = family_graph(&Family::Interval, 5).unwrap();
        assert!(injectivity_profile(&path, 5).iter().all(|&f| f == 0.0));
        for n in [5usize, 8, 9] {
            let c = family_graph(&Family::Cycle, n).unwrap();
            let rho = n.div_ceil(2) - 1;
            for v in 0..n {
                assert_eq!(injectivity_radius(&c, v, n), rho, "C_{n}");
            }
            let prof = injectivity_profile(&c, rho + 1);
            assert!(prof[rho - 1] == 0.0);
            assert!(prof[rho] == 1.0);
        }
    }

    #[test]
    fn chi_descriptors() {
        let bump = ChiFn::parse("bump:1:16").unwrap();
        assert_eq!(bump.eval(0.9), 0.0);
        assert_eq!(bump.eval(16.1), 0.0);
        assert!((bump.eval(8.5) - 1.0).abs() < 1e-15);
        assert!(bump.eval(2.0) > 0.0 && bump.eval(2.0) < 1.0);
        let ind = ChiFn::parse("indicator:0:4").unwrap();
        assert_eq!(ind.eval(4.0), 1.0);
        assert_eq!(ind.eval(4.1), 0.0);
        assert!(ChiFn::parse("bump:3:2").is_err());
        assert!(ChiFn::parse("spike:1:2").is_err());
    }

    #[test]
    fn cycle_esm_approaches_free_line() {
        let spec = kirchhoff_cycles();
        let chi = ChiFn::Bump { a: 1.0, b: 16.0 };
        let rows =
            convergence_experiment(&spec, &[8, 32], &chi, LimitMode::Analytic).unwrap();
        assert!(rows[1].gap < rows[0].gap.max(0.05), "gaps {} {}", rows[0].gap, rows[1].gap);
        // C_N eigenvalues are (2 pi k / N)^2 with multiplicity 2, so the
        // N = 32 empirical value has an explicit oracle
        let mut oracle = chi.eval(0.0) / 32.0;
        for k in 1..200 {
            let l = (2.0 * std::f64::consts::PI * k as f64 / 32.0).powi(2);
            oracle += 2.0 * chi.eval(l) / 32.0;
        }
        assert!((rows[1].esm - oracle).abs() < 1e-6, "esm {} oracle {oracle}", rows[1].esm);
    }

    #[test]
    fn zero_chi_gives_zero_rows() {
        let spec = kirchhoff_cycles();
        let chi = ChiFn::Indicator { a: -3.0, b: -1.0 };
        let rows = convergence_experiment(&spec, &[4, 8], &chi, LimitMode::Analytic).unwrap();
        for r in rows {
            assert_eq!(r.esm, 0.0);
            assert_eq!(r.gap.abs(), r.limit.abs());
        }
    }

    #[test]
    fn k4_von_below_relation() {
        // equilateral Kirchhoff K4: away from Dirichlet-type eigenvalues,
        // cos sqrt(lambda) lies in the scaled adjacency spectrum {1, -1/3}
        let k4 = generate(
            &EnsembleSpec {
                family: Family::Complete,
                lengths: LengthLaw::Fixed(1.0),
                conditions: ConditionLaw::Kirchhoff,
                seed: 0,
            },
            4,
        )
        .unwrap();
        let sd = eigenvalues_up_to(&k4, 60.0, ScanOptions::default()).unwrap();
        assert!(!sd.eigenvalues.is_empty());
        let mut checked = 0;
        for ev in &sd.eigenvalues {
            let s = ev.lambda.max(0.0).sqrt();
            if (s / std::f64::consts::PI - (s / std::f64::consts::PI).round()).abs() < 1e-4 {
                continue;
            }
            let c = s.cos();
            let dev = (c - 1.0).abs().min((c + 1.0 / 3.0).abs());
            assert!(dev < 1e-6, "lambda = {}, cos = {c}", ev.lambda);
            checked += ev.multiplicity;
        }
        assert!(checked >= 4);
    }
}
