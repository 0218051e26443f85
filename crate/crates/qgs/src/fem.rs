//! Independent finite-element discretization of the quadratic form
//! `h[f] = sum_e int (|f'|^2 + W |f|^2) + sum_v <Lambda_v F(v), F(v)>`,
//! used as an oracle against the secular-equation eigenvalues.
//!
//! P1 elements on a uniform per-edge mesh; vertex values are constrained to
//! the boundary space `ker P_D` with the Robin term added on it. Only
//! conditions with a real Dirichlet projection and real `Lambda` are
//! supported, which covers all named families.

use nalgebra::DMatrix;

use crate::graph::QuantumGraph;
use crate::{Error, Result};

/// Real orthonormal basis of `ker P_D` at vertex `v` (columns), or an error
/// when the condition has genuinely complex boundary data.
fn boundary_basis(q: &QuantumGraph, v: usize) -> Result<DMatrix<f64>> {
    let b = q.condition(v).boundary();
    let d = b.p_d.nrows();
    let imag = b.p_d.iter().chain(b.lambda.iter()).fold(0.0_f64, |m, x| m.max(x.im.abs()));
    if imag > 1e-10 {
        return Err(Error::Numerical(format!(
            "vertex {v}: complex boundary data is outside the FEM oracle's scope"
        )));
    }
    let p_d = b.p_d.map(|x| x.re);
    let id = DMatrix::<f64>::identity(d, d);
    let compl = &id - &p_d;
    // orthonormal basis of the range of Id - P_D; the symmetric solver is
    // used because the bidiagonal SVD can misconverge on near-rank-deficient
    // projections, returning mixed-cluster vectors
    let sym = (&compl + compl.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let cols: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut basis = DMatrix::<f64>::zeros(d, cols.len());
    for (t, &i) in cols.iter().enumerate() {
        basis.set_column(t, &eig.eigenvectors.column(i));
    }
    Ok(basis)
}

/// All eigenvalues of the P1 discretization with `n_per_edge` elements per
/// edge, ascending.
pub fn fem_eigenvalues(q: &QuantumGraph, n_per_edge: usize) -> Result<Vec<f64>> {
    if n_per_edge < 4 {
        return Err(Error::Numerical("n_per_edge < 4 is too coarse".into()));
    }
    let g = q.graph();
    let n = n_per_edge;

    // global dof layout: per-vertex boundary coefficients, then per-edge
    // interior nodes
    let mut vertex_base = vec![0usize; g.vertex_count()];
    let mut bases = Vec::with_capacity(g.vertex_count());
    let mut ndof = 0usize;
    for v in 0..g.vertex_count() {
        let basis = boundary_basis(q, v)?;
        vertex_base[v] = ndof;
        ndof += basis.ncols();
        bases.push(basis);
    }
    let mut edge_base = vec![0usize; g.edge_count()];
    for e in 0..g.edge_count() {
        edge_base[e] = ndof;
        ndof += n - 1;
    }

    let mut kmat = DMatrix::<f64>::zeros(ndof, ndof);
    let mut mmat = DMatrix::<f64>::zeros(ndof, ndof);

    // expansion of a mesh node into global dofs
    let node_dofs = |e: usize, i: usize| -> Vec<(usize, f64)> {
        if i == 0 || i == n {
            let b = crate::graph::BondId { edge: e, rev: i != 0 };
            let v = g.origin(b);
            let j = q.beta_index(b);
            let basis = &bases[v];
            (0..basis.ncols()).map(|t| (vertex_base[v] + t, basis[(j, t)])).collect()
        } else {
            vec![(edge_base[e] + i - 1, 1.0)]
        }
    };

    for e in 0..g.edge_count() {
        let data = q.edge_data(e);
        let h = data.length / n as f64;
        for el in 0..n {
            let w_mid = data.potential_canonical((el as f64 + 0.5) * h);
            let k_loc = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
            let m_loc = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
            let dofs = [node_dofs(e, el), node_dofs(e, el + 1)];
            for a in 0..2 {
                for b in 0..2 {
                    for &(ia, ca) in &dofs[a] {
                        for &(ib, cb) in &dofs[b] {
                            kmat[(ia, ib)] += ca * cb * (k_loc[a][b] + w_mid * m_loc[a][b]);
                            mmat[(ia, ib)] += ca * cb * m_loc[a][b];
                        }
                    }
                }
            }
        }
    }

    // Robin term on the boundary coefficients
    for v in 0..g.vertex_count() {
        let basis = &bases[v];
        if basis.ncols() == 0 {
            continue;
        }
        let lam = q.condition(v).boundary().lambda.map(|x| x.re);
        let block = basis.transpose() * lam * basis;
        for s in 0..block.nrows() {
            for t in 0..block.ncols() {
                kmat[(vertex_base[v] + s, vertex_base[v] + t)] += block[(s, t)];
            }
        }
    }

    // reduce K x = lambda M x through the Cholesky factor of M
    let chol = nalgebra::Cholesky::new(mmat)
        .ok_or_else(|| Error::Numerical("FEM mass matrix not positive definite".into()))?;
    let l = chol.l();
    let y = l.solve_lower_triangular(&kmat).expect("L invertible");
    let a = l.solve_lower_triangular(&y.transpose()).expect("L invertible");
    let sym = (&a + a.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(eigs)
}

/// Richardson-extrapolated eigenvalues below `lambda_max`: combines meshes
/// with `n` and `2n` elements per edge to cancel the quadrature's `h^2` term.
pub fn fem_oracle(q: &QuantumGraph, n_per_edge: usize, lambda_max: f64) -> Result<Vec<f64>> {
    let coarse = fem_eigenvalues(q, n_per_edge)?;
    let fine = fem_eigenvalues(q, 2 * n_per_edge)?;
    let mut out = Vec::new();
    for (c, f) in coarse.iter().zip(&fine) {
        let ex = (4.0 * f - c) / 3.0;
        if ex > lambda_max {
            break;
        }
        out.push(ex);
    }
    Ok(out)
}
