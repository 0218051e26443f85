//! Unitary vertex conditions: named families, the boundary matrices
//! `A1 = i(U - Id)`, `A2 = U + Id`, the eigenprojections for the eigenvalues
//! -1 / +1 / rest, and the Cayley transform `Lambda` on the Robin subspace.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Eigenvalue clustering tolerance around +-1 when splitting eigenspaces.
pub const CLUSTER_TOL: f64 = 1e-9;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Named condition families; `Custom` is an arbitrary unitary matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum ConditionKind {
    Kirchhoff,
    Dirichlet,
    Neumann,
    Delta { alpha: f64 },
    Custom,
}

impl ConditionKind {
    /// Whether the condition is invariant under permutations of the incident
    /// bonds (so the labelling beta carries no information).
    pub fn permutation_invariant(&self) -> bool {
        !matches!(self, ConditionKind::Custom)
    }
}

/// A vertex condition: its unitary matrix plus derived boundary data.
#[derive(Clone, Debug)]
pub struct VertexCondition {
    kind: ConditionKind,
    u: DMatrix<C64>,
    boundary: BoundaryMatrices,
}

impl VertexCondition {
    pub fn named(kind: ConditionKind, d: usize) -> Self {
        let u = match &kind {
            ConditionKind::Kirchhoff => kirchhoff_unitary(d),
            ConditionKind::Dirichlet => -DMatrix::identity(d, d),
            ConditionKind::Neumann => DMatrix::identity(d, d),
            ConditionKind::Delta { alpha } => delta_unitary(d, *alpha),
            ConditionKind::Custom => panic!("custom conditions need a matrix"),
        };
        let boundary = boundary_matrices(&u);
        VertexCondition { kind, u, boundary }
    }

    pub fn custom(u: DMatrix<C64>) -> Self {
        let boundary = boundary_matrices(&u);
        VertexCondition { kind: ConditionKind::Custom, u, boundary }
    }

    pub fn kind(&self) -> &ConditionKind {
        &self.kind
    }

    pub fn unitary(&self) -> &DMatrix<C64> {
        &self.u
    }

    pub fn boundary(&self) -> &BoundaryMatrices {
        &self.boundary
    }
}

/// `||U U* - Id||` (operator norm).
pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let d = u.nrows();
    let defect = u * u.adjoint() - DMatrix::<C64>::identity(d, d);
    operator_norm(&defect)
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values()[0]
}

/// Kirchhoff unitary `(2/d) J - Id` with `J` the all-ones matrix.
pub fn kirchhoff_unitary(d: usize) -> DMatrix<C64> {
    assert!(d >= 1);
    let c = 2.0 / d as f64;
    DMatrix::from_fn(d, d, |i, j| if i == j { C64::new(c - 1.0, 0.0) } else { C64::new(c, 0.0) })
}

/// The delta-condition unitary `c J - Id` with `c = 2/(d - i alpha)`.
///
/// The constant is a reconstruction (the source text never writes it); the
/// sign convention is pinned by the residual test below: the null space of
/// `A1 F + A2 F'` is exactly continuity plus `sum f'_b(0) = alpha f(v)`.
pub fn delta_unitary(d: usize, alpha: f64) -> DMatrix<C64> {
    assert!(d >= 1);
    let c = C64::new(2.0, 0.0) / C64::new(d as f64, -alpha);
    DMatrix::from_fn(d, d, |i, j| if i == j { c - ONE } else { c })
}

/// Boundary data derived from a vertex unitary.
#[derive(Clone, Debug)]
pub struct BoundaryMatrices {
    /// `i (U - Id)`.
    pub a1: DMatrix<C64>,
    /// `U + Id`.
    pub a2: DMatrix<C64>,
    /// Projection onto the eigenspace of -1 (Dirichlet part).
    pub p_d: DMatrix<C64>,
    /// Projection onto the eigenspace of +1 (Neumann part).
    pub p_n: DMatrix<C64>,
    /// Projection onto the remaining (Robin) part.
    pub p_r: DMatrix<C64>,
    /// `P_R (-i (U + Id)^{-1} (U - Id)) P_R`, embedded in the full space.
    pub lambda: DMatrix<C64>,
    pub lambda_norm: f64,
    pub robin_dim: usize,
}

/// Splits the spectrum of a unitary at +-1 and computes the Cayley transform
/// on the Robin subspace. Kernels of `U +- Id` are found through singular
/// value decompositions, which keeps the +-1 clusters robust without a
/// general complex eigensolver.
pub fn boundary_matrices(u: &DMatrix<C64>) -> BoundaryMatrices {
    let d = u.nrows();
    let id = DMatrix::<C64>::identity(d, d);
    let a1 = (u - &id).map(|x| I * x);
    let a2 = u + &id;

    let p_d = kernel_projection(&a2);
    let p_n = kernel_projection(&(u - &id));
    let p_r = &id - &p_d - &p_n;
    let robin_dim = p_r.trace().re.round() as usize;

    // (U + Id) is invertible on the Robin + Neumann part; adding P_D makes it
    // invertible everywhere without touching that part.
    let lambda = if robin_dim == 0 {
        DMatrix::zeros(d, d)
    } else {
        let shifted = &a2 + &p_d;
        let inv = shifted.lu().try_inverse().expect("U + Id + P_D is invertible");
        let full = (inv * (u - &id)).map(|x| -I * x);
        &p_r * full * &p_r
    };
    let lambda_norm = operator_norm(&lambda);

    BoundaryMatrices { a1, a2, p_d, p_n, p_r, lambda, lambda_norm, robin_dim }
}

/// Orthogonal projection onto the numerical kernel of `m`.
fn kernel_projection(m: &DMatrix<C64>) -> DMatrix<C64> {
    let d = m.nrows();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut p = DMatrix::<C64>::zeros(d, d);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= CLUSTER_TOL {
            // rows of V^H are right singular vectors (conjugated)
            let row = v_t.row(k);
            for i in 0..d {
                for j in 0..d {
                    p[(i, j)] += row[i].conj() * row[j];
                }
            }
        }
    }
    p
}
