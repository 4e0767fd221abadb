//! Block connection Laplacians and the stacked inverse-label matrix.
//!
//! With `A` the weighted adjacency, `[W]_ij = a_ij R_ij` and
//! `[W̄]_ij = sqrt(a_ij) R_ij`, the two Laplacians are
//!
//! ```text
//! L_undir = diag(A 1) ⊗ I_d + blockdiag(W̄ᵀW̄) - (W + Wᵀ)
//! L_dir   = diag(A 1) ⊗ I_d - W
//! ```
//!
//! `blockdiag(.)` keeps only the diagonal d x d blocks. For a collection of
//! invertible labels `{C_i}`, `U_1({C_i})` stacks the inverses `C_i^{-1}`; on
//! a consistent instance `R_ij = C_i^{-1} C_j` its columns span the nullspace
//! of both Laplacians.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::sync::{BlockLaplacian, EdgeTransformSet, LaplacianKind, NodeCollection};

/// `L_undir`: symmetric positive semidefinite by construction.
pub fn build_undirected_laplacian(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
) -> Result<BlockLaplacian> {
    t.validate_pairing(g)?;
    let (n, d) = (g.n(), t.d());
    let mut m = DMatrix::zeros(n * d, n * d);
    for (i, j, a) in g.edges() {
        let r = t.get(i, j).expect("pairing validated");
        // diag(A 1) ⊗ I on the (i,i) block.
        for k in 0..d {
            m[(i * d + k, i * d + k)] += a;
        }
        // blockdiag(W̄ᵀW̄) contributes a_ij RᵀR to the (j,j) block.
        let gram = r.transpose() * r * a;
        for row in 0..d {
            for col in 0..d {
                m[(j * d + row, j * d + col)] += gram[(row, col)];
            }
        }
        // -(W + Wᵀ).
        for row in 0..d {
            for col in 0..d {
                m[(i * d + row, j * d + col)] -= a * r[(row, col)];
                m[(j * d + row, i * d + col)] -= a * r[(col, row)];
            }
        }
    }
    Ok(BlockLaplacian::from_parts(
        n,
        d,
        LaplacianKind::Undirected,
        m,
    ))
}

/// `L_dir`: block-row sums vanish on consistent instances.
pub fn build_directed_laplacian(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
) -> Result<BlockLaplacian> {
    t.validate_pairing(g)?;
    let (n, d) = (g.n(), t.d());
    let mut m = DMatrix::zeros(n * d, n * d);
    for (i, j, a) in g.edges() {
        let r = t.get(i, j).expect("pairing validated");
        for k in 0..d {
            m[(i * d + k, i * d + k)] += a;
        }
        for row in 0..d {
            for col in 0..d {
                m[(i * d + row, j * d + col)] -= a * r[(row, col)];
            }
        }
    }
    Ok(BlockLaplacian::from_parts(n, d, LaplacianKind::Directed, m))
}

/// Residual of the splitting of `L_undir` into the directed Laplacian plus the
/// directed Laplacian of the reversed graph carrying `R̄_ij = R_jiᵀ`.
/// Near zero whenever the transforms are orthogonal.
pub fn directed_split_residual(g: &DirectedGraph, t: &EdgeTransformSet) -> Result<f64> {
    let lu = build_undirected_laplacian(g, t)?;
    let ld = build_directed_laplacian(g, t)?;
    let rev = g.reversed();
    let t_rev = EdgeTransformSet::from_fn(&rev, t.d(), |i, j| {
        t.get(j, i).expect("reversed edge").transpose()
    })?;
    let ld_rev = build_directed_laplacian(&rev, &t_rev)?;
    Ok((lu.matrix() - (ld.matrix() + ld_rev.matrix())).norm())
}

/// Stacks the member inverses of an invertible label collection into an
/// nd x d matrix (i-th block `C_i^{-1}`).
pub fn stack_u1(labels: &NodeCollection) -> Result<DMatrix<f64>> {
    let inv = labels.inverses()?;
    let (n, d) = (labels.n(), labels.d());
    let mut u = DMatrix::zeros(n * d, d);
    for i in 0..n {
        u.view_mut((i * d, 0), (d, d)).copy_from(inv.get(i));
    }
    Ok(u)
}

/// Quadratic form `tr(Uᵀ L U) / 2` of a stacked matrix against a Laplacian.
pub fn quadratic_cost(l: &BlockLaplacian, u: &DMatrix<f64>) -> Result<f64> {
    if u.nrows() != l.n() * l.d() {
        return Err(Error::DimensionMismatch {
            context: "stacked matrix rows",
            expected: l.n() * l.d(),
            found: u.nrows(),
        });
    }
    Ok(0.5 * (u.transpose() * l.matrix() * u).trace())
}
