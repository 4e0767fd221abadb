//! Centralized spectral relaxation.
//!
//! Dropping the per-node orthogonality constraints in favor of the aggregate
//! constraint `XᵀX = n I_d` turns the pairwise cost into a trace minimization
//! solved exactly by the eigenvectors of the `d` smallest eigenvalues of
//! `L_undir`, scaled by `sqrt(n)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ortho::{project_orthogonal, symmetric_eigen};
use crate::sync::{BlockLaplacian, LaplacianKind, NodeCollection};

/// Relative eigengap below which the optimal subspace is ambiguous.
pub const SUBSPACE_GAP_TOL: f64 = 1e-9;

/// Optimal solution of the relaxed problem.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    n: usize,
    d: usize,
    /// nd x d optimizer with `x_barᵀ x_bar = n I_d`; column `s` is the
    /// eigenvector of the s-th smallest eigenvalue scaled by `sqrt(n)`,
    /// sign-fixed so its first maximal-magnitude component is positive.
    pub x_bar: DMatrix<f64>,
    /// The d smallest eigenvalues of `L_undir`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Optimal objective `(n / 2) Σ eigenvalues`.
    pub objective: f64,
    /// `lambda_{d+1} - lambda_d`: separation of the optimal subspace from the
    /// rest of the spectrum.
    pub subspace_gap: f64,
    /// Smallest gap among the d bottom eigenvalues.
    pub bottom_gap: f64,
    /// Set when the subspace separation is within tolerance of zero; the
    /// optimizer is then not unique up to rotation.
    pub ambiguous_subspace: bool,
}

impl SpectralSolution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The i-th d x d block of the optimizer.
    pub fn block(&self, i: usize) -> DMatrix<f64> {
        self.x_bar.view((i * self.d, 0), (self.d, self.d)).into_owned()
    }

    /// All blocks in node order.
    pub fn blocks(&self) -> Vec<DMatrix<f64>> {
        (0..self.n).map(|i| self.block(i)).collect()
    }

    /// Orthogonal projections of the blocks.
    pub fn projected_blocks(&self) -> Result<Vec<DMatrix<f64>>> {
        self.blocks().iter().map(project_orthogonal).collect()
    }

    /// Reference labels `{Pr(X_i)ᵀ}` for gap evaluation of orthogonal
    /// algorithm outputs.
    pub fn projected_labels(&self) -> Result<NodeCollection> {
        NodeCollection::new(
            self.projected_blocks()?
                .into_iter()
                .map(|q| q.transpose())
                .collect(),
        )
    }

    /// Reference labels `{X_i^{-1}}` for gap evaluation of inverted raw
    /// iterates.
    pub fn inverse_labels(&self) -> Result<NodeCollection> {
        NodeCollection::new(self.blocks())?.inverses()
    }
}

/// Solves the relaxation for an undirected-kind Laplacian.
///
/// A vanishing subspace gap is reported via `ambiguous_subspace` rather than
/// as an error: the objective value is still optimal, only the argmin loses
/// uniqueness.
pub fn solve_spectral_relaxation(lu: &BlockLaplacian) -> Result<SpectralSolution> {
    if lu.kind() != LaplacianKind::Undirected {
        return Err(Error::WrongLaplacianKind {
            expected: "undirected",
        });
    }
    let (n, d) = (lu.n(), lu.d());
    let (vals, vecs) = symmetric_eigen(lu.matrix())?;
    let lambda_max = vals.last().copied().unwrap_or(0.0);
    let scale = (n as f64).sqrt();
    let mut x_bar = DMatrix::zeros(n * d, d);
    for s in 0..d {
        let mut col = vecs.column(s).into_owned() * scale;
        // Deterministic sign: first maximal-magnitude entry positive.
        let mut idx = 0;
        for (k, v) in col.iter().enumerate() {
            if v.abs() > col[idx].abs() {
                idx = k;
            }
        }
        if col[idx] < 0.0 {
            col = -col;
        }
        x_bar.column_mut(s).copy_from(&col);
    }
    let eigenvalues: Vec<f64> = vals[..d].to_vec();
    let objective = 0.5 * n as f64 * eigenvalues.iter().sum::<f64>();
    let subspace_gap = if n * d > d { vals[d] - vals[d - 1] } else { 0.0 };
    let bottom_gap = if d >= 2 {
        (1..d)
            .map(|s| vals[s] - vals[s - 1])
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::INFINITY
    };
    let ambiguous_subspace = subspace_gap <= SUBSPACE_GAP_TOL * lambda_max.max(1.0);
    Ok(SpectralSolution {
        n,
        d,
        x_bar,
        eigenvalues,
        objective,
        subspace_gap,
        bottom_gap,
        ambiguous_subspace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DirectedGraph, GraphMode};
    use crate::ortho::random_orthogonal;
    use crate::sync::{build_undirected_laplacian, stack_u1, EdgeTransformSet};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_node_hand_solution() {
        // L = [[2, 2], [2, 2]] has eigenvalues 0 and 4; the bottom eigenvector
        // is (1, -1)/sqrt(2), scaled by sqrt(2).
        let g = DirectedGraph::new(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let t = EdgeTransformSet::from_fn(&g, 1, |_, _| {
            nalgebra::DMatrix::from_element(1, 1, -1.0)
        })
        .unwrap();
        let lu = build_undirected_laplacian(&g, &t).unwrap();
        let sol = solve_spectral_relaxation(&lu).unwrap();
        assert_abs_diff_eq!(sol.eigenvalues[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.x_bar[(0, 0)].abs(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.x_bar[(1, 0)].abs(), 1.0, epsilon = 1e-10);
        assert!(sol.x_bar[(0, 0)] * sol.x_bar[(1, 0)] < 0.0);
    }

    #[test]
    fn consistent_instance_has_zero_objective_and_matching_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 6;
        let d = 3;
        let g = DirectedGraph::random(n, 0.7, GraphMode::SymmetricConnected, 13).unwrap();
        let labels = crate::sync::NodeCollection::new(
            (0..n).map(|_| random_orthogonal(d, &mut rng)).collect(),
        )
        .unwrap();
        let t = EdgeTransformSet::from_labels(&g, &labels).unwrap();
        let lu = build_undirected_laplacian(&g, &t).unwrap();
        let sol = solve_spectral_relaxation(&lu).unwrap();
        assert!(sol.objective.abs() <= 1e-8);
        // Principal angles between span(x_bar) and span(U_1): all cosines 1.
        let u = stack_u1(&labels).unwrap();
        let qu = u.qr().q();
        let qx = sol.x_bar.clone().qr().q();
        let svd = (qu.transpose() * qx).svd(false, false);
        for s in svd.singular_values.iter() {
            assert!((s - 1.0).abs() <= 1e-8, "principal angle cosine {s}");
        }
    }

    #[test]
    fn constraint_and_objective_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let n = 7;
        let d = 3;
        let g = DirectedGraph::random(n, 0.8, GraphMode::SymmetricConnected, 14).unwrap();
        let t = EdgeTransformSet::from_fn(&g, d, |_, _| random_orthogonal(d, &mut rng)).unwrap();
        let lu = build_undirected_laplacian(&g, &t).unwrap();
        let sol = solve_spectral_relaxation(&lu).unwrap();
        // Noisy instance: strictly positive optimum.
        assert!(sol.objective > 0.0);
        let gram = sol.x_bar.transpose() * &sol.x_bar;
        let target = nalgebra::DMatrix::<f64>::identity(d, d) * n as f64;
        assert!((gram - target).norm() <= 1e-8 * n as f64);
        let direct = 0.5 * (sol.x_bar.transpose() * lu.matrix() * &sol.x_bar).trace();
        assert!((direct - sol.objective).abs() <= 1e-8 * sol.objective.max(1.0));
    }

    #[test]
    fn rejects_directed_kind() {
        let g = DirectedGraph::new(2, &[(0, 1, 1.0)]).unwrap();
        let t = EdgeTransformSet::from_fn(&g, 1, |_, _| {
            nalgebra::DMatrix::from_element(1, 1, 1.0)
        })
        .unwrap();
        let ld = crate::sync::build_directed_laplacian(&g, &t).unwrap();
        assert!(matches!(
            solve_spectral_relaxation(&ld),
            Err(Error::WrongLaplacianKind { .. })
        ));
    }
}
