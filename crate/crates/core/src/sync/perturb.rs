//! Nullspace-preserving two-edge perturbation.
//!
//! Starting from a consistent set `R_ij = C_i^{-1} C_j` on a QSC graph with a
//! node `k` of out-degree at least two, the transforms on two of its out-edges
//! are replaced by
//!
//! ```text
//! R'_kl = C_k^{-1} (I + Q / a_kl) C_l,
//! R'_km = C_k^{-1} (I - Q / a_km) C_m,
//! ```
//!
//! which cancels in the k-th block row of `L_dir`, so `L_dir(T') U_1(C) = 0`
//! still holds although the perturbed set is no longer transitively
//! consistent. Dividing by the edge weights keeps the cancellation exact for
//! unequal weights.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::sync::{EdgeTransformSet, NodeCollection};

/// What the perturbation touched.
#[derive(Debug, Clone)]
pub struct PerturbationInfo {
    /// The branching node k.
    pub node: usize,
    pub edge_plus: (usize, usize),
    pub edge_minus: (usize, usize),
    /// Frobenius norm of the perturbation core Q.
    pub q_norm: f64,
    /// `||R'_kl - R_kl||_F + ||R'_km - R_km||_F`, guaranteed <= magnitude.
    pub total_edge_distance: f64,
}

/// Produces the perturbed transform set. `magnitude` bounds the summed
/// edge-wise Frobenius distance to the input set.
pub fn perturb_consistent(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    labels: &NodeCollection,
    magnitude: f64,
) -> Result<(EdgeTransformSet, PerturbationInfo)> {
    t.validate_pairing(g)?;
    if !(magnitude > 0.0) {
        return Err(Error::ZeroPerturbation);
    }
    let d = t.d();
    let k = (0..g.n())
        .find(|&i| g.out_neighbors(i).len() >= 2)
        .ok_or(Error::NoBranchNode)?;
    let l = g.out_neighbors(k)[0];
    let m = g.out_neighbors(k)[1];
    let a_kl = g.weight(k, l).expect("edge exists");
    let a_km = g.weight(k, m).expect("edge exists");
    let a_min = a_kl.min(a_km);

    // Skew core for d >= 2 (identity plus skew is always invertible); a plain
    // scalar bump for d = 1.
    let base = if d >= 2 {
        let mut q = DMatrix::zeros(d, d);
        q[(0, 1)] = 1.0;
        q[(1, 0)] = -1.0;
        q
    } else {
        DMatrix::from_element(1, 1, 1.0)
    };
    let scale = magnitude * a_min.min(1.0) / 4.0;

    let inv_k = labels.get(k).clone().try_inverse().ok_or(Error::Singular {
        context: "perturbation anchor label",
    })?;
    let build = |q: &DMatrix<f64>| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let id = DMatrix::identity(d, d);
        let plus = &id + q / a_kl;
        let minus = &id - q / a_km;
        if plus.clone().try_inverse().is_none() || minus.clone().try_inverse().is_none() {
            return Err(Error::Singular {
                context: "perturbed edge factor",
            });
        }
        Ok((&inv_k * plus * labels.get(l), &inv_k * minus * labels.get(m)))
    };

    let mut q = &base * scale;
    let (mut r_kl, mut r_km) = build(&q)?;
    let dist = |r_kl: &DMatrix<f64>, r_km: &DMatrix<f64>| {
        (r_kl - t.get(k, l).expect("edge")).norm() + (r_km - t.get(k, m).expect("edge")).norm()
    };
    let mut total = dist(&r_kl, &r_km);
    if total > magnitude {
        // The distance is exactly linear in Q, so one rescale lands inside.
        q *= 0.95 * magnitude / total;
        let rebuilt = build(&q)?;
        r_kl = rebuilt.0;
        r_km = rebuilt.1;
        total = dist(&r_kl, &r_km);
    }

    let perturbed = t
        .with_replaced(k, l, r_kl)?
        .with_replaced(k, m, r_km)?;
    Ok((
        perturbed,
        PerturbationInfo {
            node: k,
            edge_plus: (k, l),
            edge_minus: (k, m),
            q_norm: q.norm(),
            total_edge_distance: total,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphMode;
    use crate::ortho::random_orthogonal;
    use crate::sync::{
        build_directed_laplacian, is_transitively_consistent, nullspace_containment,
        CONSISTENCY_TOL,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Three nodes, node 0 branching to 1 and 2, closed by (1,2): QSC with a
    /// center at node 2.
    fn branch_graph() -> DirectedGraph {
        DirectedGraph::new(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap()
    }

    fn orthogonal_labels(n: usize, d: usize, seed: u64) -> NodeCollection {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NodeCollection::new((0..n).map(|_| random_orthogonal(d, &mut rng)).collect()).unwrap()
    }

    #[test]
    fn breaks_consistency_but_keeps_nullspace() {
        let g = branch_graph();
        assert!(g.classify().quasi_strongly_connected);
        let labels = orthogonal_labels(3, 3, 1);
        let t = EdgeTransformSet::from_labels(&g, &labels).unwrap();
        let (tp, info) = perturb_consistent(&g, &t, &labels, 0.1).unwrap();
        let rep = is_transitively_consistent(&g, &tp, CONSISTENCY_TOL).unwrap();
        assert!(!rep.constructive_consistent);
        assert!(!rep.consistent);
        let ld = build_directed_laplacian(&g, &tp).unwrap();
        assert!(nullspace_containment(&ld, &labels).unwrap() <= 1e-10);
        assert!(info.total_edge_distance <= 0.1);
        assert!(info.q_norm > 0.0);
    }

    #[test]
    fn vanishing_magnitude_bounds_distance() {
        let g = branch_graph();
        let labels = orthogonal_labels(3, 4, 2);
        let t = EdgeTransformSet::from_labels(&g, &labels).unwrap();
        for mag in [1e-1, 1e-3, 1e-6] {
            let (tp, info) = perturb_consistent(&g, &t, &labels, mag).unwrap();
            assert!(info.total_edge_distance <= mag);
            assert!(info.total_edge_distance > 0.0);
            let mut total = 0.0;
            for (i, j, _) in g.edges() {
                total += (tp.get(i, j).unwrap() - t.get(i, j).unwrap()).norm();
            }
            assert!(total <= mag + 1e-15);
        }
    }

    #[test]
    fn zero_magnitude_rejected() {
        let g = branch_graph();
        let labels = orthogonal_labels(3, 2, 3);
        let t = EdgeTransformSet::from_labels(&g, &labels).unwrap();
        assert!(matches!(
            perturb_consistent(&g, &t, &labels, 0.0),
            Err(Error::ZeroPerturbation)
        ));
    }

    #[test]
    fn needs_a_branching_node() {
        // Directed chain: every out-degree is at most one.
        let g = DirectedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let labels = orthogonal_labels(3, 2, 4);
        let t = EdgeTransformSet::from_labels(&g, &labels).unwrap();
        assert!(matches!(
            perturb_consistent(&g, &t, &labels, 0.1),
            Err(Error::NoBranchNode)
        ));
    }

    #[test]
    fn unequal_weights_still_cancel() {
        let g = DirectedGraph::new(3, &[(0, 1, 0.3), (0, 2, 2.5), (1, 2, 1.0)]).unwrap();
        let labels = orthogonal_labels(3, 3, 5);
        let t = EdgeTransformSet::from_labels(&g, &labels).unwrap();
        let (tp, info) = perturb_consistent(&g, &t, &labels, 0.2).unwrap();
        let ld = build_directed_laplacian(&g, &tp).unwrap();
        assert!(nullspace_containment(&ld, &labels).unwrap() <= 1e-10);
        assert!(info.total_edge_distance <= 0.2);
    }

    #[test]
    fn scalar_dimension_works() {
        let g = branch_graph();
        let labels = NodeCollection::new(vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 2.0),
        ])
        .unwrap();
        let t = EdgeTransformSet::from_labels(&g, &labels).unwrap();
        let (tp, _) = perturb_consistent(&g, &t, &labels, 0.1).unwrap();
        let rep = is_transitively_consistent(&g, &tp, CONSISTENCY_TOL).unwrap();
        assert!(!rep.consistent);
        let ld = build_directed_laplacian(&g, &tp).unwrap();
        assert!(nullspace_containment(&ld, &labels).unwrap() <= 1e-10);
    }
}
