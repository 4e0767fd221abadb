//! Transitive-consistency tests.
//!
//! Two independent routes, both reported: a spectral test counting the
//! near-null eigenvalues of `L_undir` (the nullity equals `d` exactly on
//! consistent instances of connected graphs), and a constructive test that
//! propagates labels over a spanning tree and verifies every edge residual.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::ortho::symmetric_eigen;
use crate::sync::{build_undirected_laplacian, stack_u1, BlockLaplacian, EdgeTransformSet, NodeCollection};

/// Outcome of both consistency tests.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    /// Conjunction of the two tests below.
    pub consistent: bool,
    /// Number of eigenvalues of `L_undir` below the nullity threshold.
    pub nullity: usize,
    /// `nullity == d`.
    pub spectral_consistent: bool,
    /// Tree propagation extends to a labeling that verifies every edge.
    pub constructive_consistent: bool,
    /// Max over edges of `||R_ij - S_i^{-1} S_j||_F` for the propagated labels.
    pub max_edge_residual: f64,
    /// The propagated labels (anchored at `S_0 = I`) when they verify.
    pub witness: Option<NodeCollection>,
}

/// Runs both consistency tests on a connected instance with invertible
/// transforms. `tol` scales the nullity threshold (`tol * max(lambda_max, 1)`)
/// and bounds the accepted constructive edge residual.
pub fn is_transitively_consistent(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    tol: f64,
) -> Result<ConsistencyReport> {
    t.validate_pairing(g)?;
    if !g.classify().connected {
        return Err(Error::Disconnected);
    }
    let d = t.d();

    // Spectral route.
    let lu = build_undirected_laplacian(g, t)?;
    let (vals, _) = symmetric_eigen(lu.matrix())?;
    let lambda_max = vals.last().copied().unwrap_or(0.0);
    let threshold = tol * lambda_max.max(1.0);
    let nullity = vals.iter().take_while(|&&v| v < threshold).count();
    let spectral_consistent = nullity == d;

    // Constructive route: BFS over the undirected skeleton from node 0,
    // labels propagated along tree edges, then every edge verified.
    let n = g.n();
    let mut labels: Vec<Option<DMatrix<f64>>> = vec![None; n];
    labels[0] = Some(DMatrix::identity(d, d));
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut skeleton = vec![Vec::new(); n];
    for (i, j, _) in g.edges() {
        skeleton[i].push(j);
        skeleton[j].push(i);
    }
    for adj in &mut skeleton {
        adj.sort_unstable();
        adj.dedup();
    }
    while let Some(u) = queue.pop_front() {
        let su = labels[u].clone().expect("visited nodes are labeled");
        for &v in &skeleton[u] {
            if labels[v].is_some() {
                continue;
            }
            // Along (u,v): S_v = S_u R_uv; against (v,u): S_v = S_u R_vu^{-1}.
            let sv = if let Some(r) = t.get(u, v) {
                &su * r
            } else {
                let r = t.get(v, u).expect("skeleton edge exists");
                let r_inv = r.clone().try_inverse().ok_or(Error::Singular {
                    context: "edge transform inverse",
                })?;
                &su * r_inv
            };
            labels[v] = Some(sv);
            queue.push_back(v);
        }
    }
    let witness_labels = NodeCollection::new(
        labels
            .into_iter()
            .map(|l| l.expect("connected graph labels every node"))
            .collect(),
    )?;
    let inv = witness_labels.inverses()?;
    let mut max_edge_residual: f64 = 0.0;
    for (i, j, _) in g.edges() {
        let r = t.get(i, j).expect("pairing validated");
        let resid = (r - inv.get(i) * witness_labels.get(j)).norm();
        max_edge_residual = max_edge_residual.max(resid);
    }
    let constructive_consistent = max_edge_residual <= tol;

    Ok(ConsistencyReport {
        consistent: spectral_consistent && constructive_consistent,
        nullity,
        spectral_consistent,
        constructive_consistent,
        max_edge_residual,
        witness: constructive_consistent.then_some(witness_labels),
    })
}

/// Normalized nullspace residual `||L_dir U_1(C)||_F / ||U_1(C)||_F`.
///
/// For orthogonal labels on a QSC graph this vanishes exactly on consistent
/// instances; invertible non-orthogonal witnesses can drive it to zero on
/// inconsistent instances as well.
pub fn nullspace_containment(ld: &BlockLaplacian, labels: &NodeCollection) -> Result<f64> {
    let u = stack_u1(labels)?;
    if u.nrows() != ld.n() * ld.d() {
        return Err(Error::DimensionMismatch {
            context: "stacked labels",
            expected: ld.n() * ld.d(),
            found: u.nrows(),
        });
    }
    Ok((ld.matrix() * &u).norm() / u.norm())
}
