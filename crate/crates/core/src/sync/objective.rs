//! Synchronization objectives and the relative cost gap.

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::sync::{EdgeTransformSet, NodeCollection};

/// Weighted pairwise cost `Σ_(i,j) (a_ij / 2) ||R_ij - C_iᵀ C_j||_F²`.
///
/// For orthogonal label collections this coincides with the quadratic form
/// `tr(U_1ᵀ L_undir U_1) / 2` of the stacked inverses.
pub fn pairwise_cost(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    labels: &NodeCollection,
) -> Result<f64> {
    t.validate_pairing(g)?;
    check_labels(g, t, labels)?;
    let mut acc = 0.0;
    for (i, j, a) in g.edges() {
        let r = t.get(i, j).expect("pairing validated");
        let resid = r - labels.get(i).transpose() * labels.get(j);
        acc += 0.5 * a * resid.norm_squared();
    }
    Ok(acc)
}

/// Aggregated per-node cost `Σ_i ||Σ_(j∈N_i) a_ij (R_ij C_jᵀ - C_iᵀ)||_F² / 2`.
///
/// For orthogonal label collections this coincides with
/// `tr(U_1ᵀ L_dirᵀ L_dir U_1) / 2`.
pub fn aggregate_cost(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    labels: &NodeCollection,
) -> Result<f64> {
    t.validate_pairing(g)?;
    check_labels(g, t, labels)?;
    let d = labels.d();
    let mut acc = 0.0;
    for i in 0..g.n() {
        let mut sum = nalgebra::DMatrix::<f64>::zeros(d, d);
        for &j in g.out_neighbors(i) {
            let a = g.weight(i, j).expect("neighbor edge");
            let r = t.get(i, j).expect("pairing validated");
            sum += (r * labels.get(j).transpose() - labels.get(i).transpose()) * a;
        }
        acc += 0.5 * sum.norm_squared();
    }
    Ok(acc)
}

/// Pairwise cost of an invertible label collection in the inverse form
/// `Σ_(i,j) (a_ij / 2) ||R_ij - C_i^{-1} C_j||_F²`.
///
/// Equal to [`pairwise_cost`] whenever the labels are orthogonal, and equal to
/// the residual actually driven to zero by label collections built from
/// inverses of converging iterates.
pub fn label_cost(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    labels: &NodeCollection,
) -> Result<f64> {
    t.validate_pairing(g)?;
    check_labels(g, t, labels)?;
    let inv = labels.inverses()?;
    let mut acc = 0.0;
    for (i, j, a) in g.edges() {
        let r = t.get(i, j).expect("pairing validated");
        let resid = r - inv.get(i) * labels.get(j);
        acc += 0.5 * a * resid.norm_squared();
    }
    Ok(acc)
}

/// [`label_cost`] of the collection `{X_i^{-1}}` evaluated directly from the
/// iterates `X_i`: `Σ_(i,j) (a_ij / 2) ||R_ij - X_i X_j^{-1}||_F²`.
///
/// Inverting only once keeps the value usable when the iterates are badly
/// conditioned.
pub fn inverted_label_cost(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    iterates: &NodeCollection,
) -> Result<f64> {
    t.validate_pairing(g)?;
    check_labels(g, t, iterates)?;
    let inv = iterates.inverses()?;
    let mut acc = 0.0;
    for (i, j, a) in g.edges() {
        let r = t.get(i, j).expect("pairing validated");
        let resid = r - iterates.get(i) * inv.get(j);
        acc += 0.5 * a * resid.norm_squared();
    }
    Ok(acc)
}

/// Relative cost gap `|cost(candidate) / cost(reference) - 1|`, both sides
/// evaluated with [`label_cost`].
///
/// Undefined (error) when the reference cost is numerically zero, which is
/// exactly the transitively consistent case.
pub fn gap(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    candidate: &NodeCollection,
    reference: &NodeCollection,
) -> Result<f64> {
    let num = label_cost(g, t, candidate)?;
    let den = label_cost(g, t, reference)?;
    let scale: f64 = g.edges().map(|(_, _, a)| a).sum::<f64>() * t.d() as f64;
    if den <= 1e-12 * scale.max(1.0) {
        return Err(Error::UndefinedGap { denominator: den });
    }
    Ok((num / den - 1.0).abs())
}

/// Max over edges of `||R_ij - C_iᵀ C_j||_F`.
pub fn max_edge_residual(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    labels: &NodeCollection,
) -> Result<f64> {
    t.validate_pairing(g)?;
    check_labels(g, t, labels)?;
    let mut worst: f64 = 0.0;
    for (i, j, _) in g.edges() {
        let r = t.get(i, j).expect("pairing validated");
        worst = worst.max((r - labels.get(i).transpose() * labels.get(j)).norm());
    }
    Ok(worst)
}

fn check_labels(g: &DirectedGraph, t: &EdgeTransformSet, labels: &NodeCollection) -> Result<()> {
    if labels.n() != g.n() {
        return Err(Error::DimensionMismatch {
            context: "label collection size",
            expected: g.n(),
            found: labels.n(),
        });
    }
    if labels.d() != t.d() {
        return Err(Error::DimensionMismatch {
            context: "label dimension",
            expected: t.d(),
            found: labels.d(),
        });
    }
    Ok(())
}
