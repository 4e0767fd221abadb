//! Convergence-condition checks for both distributed iterations.
//!
//! Every condition is reported as a pass/fail flag together with the numeric
//! margin that justified it (positive margins pass). The symmetric-case list
//! gates the consensus-rescaled iteration, the directed-case list gates the
//! plain directed iteration.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::graph::DirectedGraph;
use crate::ortho::{general_eigen, spectral_norm, symmetric_eigen};
use crate::sync::{
    is_transitively_consistent, solve_spectral_relaxation, BlockLaplacian, EdgeTransformSet,
    CONSISTENCY_TOL, ORTHOGONALITY_TOL,
};

/// Relative threshold deciding invertibility of spectral-solution blocks.
const INVERTIBLE_REL_TOL: f64 = 1e-9;

/// Which distributed iteration a condition set gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Symmetric-graph iteration with consensus rescaling.
    Alg1,
    /// Directed-graph iteration.
    Alg2,
}

/// One checked condition.
#[derive(Debug, Clone)]
pub struct ConditionEntry {
    /// Stable identifier, `sym-1` .. `sym-10` or `dir-1` .. `dir-6`.
    pub id: &'static str,
    pub description: &'static str,
    pub pass: bool,
    /// Positive means satisfied with that much slack; booleans use +-1.
    pub margin: f64,
}

/// Condition report for one instance and step-size triple.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub symmetric_case: Vec<ConditionEntry>,
    pub directed_case: Vec<ConditionEntry>,
    pub recommended_eps1: f64,
    pub recommended_eps2: f64,
    pub recommended_eps3: f64,
}

impl ConditionReport {
    /// Conditions the selected algorithm needs for its convergence guarantee.
    ///
    /// For the symmetric iteration the consistent and the general case are
    /// gated differently: consistent instances need the alternative step
    /// bound and invertible limits, general instances need the degree-based
    /// step bound, the eigenvalue separations, and the consensus step bound.
    /// Consistency itself is never required.
    pub fn required(&self, algorithm: Algorithm) -> Vec<&ConditionEntry> {
        match algorithm {
            Algorithm::Alg1 => {
                let idx: &[usize] = if self.symmetric_case[2].pass {
                    &[0, 1, 4, 5, 6]
                } else {
                    &[0, 1, 3, 5, 6, 7, 8, 9]
                };
                idx.iter().map(|&k| &self.symmetric_case[k]).collect()
            }
            Algorithm::Alg2 => [0, 2, 4, 5]
                .iter()
                .map(|&k| &self.directed_case[k])
                .collect(),
        }
    }

    pub fn failed_required(&self, algorithm: Algorithm) -> Vec<&ConditionEntry> {
        self.required(algorithm)
            .into_iter()
            .filter(|e| !e.pass)
            .collect()
    }

    pub fn all_entries(&self) -> impl Iterator<Item = &ConditionEntry> {
        self.symmetric_case.iter().chain(self.directed_case.iter())
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "symmetric-graph iteration conditions:")?;
        for e in &self.symmetric_case {
            writeln!(
                f,
                "  [{}] {:<7} margin {:>13.6e}  {}",
                if e.pass { "pass" } else { "FAIL" },
                e.id,
                e.margin,
                e.description
            )?;
        }
        writeln!(f, "directed-graph iteration conditions:")?;
        for e in &self.directed_case {
            writeln!(
                f,
                "  [{}] {:<7} margin {:>13.6e}  {}",
                if e.pass { "pass" } else { "FAIL" },
                e.id,
                e.margin,
                e.description
            )?;
        }
        write!(
            f,
            "recommended step sizes: eps1 <= {:.6e}, eps2 <= {:.6e}, eps3 <= {:.6e}",
            self.recommended_eps1, self.recommended_eps2, self.recommended_eps3
        )
    }
}

fn boolean_entry(id: &'static str, description: &'static str, pass: bool) -> ConditionEntry {
    ConditionEntry {
        id,
        description,
        pass,
        margin: if pass { 1.0 } else { -1.0 },
    }
}

fn margin_entry(id: &'static str, description: &'static str, margin: f64) -> ConditionEntry {
    ConditionEntry {
        id,
        description,
        pass: margin > 0.0,
        margin,
    }
}

/// Evaluates every condition for the given instance and step sizes.
pub fn check_conditions(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    lu: &BlockLaplacian,
    ld: &BlockLaplacian,
    eps1: f64,
    eps2: f64,
    eps3: f64,
) -> Result<ConditionReport> {
    t.validate_pairing(g)?;
    let n = g.n();
    let d = t.d();
    let report = g.classify();
    let a = g.adjacency();
    let a_sym = &a + a.transpose();

    let ortho_residual = t.max_orthogonality_residual();
    let consistency = if report.connected {
        Some(is_transitively_consistent(g, t, CONSISTENCY_TOL)?)
    } else {
        None
    };
    let consistency_margin = consistency
        .as_ref()
        .map(|c| CONSISTENCY_TOL - c.max_edge_residual)
        .unwrap_or(-1.0);

    // Step-size bounds for the symmetric-graph iteration.
    let mut p_sym = DMatrix::zeros(n, n);
    for i in 0..n {
        let deg: f64 = a_sym.row(i).sum();
        p_sym[(i, i)] = deg;
    }
    let p_bound = &p_sym + &a_sym;
    let l_bar_sym = &p_sym - &a_sym;
    let p_norm = spectral_norm(&p_bound);
    let l_bar_norm = spectral_norm(&l_bar_sym);
    let l_unweighted_norm = spectral_norm(&g.unweighted_laplacian());

    // Spectral-solution block invertibility and eigenvalue separations.
    let sol = solve_spectral_relaxation(lu)?;
    let (vals, _) = symmetric_eigen(lu.matrix())?;
    let lambda_max = vals.last().copied().unwrap_or(0.0);
    let mut min_sigma_block = f64::INFINITY;
    let mut max_sigma_block: f64 = 0.0;
    let mut block_sum = DMatrix::zeros(d, d);
    for i in 0..n {
        let b = sol.block(i);
        let svd = b.clone().svd(false, false);
        min_sigma_block = min_sigma_block.min(svd.singular_values.min());
        max_sigma_block = max_sigma_block.max(svd.singular_values.max());
        block_sum += b;
    }
    let sum_svd = block_sum.svd(false, false);
    let sum_min = sum_svd.singular_values.min();
    let sum_max = sum_svd.singular_values.max();
    let subspace_gap = vals[d] - vals[d - 1];
    let bottom_gap = if d >= 2 {
        (1..d)
            .map(|s| vals[s] - vals[s - 1])
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::INFINITY
    };
    let sep_tol = INVERTIBLE_REL_TOL * lambda_max.max(1.0);

    let symmetric_case = vec![
        boolean_entry(
            "sym-1",
            "graph is connected and symmetric",
            report.connected && report.symmetric,
        ),
        margin_entry(
            "sym-2",
            "edge transforms are orthogonal",
            ORTHOGONALITY_TOL - ortho_residual,
        ),
        margin_entry(
            "sym-3",
            "edge transforms are transitively consistent",
            consistency_margin,
        ),
        margin_entry(
            "sym-4",
            "eps1 below 2 / ||diag((A+At)1) + A + At||",
            2.0 / p_norm - eps1,
        ),
        margin_entry(
            "sym-5",
            "eps1 below 2 / ||diag((A+At)1) - (A+At)||",
            2.0 / l_bar_norm - eps1,
        ),
        ConditionEntry {
            id: "sym-6",
            description: "every spectral-solution block is invertible",
            pass: min_sigma_block > INVERTIBLE_REL_TOL * max_sigma_block.max(1.0),
            margin: min_sigma_block,
        },
        ConditionEntry {
            id: "sym-7",
            description: "the sum of spectral-solution blocks is invertible",
            pass: sum_max > 0.0 && sum_min > INVERTIBLE_REL_TOL * sum_max,
            margin: sum_min,
        },
        ConditionEntry {
            id: "sym-8",
            description: "bottom-d eigenvalues separate from the rest",
            pass: subspace_gap > sep_tol,
            margin: subspace_gap,
        },
        ConditionEntry {
            id: "sym-9",
            description: "bottom-d eigenvalues are pairwise distinct",
            pass: bottom_gap > sep_tol,
            margin: bottom_gap,
        },
        margin_entry(
            "sym-10",
            "eps2 below 2 / ||unweighted graph Laplacian||",
            2.0 / l_unweighted_norm - eps2,
        ),
    ];

    // Directed-case conditions.
    let l_bar_dir = g.scalar_laplacian();
    let dir_eig = general_eigen(&l_bar_dir)?;
    let mut sorted_by_mag: Vec<nalgebra::Complex<f64>> = dir_eig.eigenvalues.clone();
    sorted_by_mag.sort_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap());
    let nonnull = &sorted_by_mag[1.min(sorted_by_mag.len())..];
    let step_margin = nonnull
        .iter()
        .map(|z| 1.0 - (nalgebra::Complex::new(1.0, 0.0) - z * eps3).norm())
        .fold(f64::INFINITY, f64::min);
    let min_weight = g
        .edges()
        .map(|(_, _, a)| a)
        .fold(f64::INFINITY, f64::min);
    let _ = ld; // directed Laplacian is re-derivable; kept in the signature for pairing symmetry

    let directed_case = vec![
        boolean_entry(
            "dir-1",
            "graph is quasi-strongly connected",
            report.quasi_strongly_connected,
        ),
        boolean_entry(
            "dir-2",
            "graph is strongly connected",
            report.strongly_connected,
        ),
        margin_entry(
            "dir-3",
            "edge transforms are orthogonal",
            ORTHOGONALITY_TOL - ortho_residual,
        ),
        margin_entry(
            "dir-4",
            "edge transforms are transitively consistent",
            consistency_margin,
        ),
        ConditionEntry {
            id: "dir-5",
            description: "|1 - eps3 lambda| < 1 for the non-null scalar Laplacian spectrum",
            pass: step_margin > 0.0,
            margin: step_margin,
        },
        ConditionEntry {
            id: "dir-6",
            description: "edge weights are uniformly bounded away from zero",
            pass: min_weight > 0.0,
            margin: min_weight,
        },
    ];

    // Safe defaults: 1/(2n) capped by 90% of each spectral bound.
    let half_n = 1.0 / (2.0 * n as f64);
    let recommended_eps1 = half_n.min(0.9 * 2.0 / p_norm).min(0.9 * 2.0 / l_bar_norm);
    let recommended_eps2 = half_n.min(0.9 * 2.0 / l_unweighted_norm);
    let eps3_bound = nonnull
        .iter()
        .map(|z| 2.0 * z.re / z.norm_sqr())
        .fold(f64::INFINITY, f64::min);
    let recommended_eps3 = if eps3_bound.is_finite() && eps3_bound > 0.0 {
        half_n.min(0.9 * eps3_bound)
    } else {
        half_n
    };

    Ok(ConditionReport {
        symmetric_case,
        directed_case,
        recommended_eps1,
        recommended_eps2,
        recommended_eps3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphMode;
    use crate::ortho::{project_orthogonal, random_orthogonal};
    use crate::sync::{build_directed_laplacian, build_undirected_laplacian, NodeCollection};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noisy_instance(
        n: usize,
        d: usize,
        density: f64,
        sigma: f64,
        seed: u64,
    ) -> (DirectedGraph, EdgeTransformSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DirectedGraph::random(n, density, GraphMode::SymmetricConnected, seed).unwrap();
        let labels =
            NodeCollection::new((0..n).map(|_| random_orthogonal(d, &mut rng)).collect()).unwrap();
        let t = EdgeTransformSet::from_fn(&g, d, |i, j| {
            let clean = labels.get(i).transpose() * labels.get(j);
            let noise =
                nalgebra::DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal))
                    * sigma;
            project_orthogonal(&(clean + noise)).unwrap()
        })
        .unwrap();
        (g, t)
    }

    fn full_report(g: &DirectedGraph, t: &EdgeTransformSet, e1: f64, e2: f64, e3: f64) -> ConditionReport {
        let lu = build_undirected_laplacian(g, t).unwrap();
        let ld = build_directed_laplacian(g, t).unwrap();
        check_conditions(g, t, &lu, &ld, e1, e2, e3).unwrap()
    }

    #[test]
    fn default_steps_pass_bounds_on_dense_instance() {
        let (g, t) = noisy_instance(10, 5, 0.9, 0.2, 1);
        let eps = 1.0 / 20.0;
        let rep = full_report(&g, &t, eps, eps, eps);
        assert!(rep.symmetric_case[3].pass, "{}", rep); // eps1 vs degree bound
        assert!(rep.symmetric_case[4].pass, "{}", rep); // eps1 vs Laplacian bound
        assert!(rep.symmetric_case[9].pass, "{}", rep); // eps2 bound
    }

    #[test]
    fn consistent_instance_passes_consistency_and_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = DirectedGraph::random(8, 0.7, GraphMode::SymmetricConnected, 7).unwrap();
        let labels =
            NodeCollection::new((0..8).map(|_| random_orthogonal(3, &mut rng)).collect()).unwrap();
        let t = EdgeTransformSet::from_labels(&g, &labels).unwrap();
        let rep = full_report(&g, &t, 0.05, 0.05, 0.05);
        assert!(rep.symmetric_case[2].pass); // consistency
        assert!(rep.symmetric_case[7].pass); // nullspace separated
    }

    #[test]
    fn oversized_step_fails_degree_bound() {
        let (g, t) = noisy_instance(10, 3, 0.9, 0.2, 2);
        let rep = full_report(&g, &t, 1.0, 0.05, 0.05);
        assert!(!rep.symmetric_case[3].pass);
        assert!(rep.symmetric_case[3].margin < 0.0);
    }

    #[test]
    fn noisy_instance_fails_consistency_but_separates() {
        let (g, t) = noisy_instance(10, 5, 0.9, 0.2, 3);
        let rep = full_report(&g, &t, 0.05, 0.05, 0.05);
        assert!(!rep.symmetric_case[2].pass);
        assert!(rep.symmetric_case[7].pass);
        assert!(!rep.failed_required(Algorithm::Alg1).iter().any(|e| e.id == "sym-3"));
    }

    #[test]
    fn directed_step_condition_reflects_spectrum() {
        let g = DirectedGraph::random(10, 0.5, GraphMode::Qsc, 5).unwrap();
        let t = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            EdgeTransformSet::from_fn(&g, 3, |_, _| random_orthogonal(3, &mut rng)).unwrap()
        };
        let ok = full_report(&g, &t, 0.05, 0.05, 0.05);
        assert!(ok.directed_case[4].pass, "{}", ok);
        let bad = full_report(&g, &t, 0.05, 0.05, 10.0);
        assert!(!bad.directed_case[4].pass);
        assert!(ok.recommended_eps3 <= 0.05 + 1e-12);
    }
}
