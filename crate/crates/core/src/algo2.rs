//! Distributed iteration for directed (possibly asymmetric) graphs.
//!
//! Each agent updates
//!
//! ```text
//! R̃_i(k) = R̃_i(k-1) + eps3 Σ_(j∈N_i) a_ij (R_ij R̃_j(k-1) - R̃_i(k-1)),
//! ```
//!
//! the stacked form of `(I - eps3 L_dir) R̃(k-1)`, and outputs the orthogonal
//! projection of its iterate. There is no rescaling track: the directed
//! Laplacian is not symmetric, so the iteration is kept plain and small step
//! sizes keep it stable on quasi-strongly connected graphs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::netsim::{run_rounds, Agent, Network};
use crate::ortho::{general_eigen, project_orthogonal_with_tol};
use crate::sync::{
    build_directed_laplacian, build_undirected_laplacian, check_conditions, inverted_label_cost,
    pairwise_cost, solve_spectral_relaxation, Algorithm, BlockLaplacian, ConditionReport,
    EdgeTransformSet, NodeCollection, SpectralSolution,
};
use crate::trace::{ExperimentTrace, TraceRow};

/// Run parameters for the directed iteration.
#[derive(Debug, Clone)]
pub struct Alg2Params {
    pub eps3: f64,
    pub iterations: usize,
    /// Record every `trace_stride`-th round (plus the final one); 0 picks a
    /// stride that keeps about 200 rows.
    pub trace_stride: usize,
    pub enforce_conditions: bool,
    pub run_id: u64,
}

impl Default for Alg2Params {
    fn default() -> Self {
        Self {
            eps3: 0.05,
            iterations: 1000,
            trace_stride: 0,
            enforce_conditions: true,
            run_id: 0,
        }
    }
}

impl Alg2Params {
    /// Step size `1/(2n)`.
    pub fn auto_step(mut self, n: usize) -> Self {
        self.eps3 = 1.0 / (2.0 * n as f64);
        self
    }
}

#[derive(Debug, Clone)]
struct WeightedEdge {
    neighbor: usize,
    weight: f64,
    transform: DMatrix<f64>,
}

/// One node of the directed iteration.
#[derive(Debug, Clone)]
pub struct Alg2Agent {
    id: usize,
    eps3: f64,
    k: usize,
    r_tilde: DMatrix<f64>,
    row: Vec<WeightedEdge>,
}

impl Alg2Agent {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn r_tilde(&self) -> &DMatrix<f64> {
        &self.r_tilde
    }

    /// Projected output `R_i(k)`. Long horizons drive the iterate toward rank
    /// deficiency, so the projection is taken without a singularity gate; it
    /// only fails on a vanished or non-finite iterate.
    pub fn output(&self) -> Option<DMatrix<f64>> {
        project_orthogonal_with_tol(&self.r_tilde, 0.0)
            .ok()
            .map(|p| p.transpose())
    }
}

impl Agent for Alg2Agent {
    type Msg = DMatrix<f64>;

    fn snapshot(&self) -> DMatrix<f64> {
        self.r_tilde.clone()
    }

    fn step(&mut self, round: usize, inbox: &[(usize, DMatrix<f64>)]) -> Result<()> {
        if inbox.len() != self.row.len()
            || !inbox
                .iter()
                .zip(&self.row)
                .all(|((s, _), e)| *s == e.neighbor)
        {
            let missing = self
                .row
                .iter()
                .map(|e| e.neighbor)
                .find(|nb| !inbox.iter().any(|(s, _)| s == nb))
                .unwrap_or(self.id);
            return Err(Error::MissingMessage {
                agent: self.id,
                neighbor: missing,
            });
        }
        let mut acc = DMatrix::zeros(self.r_tilde.nrows(), self.r_tilde.ncols());
        for (e, (_, r_j)) in self.row.iter().zip(inbox) {
            acc += (&e.transform * r_j - &self.r_tilde) * e.weight;
        }
        self.r_tilde += acc * self.eps3;
        self.k = round;
        Ok(())
    }
}

/// Result of a full run.
pub struct Alg2Run {
    pub agents: Vec<Alg2Agent>,
    pub trace: ExperimentTrace,
    pub oracle: SpectralSolution,
    pub conditions: ConditionReport,
    /// Set when the graph is connected but not quasi-strongly connected; the
    /// run proceeds, results carry no guarantee.
    pub qsc_warning: bool,
}

impl Alg2Run {
    /// Collection `{R_i(k)}` when every agent produced one.
    pub fn r_labels(&self) -> Option<NodeCollection> {
        let mats: Option<Vec<DMatrix<f64>>> = self.agents.iter().map(|a| a.output()).collect();
        NodeCollection::new(mats?).ok()
    }
}

/// Eigenvalues of `I - eps3 L_dir` and their largest modulus: a centralized
/// stability preflight, diagnostic only.
pub fn iteration_spectrum_max_modulus(ld: &BlockLaplacian, eps3: f64) -> Result<f64> {
    let nd = ld.n() * ld.d();
    let m = DMatrix::identity(nd, nd) - ld.matrix() * eps3;
    let eig = general_eigen(&m)?;
    Ok(eig
        .eigenvalues
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Runs the directed iteration. The graph must be connected; a missing center
/// only raises `qsc_warning`.
pub fn run_algorithm2(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    params: &Alg2Params,
) -> Result<Alg2Run> {
    t.validate_pairing(g)?;
    let classification = g.classify();
    if !classification.connected {
        return Err(Error::Disconnected);
    }
    let qsc_warning = !classification.quasi_strongly_connected;
    require_orthogonal(g, t)?;

    let lu = build_undirected_laplacian(g, t)?;
    let ld = build_directed_laplacian(g, t)?;
    let conditions = check_conditions(g, t, &lu, &ld, params.eps3, params.eps3, params.eps3)?;
    if params.enforce_conditions {
        let failed = conditions.failed_required(Algorithm::Alg2);
        if !failed.is_empty() {
            let ids: Vec<&str> = failed.iter().map(|e| e.id).collect();
            return Err(Error::ConditionsFailed(ids.join(", ")));
        }
    }
    let oracle = solve_spectral_relaxation(&lu)?;
    let threshold = 1e-12 * (g.edges().map(|(_, _, a)| a).sum::<f64>() * t.d() as f64).max(1.0);
    let projected_cost = oracle
        .projected_labels()
        .ok()
        .and_then(|labels| pairwise_cost(g, t, &labels).ok())
        .filter(|&c| c > threshold);
    let inverted_cost = NodeCollection::new(oracle.blocks())
        .ok()
        .and_then(|blocks| inverted_label_cost(g, t, &blocks).ok())
        .filter(|&c| c > threshold);

    let d = t.d();
    let agents: Vec<Alg2Agent> = (0..g.n())
        .map(|i| Alg2Agent {
            id: i,
            eps3: params.eps3,
            k: 0,
            r_tilde: DMatrix::identity(d, d),
            row: g
                .out_neighbors(i)
                .iter()
                .map(|&j| WeightedEdge {
                    neighbor: j,
                    weight: g.weight(i, j).expect("edge"),
                    transform: t.get(i, j).expect("edge").clone(),
                })
                .collect(),
        })
        .collect();

    let mut net = Network::new(g.clone(), agents)?;
    let stride = crate::algo1::effective_stride(params.trace_stride, params.iterations);
    let mut trace = ExperimentTrace::new(params.run_id);
    run_rounds(&mut net, params.iterations, |round, net| {
        if round % stride == 0 || round == params.iterations {
            trace.rows.push(observe_row(
                g,
                t,
                projected_cost,
                inverted_cost,
                round,
                net.agents(),
                qsc_warning,
            ));
        }
        Ok(())
    })?;

    Ok(Alg2Run {
        agents: net.into_agents(),
        trace,
        oracle,
        conditions,
        qsc_warning,
    })
}

fn observe_row(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    projected_cost: Option<f64>,
    inverted_cost: Option<f64>,
    round: usize,
    agents: &[Alg2Agent],
    qsc_warning: bool,
) -> TraceRow {
    let mut notes: Vec<String> = Vec::new();
    if qsc_warning && round == 0 {
        notes.push("not-qsc".into());
    }
    if projected_cost.is_none() {
        notes.push("gap-undefined:consistent-reference".into());
    }
    let outputs: Option<Vec<DMatrix<f64>>> = agents.iter().map(|a| a.output()).collect();
    let gap_r = match (projected_cost, outputs.and_then(|m| NodeCollection::new(m).ok())) {
        (Some(den), Some(labels)) => pairwise_cost(g, t, &labels)
            .ok()
            .map(|num| (num / den - 1.0).abs()),
        _ => None,
    };
    let iterates: Option<NodeCollection> =
        NodeCollection::new(agents.iter().map(|a| a.r_tilde.clone()).collect()).ok();
    let gap_rtilde_inv = match (inverted_cost, iterates) {
        (Some(den), Some(labels)) => inverted_label_cost(g, t, &labels)
            .ok()
            .map(|num| (num / den - 1.0).abs()),
        _ => None,
    };
    TraceRow {
        iter: round,
        gap_r,
        gap_q: None,
        gap_rtilde_inv,
        gap_qtilde_inv: None,
        fallback_count: None,
        notes: notes.join(";"),
    }
}

fn require_orthogonal(g: &DirectedGraph, t: &EdgeTransformSet) -> Result<()> {
    if t.orthogonal_mode() {
        return Ok(());
    }
    let id = DMatrix::identity(t.d(), t.d());
    let (mut wi, mut wj, mut worst) = (0, 0, 0.0);
    for (i, j, _) in g.edges() {
        let r = t.get(i, j).expect("edge");
        let resid = (r.transpose() * r - &id).norm();
        if resid > worst {
            (wi, wj, worst) = (i, j, resid);
        }
    }
    Err(Error::NotOrthogonal {
        i: wi,
        j: wj,
        residual: worst,
    })
}
