//! Distributed iteration for symmetric graphs.
//!
//! Each agent holds an iterate `R̃_i(k)` driven by the linear update
//!
//! ```text
//! R̃_i(k) = R̃_i(k-1) + eps1 Σ_(j∈N_i) (Q_ij R̃_j(k-1) - V_ij R̃_i(k-1)),
//! Q_ij = a_ij R_ij + a_ji R_jiᵀ,   V_ij = (a_ij + a_ji) I,
//! ```
//!
//! whose stacked form is the power iteration `(I - eps1 L_undir) R̃(k-1)`.
//! Because the modes of that iteration decay at different rates, a second
//! track rescales the iterate columns: the quotient
//! `R̃_i(k-1)^{-1} R̃_i(k)` is eigendecomposed as `P^{-1} D̄ P` and
//! `Q̃_i(k) = R̃_i(k) P^{-1} D̄^{-k}` undoes the per-mode decay. The squared
//! column norms `d̃_is` of `Q̃_i` feed a dynamic average consensus whose states
//! `d_is` track their network average; `diag(d_i)^{-1/2}` then equalizes the
//! columns so that the projected outputs `Q_i(k)` converge to the projected
//! blocks of the spectral-relaxation optimum.
//!
//! The couplings `Q_ij`, `V_ij` are precomputed at initialization; agents
//! never read the edge transforms afterwards.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::netsim::{run_rounds, Agent, Network};
use crate::ortho::{general_eigen, project_orthogonal};
use crate::sync::{
    build_directed_laplacian, build_undirected_laplacian, check_conditions, inverted_label_cost,
    pairwise_cost, solve_spectral_relaxation, Algorithm, ConditionReport, EdgeTransformSet,
    NodeCollection, SpectralSolution,
};
use crate::trace::{ExperimentTrace, TraceRow};

/// Consensus entries below `D_POSITIVITY_FLOOR * max_s d_is` block the
/// rescaled output for that round.
pub const D_POSITIVITY_FLOOR: f64 = 1e-12;

/// Run parameters for the symmetric-graph iteration.
#[derive(Debug, Clone)]
pub struct Alg1Params {
    pub eps1: f64,
    pub eps2: f64,
    pub iterations: usize,
    /// Initial consensus value `d_is(0)`. The update conserves
    /// `Σ_i d_is(k) = Σ_i d̃_is(k-1)` exactly when this matches the all-ones
    /// history initialization, so 1 is the default; 0 is selectable.
    pub d_init: f64,
    /// Record every `trace_stride`-th round (plus the final one); 0 picks a
    /// stride that keeps about 200 rows.
    pub trace_stride: usize,
    /// Refuse to run when a required convergence condition fails.
    pub enforce_conditions: bool,
    pub run_id: u64,
}

impl Default for Alg1Params {
    fn default() -> Self {
        Self {
            eps1: 0.05,
            eps2: 0.05,
            iterations: 1000,
            d_init: 1.0,
            trace_stride: 0,
            enforce_conditions: true,
            run_id: 0,
        }
    }
}

impl Alg1Params {
    /// Both step sizes set to `1/(2n)`.
    pub fn auto_steps(mut self, n: usize) -> Self {
        self.eps1 = 1.0 / (2.0 * n as f64);
        self.eps2 = self.eps1;
        self
    }
}

/// Per-neighbor coupling fixed at initialization.
#[derive(Debug, Clone)]
struct Coupling {
    neighbor: usize,
    q: DMatrix<f64>,
    v: f64,
}

/// Snapshot exchanged between neighbors each round.
#[derive(Debug, Clone)]
pub struct Alg1Msg {
    pub r_tilde: DMatrix<f64>,
    pub d_vec: DVector<f64>,
}

/// Outputs extracted from one agent at one round; `None` marks a withheld
/// value with the reason alongside.
#[derive(Debug, Clone)]
pub struct AgentOutputs {
    pub r: Option<DMatrix<f64>>,
    pub q: Option<DMatrix<f64>>,
    pub r_withheld: Option<&'static str>,
    pub q_withheld: Option<&'static str>,
}

/// One node of the symmetric-graph iteration.
#[derive(Debug, Clone)]
pub struct Alg1Agent {
    id: usize,
    d: usize,
    eps1: f64,
    eps2: f64,
    k: usize,
    r_tilde: DMatrix<f64>,
    q_tilde: DMatrix<f64>,
    d_vec: DVector<f64>,
    d_tilde_prev: DVector<f64>,
    d_tilde_prev2: DVector<f64>,
    fallback_active: bool,
    couplings: Vec<Coupling>,
}

impl Alg1Agent {
    fn new(
        id: usize,
        d: usize,
        eps1: f64,
        eps2: f64,
        d_init: f64,
        couplings: Vec<Coupling>,
    ) -> Self {
        Self {
            id,
            d,
            eps1,
            eps2,
            k: 0,
            r_tilde: DMatrix::identity(d, d),
            q_tilde: DMatrix::identity(d, d),
            d_vec: DVector::from_element(d, d_init),
            d_tilde_prev: DVector::from_element(d, 1.0),
            d_tilde_prev2: DVector::from_element(d, 1.0),
            fallback_active: false,
            couplings,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn r_tilde(&self) -> &DMatrix<f64> {
        &self.r_tilde
    }

    pub fn q_tilde(&self) -> &DMatrix<f64> {
        &self.q_tilde
    }

    pub fn d_vec(&self) -> &DVector<f64> {
        &self.d_vec
    }

    /// `d̃_i` of the latest completed round.
    pub fn d_tilde(&self) -> &DVector<f64> {
        &self.d_tilde_prev
    }

    /// `d̃_i` of the round before it.
    pub fn d_tilde_old(&self) -> &DVector<f64> {
        &self.d_tilde_prev2
    }

    pub fn fallback_active(&self) -> bool {
        self.fallback_active
    }

    /// Projected outputs `R_i(k)` and `Q_i(k)`; preconditions that fail make
    /// the corresponding output absent rather than erroring.
    pub fn extract_outputs(&self) -> AgentOutputs {
        let (r, r_withheld) = match project_orthogonal(&self.r_tilde) {
            Ok(p) => (Some(p.transpose()), None),
            Err(_) => (None, Some("r-degenerate")),
        };
        let dmax = self.d_vec.max();
        let (q, q_withheld) = if !(dmax > 0.0) || self.d_vec.min() <= D_POSITIVITY_FLOOR * dmax {
            (None, Some("d-nonpositive"))
        } else {
            let mut scaled = self.q_tilde.clone();
            for s in 0..self.d {
                let f = 1.0 / self.d_vec[s].sqrt();
                for r in 0..self.d {
                    scaled[(r, s)] *= f;
                }
            }
            match project_orthogonal(&scaled) {
                Ok(p) => (Some(p.transpose()), None),
                Err(_) => (None, Some("q-degenerate")),
            }
        };
        AgentOutputs {
            r,
            q,
            r_withheld,
            q_withheld,
        }
    }
}

/// The linear iterate update from the previous round's neighbor snapshots.
fn step_iterate(
    r_tilde: &DMatrix<f64>,
    couplings: &[Coupling],
    inbox: &[(usize, Alg1Msg)],
    eps1: f64,
) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(r_tilde.nrows(), r_tilde.ncols());
    for (c, (sender, msg)) in couplings.iter().zip(inbox) {
        debug_assert_eq!(c.neighbor, *sender);
        acc += &c.q * &msg.r_tilde;
        acc -= r_tilde * c.v;
    }
    r_tilde + acc * eps1
}

/// Outcome of the per-round column rescaling.
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub q_tilde: DMatrix<f64>,
    pub d_tilde: DVector<f64>,
    pub fallback: bool,
}

/// Column rescaling of the iterate against its per-mode decay.
///
/// When either iterate is singular, or the spectrum of
/// `R̃(k-1)^{-1} R̃(k)` is not real, simple and positive, the fallback keeps
/// `Q̃ = R̃(k)` and `d̃ = 1`. Otherwise the decomposition `P^{-1} D̄ P` gives
/// `Q̃ = R̃(k) P^{-1} D̄^{-k}` and `d̃_s` is the squared norm of its s-th
/// column. An unrepresentable `D̄^{-k}` aborts the run.
pub fn modal_rescale(
    r_prev: &DMatrix<f64>,
    r_curr: &DMatrix<f64>,
    k: usize,
) -> Result<Rescaled> {
    let d = r_curr.nrows();
    let fallback = |r_curr: &DMatrix<f64>| Rescaled {
        q_tilde: r_curr.clone(),
        d_tilde: DVector::from_element(d, 1.0),
        fallback: true,
    };
    let (Some(prev_inv), true) = (
        r_prev.clone().try_inverse(),
        r_curr.clone().try_inverse().is_some(),
    ) else {
        return Ok(fallback(r_curr));
    };
    let quotient = prev_inv * r_curr;
    let eig = general_eigen(&quotient)?;
    if !(eig.all_real && eig.all_distinct && eig.all_positive) {
        return Ok(fallback(r_curr));
    }
    // Eigenvector factors can be withheld when the spectrum is only barely
    // simple; that is a fallback round too.
    let Some(p_inv) = eig.p_inv.as_ref() else {
        return Ok(fallback(r_curr));
    };
    let mut q_tilde = r_curr * p_inv;
    for (s, z) in eig.eigenvalues.iter().enumerate() {
        let scale = z.re.powi(-(k as i32));
        if !scale.is_finite() {
            return Err(Error::ScalingOverflow { iteration: k });
        }
        for r in 0..d {
            q_tilde[(r, s)] *= scale;
        }
    }
    if q_tilde.iter().any(|x| !x.is_finite()) {
        return Err(Error::ScalingOverflow { iteration: k });
    }
    let d_tilde = DVector::from_iterator(d, (0..d).map(|s| q_tilde.column(s).norm_squared()));
    Ok(Rescaled {
        q_tilde,
        d_tilde,
        fallback: false,
    })
}

/// Dynamic average consensus update: previous state, the increment of the
/// tracked signal, and unweighted mixing with the neighbors' states.
fn step_consensus(
    d_vec: &DVector<f64>,
    d_tilde_prev: &DVector<f64>,
    d_tilde_prev2: &DVector<f64>,
    inbox: &[(usize, Alg1Msg)],
    eps2: f64,
) -> DVector<f64> {
    let mut out = d_vec + (d_tilde_prev - d_tilde_prev2);
    for (_, msg) in inbox {
        out += (&msg.d_vec - d_vec) * eps2;
    }
    out
}

impl Agent for Alg1Agent {
    type Msg = Alg1Msg;

    fn snapshot(&self) -> Alg1Msg {
        Alg1Msg {
            r_tilde: self.r_tilde.clone(),
            d_vec: self.d_vec.clone(),
        }
    }

    fn step(&mut self, round: usize, inbox: &[(usize, Alg1Msg)]) -> Result<()> {
        if inbox.len() != self.couplings.len()
            || !inbox
                .iter()
                .zip(&self.couplings)
                .all(|((s, _), c)| *s == c.neighbor)
        {
            let missing = self
                .couplings
                .iter()
                .map(|c| c.neighbor)
                .find(|nb| !inbox.iter().any(|(s, _)| s == nb))
                .unwrap_or(self.id);
            return Err(Error::MissingMessage {
                agent: self.id,
                neighbor: missing,
            });
        }
        let new_r = step_iterate(&self.r_tilde, &self.couplings, inbox, self.eps1);
        let rescaled = modal_rescale(&self.r_tilde, &new_r, round)?;
        let new_d = step_consensus(
            &self.d_vec,
            &self.d_tilde_prev,
            &self.d_tilde_prev2,
            inbox,
            self.eps2,
        );
        self.r_tilde = new_r;
        self.q_tilde = rescaled.q_tilde;
        self.fallback_active = rescaled.fallback;
        self.d_vec = new_d;
        self.d_tilde_prev2 = std::mem::replace(&mut self.d_tilde_prev, rescaled.d_tilde);
        self.k = round;
        Ok(())
    }
}

/// Result of a full run.
pub struct Alg1Run {
    pub agents: Vec<Alg1Agent>,
    pub trace: ExperimentTrace,
    pub oracle: SpectralSolution,
    pub conditions: ConditionReport,
    /// Worst relative error of `Σ_i d_is(k) = Σ_i d̃_is(k-1)` over all rounds
    /// and columns.
    pub conservation_max_rel_err: f64,
}

impl Alg1Run {
    pub fn outputs(&self) -> Vec<AgentOutputs> {
        self.agents.iter().map(|a| a.extract_outputs()).collect()
    }

    /// Collection `{R_i(k)}` when every agent produced one.
    pub fn r_labels(&self) -> Option<NodeCollection> {
        collect_labels(self.outputs().into_iter().map(|o| o.r))
    }

    /// Collection `{Q_i(k)}` when every agent produced one.
    pub fn q_labels(&self) -> Option<NodeCollection> {
        collect_labels(self.outputs().into_iter().map(|o| o.q))
    }
}

fn collect_labels(mats: impl Iterator<Item = Option<DMatrix<f64>>>) -> Option<NodeCollection> {
    let mats: Option<Vec<DMatrix<f64>>> = mats.collect();
    NodeCollection::new(mats?).ok()
}

/// Reference costs for the gap columns, fixed once per run.
struct GapReference {
    projected_cost: Option<f64>,
    inverted_cost: Option<f64>,
    threshold: f64,
}

impl GapReference {
    fn new(
        g: &DirectedGraph,
        t: &EdgeTransformSet,
        oracle: &SpectralSolution,
    ) -> Self {
        let threshold =
            1e-12 * (g.edges().map(|(_, _, a)| a).sum::<f64>() * t.d() as f64).max(1.0);
        let projected_cost = oracle
            .projected_labels()
            .ok()
            .and_then(|labels| pairwise_cost(g, t, &labels).ok());
        let inverted_cost = NodeCollection::new(oracle.blocks())
            .ok()
            .and_then(|blocks| inverted_label_cost(g, t, &blocks).ok());
        Self {
            projected_cost,
            inverted_cost,
            threshold,
        }
    }

    fn gap_from(&self, reference: Option<f64>, numerator: Option<f64>) -> Option<f64> {
        let den = reference?;
        if den <= self.threshold {
            return None;
        }
        Some((numerator? / den - 1.0).abs())
    }
}

/// Records a trace row from the current network state.
fn observe_row(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    reference: &GapReference,
    round: usize,
    agents: &[Alg1Agent],
) -> TraceRow {
    let outputs: Vec<AgentOutputs> = agents.iter().map(|a| a.extract_outputs()).collect();
    let mut notes: Vec<String> = Vec::new();

    let r_labels = collect_labels(outputs.iter().map(|o| o.r.clone()));
    let q_labels = collect_labels(outputs.iter().map(|o| o.q.clone()));
    let withheld_r = outputs.iter().filter(|o| o.r_withheld.is_some()).count();
    let withheld_q = outputs.iter().filter(|o| o.q_withheld.is_some()).count();
    if withheld_r > 0 {
        notes.push(format!("r-withheld:{withheld_r}"));
    }
    if withheld_q > 0 {
        notes.push(format!("q-withheld:{withheld_q}"));
    }
    if reference.projected_cost.map_or(true, |c| c <= reference.threshold) {
        notes.push("gap-undefined:consistent-reference".into());
    }

    let gap_r = reference.gap_from(
        reference.projected_cost,
        r_labels.and_then(|labels| pairwise_cost(g, t, &labels).ok()),
    );
    let gap_q = reference.gap_from(
        reference.projected_cost,
        q_labels.and_then(|labels| pairwise_cost(g, t, &labels).ok()),
    );
    let rt = collect_labels(agents.iter().map(|a| Some(a.r_tilde.clone())));
    let qt = collect_labels(agents.iter().map(|a| Some(a.q_tilde.clone())));
    let gap_rtilde_inv = reference.gap_from(
        reference.inverted_cost,
        rt.and_then(|labels| inverted_label_cost(g, t, &labels).ok()),
    );
    let gap_qtilde_inv = reference.gap_from(
        reference.inverted_cost,
        qt.and_then(|labels| inverted_label_cost(g, t, &labels).ok()),
    );
    let fallback_count = agents.iter().filter(|a| a.fallback_active).count();

    TraceRow {
        iter: round,
        gap_r,
        gap_q,
        gap_rtilde_inv,
        gap_qtilde_inv,
        fallback_count: Some(fallback_count),
        notes: notes.join(";"),
    }
}

/// Runs the full iteration on a symmetric connected instance with orthogonal
/// transforms.
pub fn run_algorithm1(
    g: &DirectedGraph,
    t: &EdgeTransformSet,
    params: &Alg1Params,
) -> Result<Alg1Run> {
    t.validate_pairing(g)?;
    let classification = g.classify();
    if !(classification.symmetric && classification.connected) {
        return Err(Error::InvalidGraph(
            "the symmetric-graph iteration needs a symmetric connected graph".into(),
        ));
    }
    require_orthogonal(g, t)?;

    let lu = build_undirected_laplacian(g, t)?;
    let ld = build_directed_laplacian(g, t)?;
    let conditions = check_conditions(g, t, &lu, &ld, params.eps1, params.eps2, params.eps1)?;
    if params.enforce_conditions {
        let failed = conditions.failed_required(Algorithm::Alg1);
        if !failed.is_empty() {
            let ids: Vec<&str> = failed.iter().map(|e| e.id).collect();
            return Err(Error::ConditionsFailed(ids.join(", ")));
        }
    }
    let oracle = solve_spectral_relaxation(&lu)?;
    let reference = GapReference::new(g, t, &oracle);

    let d = t.d();
    let agents: Vec<Alg1Agent> = (0..g.n())
        .map(|i| {
            let couplings = g
                .out_neighbors(i)
                .iter()
                .map(|&j| {
                    let a_ij = g.weight(i, j).expect("edge");
                    let a_ji = g.weight(j, i).expect("mirror edge of a symmetric graph");
                    Coupling {
                        neighbor: j,
                        q: t.get(i, j).expect("edge") * a_ij
                            + t.get(j, i).expect("mirror edge").transpose() * a_ji,
                        v: a_ij + a_ji,
                    }
                })
                .collect();
            Alg1Agent::new(i, d, params.eps1, params.eps2, params.d_init, couplings)
        })
        .collect();

    let mut net = Network::new(g.clone(), agents)?;
    let stride = effective_stride(params.trace_stride, params.iterations);
    let mut trace = ExperimentTrace::new(params.run_id);
    let mut conservation_max: f64 = 0.0;
    run_rounds(&mut net, params.iterations, |round, net| {
        conservation_max = conservation_max.max(conservation_violation(net.agents()));
        if round % stride == 0 || round == params.iterations {
            trace
                .rows
                .push(observe_row(g, t, &reference, round, net.agents()));
        }
        Ok(())
    })?;

    Ok(Alg1Run {
        agents: net.into_agents(),
        trace,
        oracle,
        conditions,
        conservation_max_rel_err: conservation_max,
    })
}

pub(crate) fn effective_stride(requested: usize, iterations: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        (iterations / 200).max(1)
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

/// Worst relative violation of `Σ_i d_is(k) = Σ_i d̃_is(k-1)` per column.
fn conservation_violation(agents: &[Alg1Agent]) -> f64 {
    let d = agents[0].d;
    let mut worst: f64 = 0.0;
    for s in 0..d {
        let lhs: f64 = agents.iter().map(|a| a.d_vec[s]).sum();
        let rhs: f64 = agents.iter().map(|a| a.d_tilde_prev2[s]).sum();
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
    }
    worst
}
