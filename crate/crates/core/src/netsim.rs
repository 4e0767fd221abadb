//! Synchronous message-passing simulator and instance synthesis.
//!
//! Rounds are Jacobi-style: every agent's inbox is a snapshot of its
//! neighbors' states from the previous round, delivered sorted by sender id,
//! and all agents step inside a barrier. An agent's only access path to the
//! rest of the network is its inbox, so locality holds by construction; an
//! optional audit records the delivered read sets for verification.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, GraphMode};
use crate::ortho::{project_orthogonal, random_orthogonal};
use crate::sync::{EdgeTransformSet, NodeCollection};

/// A node-local protocol participant.
pub trait Agent: Send {
    type Msg: Clone + Send + Sync;

    /// State snapshot broadcast to whoever listens to this node.
    fn snapshot(&self) -> Self::Msg;

    /// One synchronous update from the previous round's neighbor snapshots.
    /// `inbox` holds exactly one `(sender, message)` pair per out-neighbor,
    /// sorted by sender id.
    fn step(&mut self, round: usize, inbox: &[(usize, Self::Msg)]) -> Result<()>;
}

/// Agents plus topology plus the round counter.
pub struct Network<A: Agent> {
    graph: DirectedGraph,
    agents: Vec<A>,
    round: usize,
    audit: Option<Vec<BTreeSet<usize>>>,
}

impl<A: Agent> Network<A> {
    pub fn new(graph: DirectedGraph, agents: Vec<A>) -> Result<Self> {
        if agents.len() != graph.n() {
            return Err(Error::DimensionMismatch {
                context: "agent count",
                expected: graph.n(),
                found: agents.len(),
            });
        }
        Ok(Self {
            graph,
            agents,
            round: 0,
            audit: None,
        })
    }

    /// Enables recording of every delivered sender per agent.
    pub fn with_audit(mut self) -> Self {
        self.audit = Some(vec![BTreeSet::new(); self.graph.n()]);
        self
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn agents(&self) -> &[A] {
        &self.agents
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Senders delivered to each agent so far, when auditing is on.
    pub fn audit(&self) -> Option<&[BTreeSet<usize>]> {
        self.audit.as_deref()
    }

    pub fn into_agents(self) -> Vec<A> {
        self.agents
    }

    /// Runs one barrier round: snapshot all states, deliver, step all agents.
    /// Steps are independent and may run in parallel; results are identical
    /// for any thread count because each inbox is pre-sorted.
    pub fn step_round(&mut self) -> Result<()> {
        let round = self.round + 1;
        let snapshots: Vec<A::Msg> = self.agents.iter().map(|a| a.snapshot()).collect();
        let inboxes: Vec<Vec<(usize, A::Msg)>> = (0..self.graph.n())
            .map(|i| {
                self.graph
                    .out_neighbors(i)
                    .iter()
                    .map(|&j| (j, snapshots[j].clone()))
                    .collect()
            })
            .collect();
        if let Some(audit) = &mut self.audit {
            for (i, inbox) in inboxes.iter().enumerate() {
                audit[i].extend(inbox.iter().map(|(j, _)| *j));
            }
        }
        self.agents
            .par_iter_mut()
            .zip(inboxes.par_iter())
            .try_for_each(|(agent, inbox)| agent.step(round, inbox))
            .map_err(|e| Error::RoundFailed {
                round,
                source: Box::new(e),
            })?;
        self.round = round;
        Ok(())
    }
}

/// Runs `rounds` barrier rounds, invoking `observe` on the initial state and
/// after every round. Observation happens outside the agents, so centralized
/// metrics never leak into agent logic.
pub fn run_rounds<A: Agent>(
    net: &mut Network<A>,
    rounds: usize,
    mut observe: impl FnMut(usize, &Network<A>) -> Result<()>,
) -> Result<()> {
    observe(0, net)?;
    for _ in 0..rounds {
        net.step_round()?;
        observe(net.round, net)?;
    }
    Ok(())
}

/// A synthesized problem instance: ground-truth labels, a graph, and (noisy)
/// relative transforms.
#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub graph: DirectedGraph,
    pub ground_truth: NodeCollection,
    pub transforms: EdgeTransformSet,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Draws ground-truth labels Haar-uniformly from O(d), sets each edge to the
/// orthogonal projection of `R_iᵀ R_j` plus i.i.d. Gaussian noise of the given
/// standard deviation, over a random graph of the requested mode and density.
/// With `noise_sigma = 0` the transforms are exactly consistent.
pub fn synth_instance(
    n: usize,
    d: usize,
    density: f64,
    mode: GraphMode,
    noise_sigma: f64,
    seed: u64,
) -> Result<SynthInstance> {
    if noise_sigma < 0.0 {
        return Err(Error::Synthesis(format!(
            "noise sigma {noise_sigma} must be nonnegative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph_seed = rng.random::<u64>();
    let graph = DirectedGraph::random(n, density, mode, graph_seed)?;
    let ground_truth =
        NodeCollection::new((0..n).map(|_| random_orthogonal(d, &mut rng)).collect())?;

    let mut mats = std::collections::BTreeMap::new();
    for (i, j, _) in graph.edges() {
        let clean = ground_truth.get(i).transpose() * ground_truth.get(j);
        let r = if noise_sigma == 0.0 {
            clean
        } else {
            let mut attempt = 0;
            loop {
                let noise = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal))
                    * noise_sigma;
                match project_orthogonal(&(&clean + noise)) {
                    Ok(q) => break q,
                    Err(_) if attempt == 0 => {
                        attempt += 1;
                        continue;
                    }
                    Err(e) => {
                        return Err(Error::Synthesis(format!(
                            "projection degenerate on edge ({i},{j}) after resample: {e}"
                        )))
                    }
                }
            }
        };
        mats.insert((i, j), r);
    }
    let transforms = EdgeTransformSet::from_fn(&graph, d, |i, j| mats[&(i, j)].clone())?;
    Ok(SynthInstance {
        graph,
        ground_truth,
        transforms,
        noise_sigma,
        seed,
    })
}
