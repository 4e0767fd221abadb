//! Directed weighted graphs.
//!
//! Nodes are `0..n` internally (the text format is 1-based). An edge `(i, j)`
//! with weight `a_ij > 0` means node `i` listens to node `j`: the neighbor set
//! is `N_i = {j : (i,j) ∈ E}`. Connectivity is classified along four axes:
//!
//! - *connected*: an undirected path joins every pair of nodes;
//! - *quasi-strongly connected (QSC)*: some node (a center) is reachable from
//!   every other node by a directed path;
//! - *strongly connected*: every node reaches every other node;
//! - *symmetric*: `(i,j) ∈ E ⇒ (j,i) ∈ E`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How [`DirectedGraph::random`] shapes the topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// Symmetric edge set built from a mirrored spanning tree; always connected.
    SymmetricConnected,
    /// Quasi-strongly connected and in general asymmetric; built from a random
    /// arborescence oriented toward a random center.
    Qsc,
}

impl GraphMode {
    fn name(self) -> &'static str {
        match self {
            GraphMode::SymmetricConnected => "symmetric-connected",
            GraphMode::Qsc => "qsc",
        }
    }
}

/// Connectivity flags for a directed graph.
///
/// Invariant: `strongly_connected ⇒ quasi_strongly_connected ⇒ connected`,
/// and `quasi_strongly_connected ⇔ !centers.is_empty()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub connected: bool,
    pub quasi_strongly_connected: bool,
    /// Nodes reachable from every other node by a directed path.
    pub centers: Vec<usize>,
    pub strongly_connected: bool,
    pub symmetric: bool,
}

/// A weighted directed graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    n: usize,
    /// Lexicographically sorted edge list.
    edges: Vec<(usize, usize)>,
    /// Weights parallel to `edges`; all strictly positive.
    weights: Vec<f64>,
    /// Sorted out-neighbor lists.
    out: Vec<Vec<usize>>,
    index: BTreeMap<(usize, usize), usize>,
}

impl DirectedGraph {
    /// Builds a graph from an edge list. Rejects self-loops, duplicate edges,
    /// out-of-range node ids and non-positive weights.
    pub fn new(n: usize, edge_list: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("node count must be positive".into()));
        }
        let mut entries: Vec<(usize, usize, f64)> = edge_list.to_vec();
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut edges = Vec::with_capacity(entries.len());
        let mut weights = Vec::with_capacity(entries.len());
        let mut index = BTreeMap::new();
        let mut out = vec![Vec::new(); n];
        for (i, j, a) in entries {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i},{j}) out of range for {n} nodes"
                )));
            }
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "weight {a} on edge ({i},{j}) must be positive and finite"
                )));
            }
            if index.insert((i, j), edges.len()).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i},{j})")));
            }
            out[i].push(j);
            edges.push((i, j));
            weights.push(a);
        }
        Ok(Self {
            n,
            edges,
            weights,
            out,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic order with their weights.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges
            .iter()
            .zip(&self.weights)
            .map(|(&(i, j), &a)| (i, j, a))
    }

    /// Sorted out-neighbor list `N_i`.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.index.contains_key(&(i, j))
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.index.get(&(i, j)).map(|&k| self.weights[k])
    }

    /// Weighted adjacency matrix `A` with `A[i,j] = a_ij`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, j, w) in self.edges() {
            a[(i, j)] = w;
        }
        a
    }

    /// Weighted scalar Laplacian `L = diag(A 1) - A`. Row sums are exactly zero.
    pub fn scalar_laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for (i, j, w) in self.edges() {
            l[(i, j)] = -w;
            l[(i, i)] += w;
        }
        l
    }

    /// Laplacian of the unweighted topology (every present edge counts 1).
    /// This is the mixing matrix of the scalar consensus protocol, which sums
    /// plain neighbor differences without edge weights.
    pub fn unweighted_laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for (i, j, _) in self.edges() {
            l[(i, j)] = -1.0;
            l[(i, i)] += 1.0;
        }
        l
    }

    /// The graph with every edge reversed (weights follow their edge).
    pub fn reversed(&self) -> DirectedGraph {
        let rev: Vec<(usize, usize, f64)> =
            self.edges().map(|(i, j, a)| (j, i, a)).collect();
        DirectedGraph::new(self.n, &rev).expect("reversal preserves validity")
    }

    fn reachable_from(&self, start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Classifies connectivity by exhaustive graph search: undirected
    /// reachability for `connected`, per-node reverse reachability for
    /// `centers` (and hence strong connectivity), and an edge-set mirror test
    /// for `symmetric`.
    pub fn classify(&self) -> ConnectivityReport {
        let mut undirected = vec![Vec::new(); self.n];
        let mut reverse = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            undirected[i].push(j);
            undirected[j].push(i);
            reverse[j].push(i);
        }
        let connected = self
            .reachable_from(0, &undirected)
            .iter()
            .all(|&s| s);
        // c is a center iff every node reaches c, i.e. c reaches every node
        // in the reversed graph.
        let centers: Vec<usize> = (0..self.n)
            .filter(|&c| self.reachable_from(c, &reverse).iter().all(|&s| s))
            .collect();
        let quasi_strongly_connected = !centers.is_empty();
        let strongly_connected = centers.len() == self.n;
        let symmetric = self
            .edges
            .iter()
            .all(|&(i, j)| self.index.contains_key(&(j, i)));
        ConnectivityReport {
            connected,
            quasi_strongly_connected,
            centers,
            strongly_connected,
            symmetric,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges
            .iter()
            .all(|&(i, j)| self.index.contains_key(&(j, i)))
    }

    /// Generates a random graph with roughly `density * n * (n-1)` directed
    /// edges (unit weights), deterministic in the seed.
    ///
    /// A spanning structure guaranteeing the requested mode is built first -- a
    /// mirrored spanning tree for [`GraphMode::SymmetricConnected`], a random
    /// arborescence oriented into a random center for [`GraphMode::Qsc`] --
    /// and uniformly random extra edges are added until the density target is
    /// met. The classification is verified before returning.
    pub fn random(n: usize, density: f64, mode: GraphMode, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("node count must be positive".into()));
        }
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidGraph(format!(
                "density {density} outside (0, 1]"
            )));
        }
        let max_edges = n * (n - 1);
        let target = ((density * max_edges as f64).round() as usize).min(max_edges);
        let minimum = match mode {
            GraphMode::SymmetricConnected => 2 * (n - 1),
            GraphMode::Qsc => n - 1,
        };
        if target < minimum {
            return Err(Error::InfeasibleDensity {
                density,
                mode: mode.name(),
                n,
                minimum,
                target,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edge_set: BTreeMap<(usize, usize), f64> = BTreeMap::new();

        // Random recursive tree on a shuffled labeling: node order[v] attaches
        // to a uniformly random earlier node.
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut tree: Vec<(usize, usize)> = Vec::with_capacity(n.saturating_sub(1));
        for v in 1..n {
            let u = rng.random_range(0..v);
            tree.push((order[v], order[u]));
        }

        match mode {
            GraphMode::SymmetricConnected => {
                for &(u, v) in &tree {
                    edge_set.insert((u, v), 1.0);
                    edge_set.insert((v, u), 1.0);
                }
                let mut candidates: Vec<(usize, usize)> = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| !edge_set.contains_key(&(i, j)))
                    .collect();
                candidates.shuffle(&mut rng);
                for (i, j) in candidates {
                    if edge_set.len() + 2 > target {
                        break;
                    }
                    edge_set.insert((i, j), 1.0);
                    edge_set.insert((j, i), 1.0);
                }
            }
            GraphMode::Qsc => {
                // order[0] is the center; tree edges (child, parent) point at it.
                for &(u, v) in &tree {
                    edge_set.insert((u, v), 1.0);
                }
                let mut candidates: Vec<(usize, usize)> = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| i != j && !edge_set.contains_key(&(i, j)))
                    .collect();
                candidates.shuffle(&mut rng);
                for (i, j) in candidates {
                    if edge_set.len() >= target {
                        break;
                    }
                    edge_set.insert((i, j), 1.0);
                }
            }
        }

        let list: Vec<(usize, usize, f64)> =
            edge_set.into_iter().map(|((i, j), a)| (i, j, a)).collect();
        let g = DirectedGraph::new(n, &list)?;
        let report = g.classify();
        let ok = match mode {
            GraphMode::SymmetricConnected => report.symmetric && report.connected,
            GraphMode::Qsc => report.quasi_strongly_connected,
        };
        if !ok {
            return Err(Error::InvalidGraph(format!(
                "generated graph failed {} verification",
                mode.name()
            )));
        }
        Ok(g)
    }

    /// Serializes to the text format: first line `n m`, then `m` lines
    /// `i j a_ij` with 1-based node ids.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n, self.edges.len());
        for (i, j, a) in self.edges() {
            let _ = writeln!(s, "{} {} {}", i + 1, j + 1, a);
        }
        s
    }

    /// Parses the text format produced by [`DirectedGraph::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: String| Error::Parse {
            what: "graph file",
            line: line + 1,
            msg,
        };
        let (lno, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty file".into()))?;
        let mut it = header.split_whitespace();
        let n: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(lno, "expected node count".into()))?;
        let m: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(lno, "expected edge count".into()))?;
        let mut list = Vec::with_capacity(m);
        for _ in 0..m {
            let (lno, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, format!("expected {m} edge lines")))?;
            let mut it = line.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(lno, "expected source id".into()))?;
            let j: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(lno, "expected target id".into()))?;
            let a: f64 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(lno, "expected weight".into()))?;
            if i == 0 || j == 0 {
                return Err(parse_err(lno, "node ids are 1-based".into()));
            }
            list.push((i - 1, j - 1, a));
        }
        DirectedGraph::new(n, &list)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> DirectedGraph {
        DirectedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn classify_directed_chain() {
        let r = chain3().classify();
        assert!(r.connected);
        assert!(r.quasi_strongly_connected);
        assert_eq!(r.centers, vec![2]);
        assert!(!r.strongly_connected);
        assert!(!r.symmetric);
    }

    #[test]
    fn classify_directed_cycle() {
        let g = DirectedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        let r = g.classify();
        assert!(r.strongly_connected);
        assert_eq!(r.centers, vec![0, 1, 2]);
        assert!(r.quasi_strongly_connected && r.connected);
        assert!(!r.symmetric);
    }

    #[test]
    fn classify_isolated_nodes() {
        let g = DirectedGraph::new(2, &[]).unwrap();
        let r = g.classify();
        assert!(!r.connected);
        assert!(!r.quasi_strongly_connected);
        assert!(r.centers.is_empty());
    }

    #[test]
    fn laplacian_single_edge() {
        let g = DirectedGraph::new(2, &[(0, 1, 1.0)]).unwrap();
        let l = g.scalar_laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn laplacian_symmetric_pair() {
        let g = DirectedGraph::new(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let l = g.scalar_laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_three_cycle_rows() {
        let g = DirectedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        let l = g.scalar_laplacian();
        // Each row: 1 on the diagonal, -1 on the successor.
        for i in 0..3 {
            assert_eq!(l[(i, i)], 1.0);
            assert_eq!(l[(i, (i + 1) % 3)], -1.0);
        }
    }

    #[test]
    fn laplacian_annihilates_ones() {
        let g = DirectedGraph::random(7, 0.6, GraphMode::Qsc, 11).unwrap();
        let l = g.scalar_laplacian();
        let ones = nalgebra::DVector::from_element(7, 1.0);
        assert_eq!((l * ones).abs().max(), 0.0);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(DirectedGraph::new(2, &[(0, 0, 1.0)]).is_err());
        assert!(DirectedGraph::new(2, &[(0, 3, 1.0)]).is_err());
        assert!(DirectedGraph::new(2, &[(0, 1, 0.0)]).is_err());
        assert!(DirectedGraph::new(2, &[(0, 1, 1.0), (0, 1, 2.0)]).is_err());
    }

    #[test]
    fn random_symmetric_mode() {
        let g = DirectedGraph::random(10, 0.9, GraphMode::SymmetricConnected, 3).unwrap();
        let r = g.classify();
        assert!(r.symmetric && r.connected);
        let target = (0.9 * 90.0f64).round() as usize;
        assert!((g.num_edges() as i64 - target as i64).abs() <= 1);
    }

    #[test]
    fn random_qsc_mode() {
        let g = DirectedGraph::random(10, 0.5, GraphMode::Qsc, 4).unwrap();
        assert!(g.classify().quasi_strongly_connected);
        assert_eq!(g.num_edges(), (0.5 * 90.0f64).round() as usize);
    }

    #[test]
    fn random_two_node_complete() {
        let g = DirectedGraph::random(2, 1.0, GraphMode::SymmetricConnected, 0).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
    }

    #[test]
    fn random_is_deterministic() {
        let a = DirectedGraph::random(9, 0.4, GraphMode::Qsc, 77).unwrap();
        let b = DirectedGraph::random(9, 0.4, GraphMode::Qsc, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_infeasible_density() {
        assert!(matches!(
            DirectedGraph::random(10, 0.05, GraphMode::SymmetricConnected, 0),
            Err(Error::InfeasibleDensity { .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let g = DirectedGraph::random(6, 0.5, GraphMode::Qsc, 9).unwrap();
        let text = g.to_text();
        let h = DirectedGraph::from_text(&text).unwrap();
        assert_eq!(g, h);
        assert_eq!(text, h.to_text());
    }

    /// Brute-force transitive closure by Floyd-Warshall.
    fn closure(g: &DirectedGraph) -> Vec<Vec<bool>> {
        let n = g.n();
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            reach[i][i] = true;
        }
        for (i, j, _) in g.edges() {
            reach[i][j] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    reach[i][j] |= reach[i][k] && reach[k][j];
                }
            }
        }
        reach
    }

    #[test]
    fn classify_matches_transitive_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC1A5);
        for trial in 0..300 {
            let n = 1 + (trial % 6);
            let mut list = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random_bool(0.35) {
                        list.push((i, j, 1.0));
                    }
                }
            }
            let g = DirectedGraph::new(n, &list).unwrap();
            let r = g.classify();
            let reach = closure(&g);
            let strong = (0..n).all(|i| (0..n).all(|j| reach[i][j]));
            let centers: Vec<usize> = (0..n)
                .filter(|&c| (0..n).all(|i| reach[i][c]))
                .collect();
            // Undirected connectivity from the symmetrized closure.
            let mut und = DirectedGraph::new(n, &[]).unwrap();
            let mut sym_list = Vec::new();
            for (i, j, _) in g.edges() {
                sym_list.push((i, j, 1.0));
                if !g.has_edge(j, i) {
                    sym_list.push((j, i, 1.0));
                }
            }
            und = DirectedGraph::new(n, &sym_list).unwrap();
            let und_reach = closure(&und);
            let connected = (0..n).all(|j| und_reach[0][j]);

            assert_eq!(r.strongly_connected, strong, "trial {trial}");
            assert_eq!(r.centers, centers, "trial {trial}");
            assert_eq!(r.quasi_strongly_connected, !centers.is_empty());
            assert_eq!(r.connected, connected, "trial {trial}");
            if r.strongly_connected {
                assert!(r.quasi_strongly_connected);
            }
            if r.quasi_strongly_connected {
                assert!(r.connected);
            }
        }
    }
}
