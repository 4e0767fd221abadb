//! Synchronization core: edge transform sets, node label collections, block
//! connection Laplacians, objectives, consistency tests, the spectral
//! relaxation, convergence-condition checks and the nullspace-preserving
//! perturbation.

mod conditions;
mod consistency;
mod laplacian;
mod objective;
mod perturb;
mod spectral;

pub use conditions::{check_conditions, Algorithm, ConditionEntry, ConditionReport};
pub use consistency::{is_transitively_consistent, nullspace_containment, ConsistencyReport};
pub use laplacian::{
    build_directed_laplacian, build_undirected_laplacian, directed_split_residual, quadratic_cost,
    stack_u1,
};
pub use objective::{
    aggregate_cost, gap, inverted_label_cost, label_cost, max_edge_residual, pairwise_cost,
};
pub use perturb::{perturb_consistent, PerturbationInfo};
pub use spectral::{solve_spectral_relaxation, SpectralSolution};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

/// Frobenius residual below which a transform counts as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Default relative tolerance for consistency and nullity decisions.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// One d x d transform per directed edge of a paired graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTransformSet {
    n: usize,
    d: usize,
    edges: Vec<(usize, usize)>,
    transforms: Vec<DMatrix<f64>>,
    index: BTreeMap<(usize, usize), usize>,
    orthogonal: bool,
}

impl EdgeTransformSet {
    /// Builds a transform set over the edges of `g` from a generator closure.
    pub fn from_fn<F>(g: &DirectedGraph, d: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> DMatrix<f64>,
    {
        let mut edges = Vec::with_capacity(g.num_edges());
        let mut transforms = Vec::with_capacity(g.num_edges());
        let mut index = BTreeMap::new();
        for (i, j, _) in g.edges() {
            let r = f(i, j);
            if r.nrows() != d || r.ncols() != d {
                return Err(Error::DimensionMismatch {
                    context: "edge transform",
                    expected: d,
                    found: r.nrows().max(r.ncols()),
                });
            }
            index.insert((i, j), edges.len());
            edges.push((i, j));
            transforms.push(r);
        }
        let mut set = Self {
            n: g.n(),
            d,
            edges,
            transforms,
            index,
            orthogonal: false,
        };
        set.orthogonal = set.max_orthogonality_residual() <= ORTHOGONALITY_TOL;
        Ok(set)
    }

    /// The consistent set generated by node labels: `R_ij = C_i^{-1} C_j`.
    pub fn from_labels(g: &DirectedGraph, labels: &NodeCollection) -> Result<Self> {
        if labels.n() != g.n() {
            return Err(Error::DimensionMismatch {
                context: "label collection size",
                expected: g.n(),
                found: labels.n(),
            });
        }
        let inverses = labels.inverses()?;
        Self::from_fn(g, labels.d(), |i, j| inverses.get(i) * labels.get(j))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        self.index.get(&(i, j)).map(|&k| &self.transforms[k])
    }

    /// True when every transform passed the orthogonality check at build time.
    pub fn orthogonal_mode(&self) -> bool {
        self.orthogonal
    }

    /// Max over edges of the Gram residual `||R^T R - I||_F`.
    pub fn max_orthogonality_residual(&self) -> f64 {
        let id = DMatrix::identity(self.d, self.d);
        self.transforms
            .iter()
            .map(|r| (r.transpose() * r - &id).norm())
            .fold(0.0, f64::max)
    }

    /// Checks that the domain equals the edge set of `g`.
    pub fn validate_pairing(&self, g: &DirectedGraph) -> Result<()> {
        if g.n() != self.n || g.num_edges() != self.edges.len() {
            return Err(Error::TransformMismatch(format!(
                "graph has {} nodes / {} edges, transform set has {} / {}",
                g.n(),
                g.num_edges(),
                self.n,
                self.edges.len()
            )));
        }
        for (i, j, _) in g.edges() {
            if !self.index.contains_key(&(i, j)) {
                return Err(Error::TransformMismatch(format!(
                    "edge ({i},{j}) has no transform"
                )));
            }
        }
        Ok(())
    }

    /// Returns a copy with the transform on one edge replaced.
    pub fn with_replaced(&self, i: usize, j: usize, r: DMatrix<f64>) -> Result<Self> {
        let mut out = self.clone();
        let k = *out
            .index
            .get(&(i, j))
            .ok_or_else(|| Error::TransformMismatch(format!("edge ({i},{j}) not present")))?;
        if r.nrows() != self.d || r.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                context: "replacement transform",
                expected: self.d,
                found: r.nrows().max(r.ncols()),
            });
        }
        out.transforms[k] = r;
        out.orthogonal = out.max_orthogonality_residual() <= ORTHOGONALITY_TOL;
        Ok(out)
    }

    /// Serializes graph and transforms together: header `n d m`, then per edge
    /// a line `i j a_ij` (1-based) followed by `d` rows of `d` entries.
    pub fn to_text(&self, g: &DirectedGraph) -> Result<String> {
        self.validate_pairing(g)?;
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.n, self.d, self.edges.len());
        for (i, j, a) in g.edges() {
            let _ = writeln!(s, "{} {} {}", i + 1, j + 1, a);
            let r = self.get(i, j).expect("pairing validated");
            for row in 0..self.d {
                let line: Vec<String> = (0..self.d).map(|c| format!("{}", r[(row, c)])).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        Ok(s)
    }

    /// Parses the format written by [`EdgeTransformSet::to_text`], recovering
    /// both the graph and the transforms.
    pub fn from_text(text: &str) -> Result<(DirectedGraph, EdgeTransformSet)> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: String| Error::Parse {
            what: "transform file",
            line: line + 1,
            msg,
        };
        let (lno, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty file".into()))?;
        let mut it = header.split_whitespace();
        let next_usize = |it: &mut std::str::SplitWhitespace, name: &str| {
            it.next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| parse_err(lno, format!("expected {name}")))
        };
        let n = next_usize(&mut it, "node count")?;
        let d = next_usize(&mut it, "dimension")?;
        let m = next_usize(&mut it, "edge count")?;
        let mut edge_list = Vec::with_capacity(m);
        let mut mats: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
        for _ in 0..m {
            let (lno, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, format!("expected {m} edge blocks")))?;
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
            let mut r = DMatrix::zeros(d, d);
            for row in 0..d {
                let (lno, line) = lines
                    .next()
                    .ok_or_else(|| parse_err(0, "truncated transform block".into()))?;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(lno, e.to_string()))?;
                if vals.len() != d {
                    return Err(parse_err(lno, format!("expected {d} entries")));
                }
                for (c, v) in vals.iter().enumerate() {
                    r[(row, c)] = *v;
                }
            }
            edge_list.push((i - 1, j - 1, a));
            mats.insert((i - 1, j - 1), r);
        }
        let g = DirectedGraph::new(n, &edge_list)?;
        let set = EdgeTransformSet::from_fn(&g, d, |i, j| mats[&(i, j)].clone())?;
        Ok((g, set))
    }
}

/// An ordered collection of n node labels (d x d real matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCollection {
    d: usize,
    mats: Vec<DMatrix<f64>>,
}

impl NodeCollection {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = mats
            .first()
            .map(|m| m.nrows())
            .ok_or_else(|| Error::InvalidGraph("empty node collection".into()))?;
        for m in &mats {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    context: "node collection member",
                    expected: d,
                    found: m.nrows().max(m.ncols()),
                });
            }
        }
        Ok(Self { d, mats })
    }

    pub fn identities(n: usize, d: usize) -> Self {
        Self {
            d,
            mats: vec![DMatrix::identity(d, d); n],
        }
    }

    pub fn n(&self) -> usize {
        self.mats.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.mats[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.mats.iter()
    }

    /// Member-wise inverse; fails on any singular member.
    pub fn inverses(&self) -> Result<NodeCollection> {
        let mut out = Vec::with_capacity(self.mats.len());
        for m in &self.mats {
            out.push(m.clone().try_inverse().ok_or(Error::Singular {
                context: "node collection inverse",
            })?);
        }
        Ok(NodeCollection {
            d: self.d,
            mats: out,
        })
    }

    /// Member-wise transpose.
    pub fn transposes(&self) -> NodeCollection {
        NodeCollection {
            d: self.d,
            mats: self.mats.iter().map(|m| m.transpose()).collect(),
        }
    }

    /// Max over members of the Gram residual `||C^T C - I||_F`.
    pub fn max_orthogonality_residual(&self) -> f64 {
        let id = DMatrix::identity(self.d, self.d);
        self.mats
            .iter()
            .map(|m| (m.transpose() * m - &id).norm())
            .fold(0.0, f64::max)
    }
}

/// Which block connection Laplacian a matrix is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    Undirected,
    Directed,
}

/// Dense nd x nd block connection Laplacian.
#[derive(Debug, Clone)]
pub struct BlockLaplacian {
    n: usize,
    d: usize,
    kind: LaplacianKind,
    matrix: DMatrix<f64>,
}

impl BlockLaplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Copy of the `(i, j)` block.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.matrix
            .view((i * self.d, j * self.d), (self.d, self.d))
            .into_owned()
    }

    pub(crate) fn from_parts(n: usize, d: usize, kind: LaplacianKind, matrix: DMatrix<f64>) -> Self {
        Self { n, d, kind, matrix }
    }
}
