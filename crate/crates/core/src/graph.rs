//! Undirected "same location" graph over the frames of a sequence.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcd::PcdModel;
use crate::trajectory::FrameSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionGraph {
    num_nodes: usize,
    /// Row-major `K x K`, symmetric, false diagonal.
    adjacency: Vec<bool>,
    /// `k / (K - 1)` for node `k`.
    node_index_feature: Vec<f64>,
}

impl DetectionGraph {
    /// Graph with no edges and normalized index features.
    pub fn empty(num_nodes: usize) -> Self {
        let denom = num_nodes.saturating_sub(1).max(1) as f64;
        DetectionGraph {
            num_nodes,
            adjacency: vec![false; num_nodes * num_nodes],
            node_index_feature: (0..num_nodes).map(|k| k as f64 / denom).collect(),
        }
    }

    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(num_nodes);
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        let k = self.num_nodes;
        if a >= k || b >= k {
            return Err(Error::InvalidInput(format!("edge ({a}, {b}) outside {k} nodes")));
        }
        if a == b {
            return Err(Error::InvalidInput(format!("self-loop at node {a}")));
        }
        self.adjacency[a * k + b] = true;
        self.adjacency[b * k + a] = true;
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.num_nodes + b]
    }

    pub fn node_index_feature(&self) -> &[f64] {
        &self.node_index_feature
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let k = self.num_nodes;
        (0..k).filter(move |&u| self.adjacency[v * k + u])
    }

    /// Edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let k = self.num_nodes;
        let mut out = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                if self.has_edge(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    /// Two disconnected copies of this graph; the copy's nodes keep the
    /// original index features.
    pub fn duplicated(&self) -> Self {
        let k = self.num_nodes;
        let mut g = DetectionGraph::empty(2 * k);
        for (a, b) in self.edges() {
            g.add_edge(a, b).unwrap();
            g.add_edge(a + k, b + k).unwrap();
        }
        g.node_index_feature = self.node_index_feature.iter().chain(&self.node_index_feature).copied().collect();
        g
    }

    /// Edge-list dump: a `K=<n>` header line then one `a b` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("K={}\n", self.num_nodes);
        for (a, b) in self.edges() {
            let _ = writeln!(s, "{a} {b}");
        }
        s
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing K=<n> header".into(),
        })?;
        let k: usize = header
            .trim()
            .strip_prefix("K=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("bad header '{header}'"),
            })?;
        if k > 1 << 16 {
            return Err(Error::Parse {
                line: 1,
                message: format!("graph with {k} nodes is too large"),
            });
        }
        let mut g = DetectionGraph::empty(k);
        for (i, line) in lines {
            let mut it = line.split_whitespace();
            let parse = |t: Option<&str>| -> Result<usize> {
                t.and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: format!("bad edge '{line}'"),
                })
            };
            let a = parse(it.next())?;
            let b = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("trailing tokens in '{line}'"),
                });
            }
            g.add_edge(a, b).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(g)
    }
}

/// Connects frames whose position-change statistic is at most `threshold`.
pub fn graph_from_statistic<F>(num_nodes: usize, threshold: f64, mut statistic: F) -> Result<DetectionGraph>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    let mut g = DetectionGraph::empty(num_nodes);
    for a in 0..num_nodes {
        for b in a + 1..num_nodes {
            if statistic(a, b)? <= threshold {
                g.add_edge(a, b)?;
            }
        }
    }
    Ok(g)
}

/// Evaluates the detector on all `K(K-1)/2` frame pairs and links the pairs
/// judged to share a location.
pub fn build_graph(frames: &FrameSequence, pcd: &PcdModel) -> Result<DetectionGraph> {
    let k = frames.len();
    if k < 2 {
        return Err(Error::InvalidInput("a detection graph needs at least 2 frames".into()));
    }
    let threshold = pcd.threshold()?;
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    let mut refs = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            pairs.push((a, b));
            refs.push((frames.features[a].values(), frames.features[b].values()));
        }
    }
    let stats = pcd.statistics(&refs)?;
    let mut g = DetectionGraph::empty(k);
    for (&(a, b), &s) in pairs.iter().zip(&stats) {
        if s <= threshold {
            g.add_edge(a, b)?;
        }
    }
    Ok(g)
}

/// Connected components, each sorted, ordered by smallest member.
pub fn graph_components(g: &DetectionGraph) -> Vec<Vec<usize>> {
    let k = g.num_nodes();
    let mut seen = vec![false; k];
    let mut out = Vec::new();
    for start in 0..k {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(v) = stack.pop() {
            comp.push(v);
            for u in g.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}
