//! Motion graph across consecutive clips and its dominant path.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clips::Clip;
use crate::error::{Error, Result};
use crate::geometry::{match_stats, GeometryParams, RigidMotion};
use crate::traj::{SpanTable, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphParams {
    /// Width (pixels of mean geometric error) of the Gaussian match weight.
    pub sigma: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams { sigma: 0.15 }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::Config("graph sigma must be positive".into()));
        }
        Ok(())
    }
}

/// `exp(-g² / 2σ²)` for the mean geometric error `g` of a trajectory under
/// a motion; trajectories with no tested match get `g = 2 ε_f`.
pub fn match_weight(
    traj: &Trajectory,
    motion: &RigidMotion,
    g: &GeometryParams,
    sigma: f64,
) -> f64 {
    let mean = match_stats(traj, &motion.model, g.inlier_px)
        .mean_error()
        .unwrap_or(2.0 * g.inlier_px);
    gaussian(mean, sigma)
}

#[inline]
pub fn gaussian(err: f64, sigma: f64) -> f64 {
    (-(err * err) / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphNode {
    /// Member trajectory indices, sorted.
    pub members: Vec<usize>,
    /// `G(T, M) · v(T)` for each member, aligned with `members`.
    pub weighted: Vec<f64>,
    /// Sum of `weighted`: the path base score when the node is in clip 0.
    pub omega: f64,
}

impl GraphNode {
    pub fn new(members: Vec<usize>, weighted: Vec<f64>) -> Self {
        debug_assert_eq!(members.len(), weighted.len());
        let omega = weighted.iter().sum();
        GraphNode {
            members,
            weighted,
            omega,
        }
    }

    /// Node with a fixed base score and no members (test fixtures).
    pub fn with_omega(omega: f64, size: usize) -> Self {
        GraphNode {
            members: (0..size).collect(),
            weighted: vec![0.0; size],
            omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    /// Zero-weight edge inserted to reconnect a layer.
    pub bridge: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotionGraph {
    pub layers: Vec<Vec<GraphNode>>,
    /// `edges[i]` joins layer `i` to layer `i + 1`, sorted by `(from, to)`.
    pub edges: Vec<Vec<Edge>>,
}

/// Sum of `next.weighted` over members shared with `prev` plus members that
/// first appear after `prev_last`. `None` when nothing is shared.
pub fn edge_weight(
    prev: &GraphNode,
    next: &GraphNode,
    trajs: &[Trajectory],
    prev_last: usize,
) -> Option<f64> {
    let mut shared = false;
    let mut w = 0.0;
    let mut i = 0;
    for (pos, &t) in next.members.iter().enumerate() {
        while i < prev.members.len() && prev.members[i] < t {
            i += 1;
        }
        if i < prev.members.len() && prev.members[i] == t {
            shared = true;
            w += next.weighted[pos];
        } else if trajs[t].start_frame() > prev_last {
            w += next.weighted[pos];
        }
    }
    shared.then_some(w)
}

impl MotionGraph {
    pub fn node_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn bridged(&self) -> bool {
        self.edges.iter().flatten().any(|e| e.bridge)
    }

    fn check_shape(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.iter().any(Vec::is_empty) {
            return Err(Error::Consistency(
                "every clip needs at least one motion candidate".into(),
            ));
        }
        if self.edges.len() + 1 != self.layers.len() {
            return Err(Error::Consistency(
                "edge layers do not match node layers".into(),
            ));
        }
        Ok(())
    }

    /// Inserts a zero-weight edge into every layer no path reaches, from
    /// the largest reachable node of the previous layer to the largest node
    /// of the layer. Returns whether any bridge was added.
    pub fn bridge_disconnected(&mut self) -> Result<bool> {
        self.check_shape()?;
        let mut reach: Vec<bool> = vec![true; self.layers[0].len()];
        let mut bridged = false;
        let largest = |nodes: &[GraphNode], allowed: &dyn Fn(usize) -> bool| -> usize {
            let mut best = None;
            for (i, n) in nodes.iter().enumerate() {
                if allowed(i)
                    && best.is_none_or(|b: usize| n.members.len() > nodes[b].members.len())
                {
                    best = Some(i);
                }
            }
            best.expect("non-empty layer")
        };
        for q in 1..self.layers.len() {
            let mut next = vec![false; self.layers[q].len()];
            for e in &self.edges[q - 1] {
                if reach[e.from] {
                    next[e.to] = true;
                }
            }
            if !next.iter().any(|&r| r) {
                let from = largest(&self.layers[q - 1], &|i| reach[i]);
                let to = largest(&self.layers[q], &|_| true);
                let edges = &mut self.edges[q - 1];
                edges.retain(|e| !(e.from == from && e.to == to));
                edges.push(Edge {
                    from,
                    to,
                    weight: 0.0,
                    bridge: true,
                });
                edges.sort_by_key(|e| (e.from, e.to));
                next[to] = true;
                bridged = true;
            }
            reach = next;
        }
        Ok(bridged)
    }

    /// Line-oriented dump: `NODE clip idx n_members omega` and
    /// `EDGE clip idx_from idx_to weight` (`clip` is the source layer).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (c, layer) in self.layers.iter().enumerate() {
            for (i, n) in layer.iter().enumerate() {
                let _ = writeln!(out, "NODE {c} {i} {} {}", n.members.len(), n.omega);
            }
        }
        for (c, edges) in self.edges.iter().enumerate() {
            for e in edges {
                let _ = writeln!(out, "EDGE {c} {} {} {}", e.from, e.to, e.weight);
            }
        }
        out
    }
}

/// Builds the graph over per-clip candidates.
pub fn build_graph(
    clips: &[Clip],
    candidates: &[Vec<RigidMotion>],
    trajs: &[Trajectory],
    spans: &SpanTable,
    g: &GeometryParams,
    params: &GraphParams,
) -> Result<MotionGraph> {
    if clips.len() != candidates.len() {
        return Err(Error::Consistency(
            "one candidate list per clip expected".into(),
        ));
    }
    let layers: Vec<Vec<GraphNode>> = candidates
        .iter()
        .map(|motions| {
            motions
                .par_iter()
                .map(|m| {
                    let weighted = m
                        .members
                        .iter()
                        .map(|&t| match_weight(&trajs[t], m, g, params.sigma) * spans.value(t))
                        .collect();
                    GraphNode::new(m.members.clone(), weighted)
                })
                .collect()
        })
        .collect();
    let edges: Vec<Vec<Edge>> = (0..layers.len().saturating_sub(1))
        .into_par_iter()
        .map(|q| {
            let prev_last = clips[q].window.last;
            let mut out = Vec::new();
            for (a, pa) in layers[q].iter().enumerate() {
                for (b, nb) in layers[q + 1].iter().enumerate() {
                    if let Some(weight) = edge_weight(pa, nb, trajs, prev_last) {
                        out.push(Edge {
                            from: a,
                            to: b,
                            weight,
                            bridge: false,
                        });
                    }
                }
            }
            out
        })
        .collect();
    let mut graph = MotionGraph { layers, edges };
    graph.bridge_disconnected()?;
    Ok(graph)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionPath {
    /// Chosen candidate index per clip.
    pub nodes: Vec<usize>,
    pub score: f64,
    pub bridged: bool,
}

/// `Ω(start) + Σ edge weights` along `nodes`, or `None` if an edge is
/// missing.
pub fn path_score(graph: &MotionGraph, nodes: &[usize]) -> Option<f64> {
    let mut score = graph.layers[0].get(nodes[0])?.omega;
    for (q, w) in nodes.windows(2).enumerate() {
        let e = graph.edges[q]
            .iter()
            .find(|e| e.from == w[0] && e.to == w[1])?;
        score += e.weight;
    }
    Some(score)
}

#[derive(Clone)]
struct Best {
    score: f64,
    path: Vec<usize>,
}

fn better(cand: &Best, cur: &Option<Best>) -> bool {
    match cur {
        None => true,
        Some(c) => cand.score > c.score || (cand.score == c.score && cand.path < c.path),
    }
}

/// Highest-scoring path through every layer. Ties go to the
/// lexicographically smallest candidate-index sequence.
pub fn dominant_path(graph: &MotionGraph) -> Result<MotionPath> {
    graph.check_shape()?;
    let mut cur: Vec<Option<Best>> = graph.layers[0]
        .iter()
        .enumerate()
        .map(|(i, n)| {
            Some(Best {
                score: n.omega,
                path: vec![i],
            })
        })
        .collect();
    for q in 1..graph.layers.len() {
        let mut next: Vec<Option<Best>> = vec![None; graph.layers[q].len()];
        for e in &graph.edges[q - 1] {
            let Some(prev) = &cur[e.from] else { continue };
            let mut path = prev.path.clone();
            path.push(e.to);
            let cand = Best {
                score: prev.score + e.weight,
                path,
            };
            if better(&cand, &next[e.to]) {
                next[e.to] = Some(cand);
            }
        }
        if next.iter().all(Option::is_none) {
            return Err(Error::Consistency(format!(
                "no path reaches clip {q}; bridge the graph first"
            )));
        }
        cur = next;
    }
    let mut best: Option<Best> = None;
    for b in cur.into_iter().flatten() {
        if better(&b, &best) {
            best = Some(b);
        }
    }
    let best = best.expect("last layer reachable");
    Ok(MotionPath {
        nodes: best.path,
        score: best.score,
        bridged: graph.bridged(),
    })
}

/// Exhaustive search over all candidate sequences (test oracle).
pub fn brute_force_path(graph: &MotionGraph) -> Option<MotionPath> {
    let sizes: Vec<usize> = graph.layers.iter().map(Vec::len).collect();
    let mut idx = vec![0usize; sizes.len()];
    let mut best: Option<Best> = None;
    loop {
        if let Some(score) = path_score(graph, &idx) {
            let cand = Best {
                score,
                path: idx.clone(),
            };
            if better(&cand, &best) {
                best = Some(cand);
            }
        }
        // odometer increment, last layer fastest
        let mut q = sizes.len();
        loop {
            if q == 0 {
                return best.map(|b| MotionPath {
                    nodes: b.path,
                    score: b.score,
                    bridged: graph.bridged(),
                });
            }
            q -= 1;
            idx[q] += 1;
            if idx[q] < sizes[q] {
                break;
            }
            idx[q] = 0;
        }
    }
}
