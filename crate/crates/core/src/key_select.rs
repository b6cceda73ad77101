//! Key edge selection.
//!
//! The key edge of a scene is the bridge, among the highest-betweenness edges
//! whose endpoints are both high-betweenness vertices, that the most
//! supervised paths traverse.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centrality::{betweenness, CentralityError, CentralityScores};
use crate::nav_graph::{Edge, SceneGraph};
use crate::splice::PathRecord;

pub const DEFAULT_TOP_K: usize = 10;

/// Scores closer than this are ranked as ties (then by id).
const SCORE_TIE_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeySelectError {
    #[error(transparent)]
    Centrality(#[from] CentralityError),
    #[error("top_k must be at least 1")]
    BadTopK,
    #[error("no bridge of scene `{0}` is crossed by any supervised path")]
    NoKeyEdge(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEdge {
    pub scene_id: String,
    /// Endpoint with the smaller id.
    pub v_s: String,
    pub v_t: String,
    /// Number of supervised paths traversing the edge.
    pub path_count: usize,
    /// 1-based ranks in the betweenness orderings.
    pub vc_rank_s: usize,
    pub vc_rank_t: usize,
    pub ec_rank: usize,
    /// Candidate cutoff in effect when the edge was found (k, 2k, 4k, ...).
    pub top_k_used: usize,
}

impl KeyEdge {
    pub fn edge(&self) -> Edge {
        Edge::new(self.v_s.clone(), self.v_t.clone())
    }
}

/// Paths that traverse `e` at least once, in either direction.
pub fn count_paths_through_edge(e: &Edge, paths: &[PathRecord]) -> usize {
    paths
        .iter()
        .filter(|p| path_uses_edge(e, &p.vertices))
        .count()
}

fn path_uses_edge(e: &Edge, vertices: &[String]) -> bool {
    vertices.windows(2).any(|w| e.joins(&w[0], &w[1]))
}

fn by_score_then_key<K: Ord>(a: (&K, f64), b: (&K, f64)) -> Ordering {
    if (a.1 - b.1).abs() <= SCORE_TIE_EPS {
        a.0.cmp(b.0)
    } else {
        b.1.total_cmp(&a.1)
    }
}

/// Betweenness orderings, highest first.
#[derive(Debug, Clone)]
pub struct Ranking {
    pub vertices: Vec<String>,
    pub edges: Vec<Edge>,
}

impl Ranking {
    pub fn from_scores(scores: &CentralityScores) -> Self {
        let mut vertices: Vec<(&String, f64)> =
            scores.vertex_scores.iter().map(|(k, &v)| (k, v)).collect();
        vertices.sort_by(|a, b| by_score_then_key(*a, *b));
        let mut edges: Vec<(&Edge, f64)> =
            scores.edge_scores.iter().map(|(k, &v)| (k, v)).collect();
        edges.sort_by(|a, b| by_score_then_key(*a, *b));
        Ranking {
            vertices: vertices.into_iter().map(|(k, _)| k.clone()).collect(),
            edges: edges.into_iter().map(|(k, _)| k.clone()).collect(),
        }
    }

    /// Top-k edges whose endpoints are both top-k vertices, ascending.
    pub fn candidates(&self, k: usize) -> Vec<Edge> {
        let top_v: BTreeSet<&str> = self.vertices.iter().take(k).map(String::as_str).collect();
        let mut out: Vec<Edge> = self
            .edges
            .iter()
            .take(k)
            .filter(|e| top_v.contains(e.lo()) && top_v.contains(e.hi()))
            .cloned()
            .collect();
        out.sort();
        out
    }

    fn vertex_rank(&self, id: &str) -> usize {
        self.vertices
            .iter()
            .position(|v| v == id)
            .map_or(0, |i| i + 1)
    }

    fn edge_rank(&self, e: &Edge) -> usize {
        self.edges.iter().position(|x| x == e).map_or(0, |i| i + 1)
    }
}

pub fn candidate_key_edges(g: &SceneGraph, k: usize) -> Result<Vec<Edge>, KeySelectError> {
    if k == 0 {
        return Err(KeySelectError::BadTopK);
    }
    let scores = betweenness(g)?;
    Ok(Ranking::from_scores(&scores).candidates(k))
}

/// Selects the key edge of `g`. Only paths whose `scene_id` matches the scene
/// are counted.
pub fn select_key_edge(
    g: &SceneGraph,
    paths: &[PathRecord],
    k: usize,
) -> Result<KeyEdge, KeySelectError> {
    if k == 0 {
        return Err(KeySelectError::BadTopK);
    }
    let scores = betweenness(g)?;
    let ranking = Ranking::from_scores(&scores);
    let bridges = g.bridges();
    let own: Vec<&PathRecord> = paths
        .iter()
        .filter(|p| p.scene_id == g.scene_id())
        .collect();
    let counts: BTreeMap<&Edge, usize> = bridges
        .iter()
        .map(|e| {
            (
                e,
                own.iter()
                    .filter(|p| path_uses_edge(e, &p.vertices))
                    .count(),
            )
        })
        .collect();

    let limit = g.vertex_count().max(g.edge_count());
    let mut cutoff = k;
    loop {
        let mut best: Option<(&Edge, usize)> = None;
        for e in ranking.candidates(cutoff) {
            let Some((edge, &n)) = counts.get_key_value(&e) else {
                continue;
            };
            // Ascending edge order, strict improvement: ties keep the smaller edge.
            if n >= 1 && best.is_none_or(|(_, m)| n > m) {
                best = Some((*edge, n));
            }
        }
        if let Some((e, n)) = best {
            return Ok(KeyEdge {
                scene_id: g.scene_id().to_string(),
                v_s: e.lo().to_string(),
                v_t: e.hi().to_string(),
                path_count: n,
                vc_rank_s: ranking.vertex_rank(e.lo()),
                vc_rank_t: ranking.vertex_rank(e.hi()),
                ec_rank: ranking.edge_rank(e),
                top_k_used: cutoff,
            });
        }
        if cutoff >= limit {
            return Err(KeySelectError::NoKeyEdge(g.scene_id().to_string()));
        }
        cutoff = cutoff.saturating_mul(2);
    }
}
