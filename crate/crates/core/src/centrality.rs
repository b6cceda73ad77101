//! Vertex and edge betweenness on unweighted scenes.
//!
//! Scores are unnormalized and count each unordered pair `{s, t}` once.
//! Edge scores include pairs where `s` or `t` is an endpoint of the edge.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::nav_graph::{Edge, SceneGraph, Topology};

/// Vertex limit for [`brute_force_betweenness`].
pub const BRUTE_FORCE_LIMIT: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CentralityError {
    #[error("scene `{0}` is disconnected")]
    DisconnectedGraph(String),
    #[error("graph has {0} vertices; brute force is limited to {BRUTE_FORCE_LIMIT}")]
    GraphTooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CentralityScores {
    pub vertex_scores: BTreeMap<String, f64>,
    pub edge_scores: BTreeMap<Edge, f64>,
}

pub fn vertex_betweenness(g: &SceneGraph) -> Result<BTreeMap<String, f64>, CentralityError> {
    Ok(betweenness(g)?.vertex_scores)
}

pub fn edge_betweenness(g: &SceneGraph) -> Result<BTreeMap<Edge, f64>, CentralityError> {
    Ok(betweenness(g)?.edge_scores)
}

/// Vertex and edge betweenness in one Brandes sweep.
pub fn betweenness(g: &SceneGraph) -> Result<CentralityScores, CentralityError> {
    if !g.is_connected() {
        return Err(CentralityError::DisconnectedGraph(g.scene_id().to_string()));
    }
    let t = g.topology();
    let n = t.len();
    let mut vc = vec![0.0f64; n];
    // Edge accumulator keyed by (lo, hi) index pair.
    let mut ec: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (a, nbrs) in t.adj.iter().enumerate() {
        for &b in nbrs {
            if a < b {
                ec.insert((a, b), 0.0);
            }
        }
    }

    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = usize::MAX);
        delta.iter_mut().for_each(|x| *x = 0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();

        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &t.adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }

        while let Some(w) = order.pop() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                *ec.get_mut(&(v.min(w), v.max(w))).expect("edge present") += c;
                delta[v] += c;
            }
            if w != s {
                vc[w] += delta[w];
            }
        }
    }

    // Every unordered pair was visited from both ends.
    Ok(CentralityScores {
        vertex_scores: t
            .ids
            .iter()
            .zip(vc)
            .map(|(id, x)| (id.clone(), x / 2.0))
            .collect(),
        edge_scores: ec
            .into_iter()
            .map(|((a, b), x)| (Edge::new(t.ids[a].clone(), t.ids[b].clone()), x / 2.0))
            .collect(),
    })
}

/// Exact betweenness by listing every shortest path of every unordered pair.
///
/// Exponential in the worst case; limited to [`BRUTE_FORCE_LIMIT`] vertices.
pub fn brute_force_betweenness(g: &SceneGraph) -> Result<CentralityScores, CentralityError> {
    let t = g.topology();
    let n = t.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(CentralityError::GraphTooLarge(n));
    }
    if !g.is_connected() {
        return Err(CentralityError::DisconnectedGraph(g.scene_id().to_string()));
    }
    let mut vc = vec![0.0f64; n];
    let mut ec: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in g.edges() {
        let (a, b) = (t.index_of(e.lo()).unwrap(), t.index_of(e.hi()).unwrap());
        ec.insert((a, b), 0.0);
    }
    for s in 0..n {
        for tt in (s + 1)..n {
            let paths = all_shortest_paths(t, s, tt);
            let total = paths.len() as f64;
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    vc[v] += 1.0 / total;
                }
                for w in p.windows(2) {
                    *ec.get_mut(&(w[0].min(w[1]), w[0].max(w[1]))).unwrap() += 1.0 / total;
                }
            }
        }
    }
    Ok(CentralityScores {
        vertex_scores: t.ids.iter().cloned().zip(vc).collect(),
        edge_scores: ec
            .into_iter()
            .map(|((a, b), x)| (Edge::new(t.ids[a].clone(), t.ids[b].clone()), x))
            .collect(),
    })
}

/// Every shortest `s`–`t` path, found by walking BFS layers forward from `s`.
pub(crate) fn all_shortest_paths(t: &Topology, s: usize, target: usize) -> Vec<Vec<usize>> {
    let to_target = t.bfs(target, None);
    let mut out = Vec::new();
    let mut stack = vec![vec![s]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if last == target {
            out.push(path);
            continue;
        }
        for &w in &t.adj[last] {
            if to_target[w] != usize::MAX && to_target[w] + 1 == to_target[last] {
                let mut next = path.clone();
                next.push(w);
                stack.push(next);
            }
        }
    }
    out
}
