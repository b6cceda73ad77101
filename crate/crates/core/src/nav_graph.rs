//! Scene graphs, panoramas and the heading/sector geometry.
//!
//! A scene is an undirected, unweighted graph of viewpoints. Every viewpoint
//! carries a 3-D position and (optionally) a 12 x 3 panorama of view cells.
//!
//! Heading convention: radians in `[0, 2π)`, measured clockwise from the +Y
//! axis in the X-Y plane. Z is ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Horizontal sectors per panorama.
pub const H_SECTORS: usize = 12;
/// Vertical tiers per panorama.
pub const V_TIERS: usize = 3;
/// Cells per panorama.
pub const PANORAMA_CELLS: usize = H_SECTORS * V_TIERS;

pub type Point3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("direction is degenerate: endpoints coincide in the X-Y plane")]
    DegenerateDirection,
    #[error("scene `{0}` has no vertices")]
    EmptyScene(String),
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("vertex `{0}` has a non-finite coordinate")]
    NonFiniteCoordinate(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge {0}")]
    DuplicateEdge(Edge),
    #[error("unknown edge {0}")]
    UnknownEdge(Edge),
    #[error("edge {0} is not a bridge")]
    NotABridge(Edge),
    #[error("`{anchor}` is not an endpoint of {edge}")]
    NotAnEndpoint { edge: Edge, anchor: String },
    #[error("panorama for `{vertex}` is invalid: {reason}")]
    BadPanorama { vertex: String, reason: String },
    #[error("scene `{scene_id}` is disconnected ({components} components)")]
    Disconnected { scene_id: String, components: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    pub position: Point3,
}

impl Vertex {
    pub fn new(id: impl Into<String>, position: Point3) -> Self {
        Self {
            id: id.into(),
            position,
        }
    }
}

/// An undirected edge, stored with its endpoints in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(String, String)", into = "(String, String)")]
pub struct Edge {
    lo: String,
    hi: String,
}

impl Edge {
    pub fn new(u: impl Into<String>, v: impl Into<String>) -> Self {
        let (u, v) = (u.into(), v.into());
        if u <= v {
            Self { lo: u, hi: v }
        } else {
            Self { lo: v, hi: u }
        }
    }

    /// Endpoint with the smaller id.
    pub fn lo(&self) -> &str {
        &self.lo
    }

    pub fn hi(&self) -> &str {
        &self.hi
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lo == id || self.hi == id
    }

    /// The endpoint opposite `id`, if `id` is an endpoint.
    pub fn other(&self, id: &str) -> Option<&str> {
        if self.lo == id {
            Some(&self.hi)
        } else if self.hi == id {
            Some(&self.lo)
        } else {
            None
        }
    }

    /// True when `(u, v)` traverses this edge in either direction.
    pub fn joins(&self, u: &str, v: &str) -> bool {
        (self.lo == u && self.hi == v) || (self.lo == v && self.hi == u)
    }
}

impl From<(String, String)> for Edge {
    fn from((u, v): (String, String)) -> Self {
        Edge::new(u, v)
    }
}

impl From<Edge> for (String, String) {
    fn from(e: Edge) -> Self {
        (e.lo, e.hi)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Where a view cell's feature originally came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, String, u8, u8)", into = "(String, String, u8, u8)")]
pub struct Provenance {
    pub scene_id: String,
    pub viewpoint_id: String,
    pub h: u8,
    pub v: u8,
}

impl From<(String, String, u8, u8)> for Provenance {
    fn from((scene_id, viewpoint_id, h, v): (String, String, u8, u8)) -> Self {
        Self {
            scene_id,
            viewpoint_id,
            h,
            v,
        }
    }
}

impl From<Provenance> for (String, String, u8, u8) {
    fn from(p: Provenance) -> Self {
        (p.scene_id, p.viewpoint_id, p.h, p.v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCell {
    pub feature: Vec<f32>,
    #[serde(rename = "source")]
    pub provenance: Provenance,
}

/// A 12 (horizontal) x 3 (vertical) grid of view cells.
///
/// Cells are stored row-major in `(v, h)` order: index `v * 12 + h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PanoramaRecord")]
pub struct Panorama {
    feature_dim: usize,
    cells: Vec<ViewCell>,
}

#[derive(Deserialize)]
struct PanoramaRecord {
    feature_dim: usize,
    cells: Vec<ViewCell>,
}

impl TryFrom<PanoramaRecord> for Panorama {
    type Error = String;

    fn try_from(r: PanoramaRecord) -> Result<Self, Self::Error> {
        Panorama::new(r.feature_dim, r.cells)
    }
}

impl Panorama {
    pub fn new(feature_dim: usize, cells: Vec<ViewCell>) -> Result<Self, String> {
        if feature_dim == 0 {
            return Err("feature_dim must be positive".into());
        }
        if cells.len() != PANORAMA_CELLS {
            return Err(format!(
                "expected {PANORAMA_CELLS} cells, found {}",
                cells.len()
            ));
        }
        for (i, c) in cells.iter().enumerate() {
            if c.feature.len() != feature_dim {
                return Err(format!(
                    "cell {i} has feature length {} (feature_dim {feature_dim})",
                    c.feature.len()
                ));
            }
            if usize::from(c.provenance.h) >= H_SECTORS || usize::from(c.provenance.v) >= V_TIERS {
                return Err(format!("cell {i} provenance indices out of range"));
            }
        }
        Ok(Self { feature_dim, cells })
    }

    /// Zero-feature panorama whose cells all point at `(scene_id, viewpoint_id)`.
    pub fn placeholder(scene_id: &str, viewpoint_id: &str, feature_dim: usize) -> Self {
        let cells = (0..PANORAMA_CELLS)
            .map(|i| ViewCell {
                feature: vec![0.0; feature_dim.max(1)],
                provenance: Provenance {
                    scene_id: scene_id.to_string(),
                    viewpoint_id: viewpoint_id.to_string(),
                    h: (i % H_SECTORS) as u8,
                    v: (i / H_SECTORS) as u8,
                },
            })
            .collect();
        Self {
            feature_dim: feature_dim.max(1),
            cells,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn cells(&self) -> &[ViewCell] {
        &self.cells
    }

    pub fn cell(&self, h: usize, v: usize) -> &ViewCell {
        &self.cells[v * H_SECTORS + h]
    }

    pub fn cell_mut(&mut self, h: usize, v: usize) -> &mut ViewCell {
        &mut self.cells[v * H_SECTORS + h]
    }
}

/// Heading in radians, `[0, 2π)`, clockwise from +Y.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Heading(f64);

impl Heading {
    /// Wraps any finite angle into `[0, 2π)`.
    pub fn from_radians(rad: f64) -> Self {
        let mut r = rad.rem_euclid(TAU);
        if r >= TAU {
            r = 0.0;
        }
        Heading(r)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    pub fn reversed(self) -> Self {
        Heading::from_radians(self.0 + PI)
    }

    /// Smallest absolute angle between two headings, in `[0, π]`.
    pub fn angle_to(self, other: Heading) -> f64 {
        let d = (self.0 - other.0).rem_euclid(TAU);
        d.min(TAU - d)
    }
}

pub fn heading(from: Point3, to: Point3) -> Result<Heading, GraphError> {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    if dx == 0.0 && dy == 0.0 {
        return Err(GraphError::DegenerateDirection);
    }
    Ok(Heading::from_radians(dx.atan2(dy)))
}

/// Horizontal sector whose center is nearest to `h`; ties round up.
pub fn sector_index(h: Heading) -> usize {
    let x = h.degrees() / 30.0;
    ((x + 0.5).floor() as usize) % H_SECTORS
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Navigation scene. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    scene_id: String,
    vertices: BTreeMap<String, Vertex>,
    edges: BTreeSet<Edge>,
    panoramas: BTreeMap<String, Panorama>,
    topo: Topology,
}

/// Index view of a scene: ids sorted ascending, adjacency lists sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub ids: Vec<String>,
    pub adj: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl Topology {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Hop distances from `src`, `usize::MAX` where unreachable.
    pub fn bfs(&self, src: usize, skip: Option<(usize, usize)>) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adj[u] {
                if let Some((a, b)) = skip {
                    if (u == a && w == b) || (u == b && w == a) {
                        continue;
                    }
                }
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut count = 0;
        for s in 0..self.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            for (i, d) in self.bfs(s, None).into_iter().enumerate() {
                if d != usize::MAX {
                    seen[i] = true;
                }
            }
        }
        count
    }

    /// Bridges as index pairs `(lo, hi)`, found by iterative low-link DFS.
    pub fn bridges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut out = Vec::new();
        let mut clock = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            disc[root] = clock;
            low[root] = clock;
            clock += 1;
            // (vertex, parent, next neighbor position)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            while let Some(&mut (u, parent, ref mut pos)) = stack.last_mut() {
                if let Some(&w) = self.adj[u].get(*pos) {
                    *pos += 1;
                    if w == parent {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = clock;
                        low[w] = clock;
                        clock += 1;
                        stack.push((w, u, 0));
                    } else {
                        low[u] = low[u].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if parent != usize::MAX {
                        low[parent] = low[parent].min(low[u]);
                        if low[u] > disc[parent] {
                            out.push((parent.min(u), parent.max(u)));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

impl SceneGraph {
    /// Builds a scene, checking every structural invariant except connectivity
    /// (see [`SceneGraph::require_connected`]).
    pub fn new(
        scene_id: impl Into<String>,
        vertices: Vec<Vertex>,
        edges: Vec<Edge>,
        panoramas: BTreeMap<String, Panorama>,
    ) -> Result<Self, GraphError> {
        let scene_id = scene_id.into();
        if vertices.is_empty() {
            return Err(GraphError::EmptyScene(scene_id));
        }
        let mut vmap = BTreeMap::new();
        for v in vertices {
            if v.position.iter().any(|c| !c.is_finite()) {
                return Err(GraphError::NonFiniteCoordinate(v.id));
            }
            if vmap.contains_key(&v.id) {
                return Err(GraphError::DuplicateVertex(v.id));
            }
            vmap.insert(v.id.clone(), v);
        }
        let mut eset = BTreeSet::new();
        for e in edges {
            if e.lo == e.hi {
                return Err(GraphError::SelfLoop(e.lo));
            }
            for end in [&e.lo, &e.hi] {
                if !vmap.contains_key(end) {
                    return Err(GraphError::UnknownVertex(end.clone()));
                }
            }
            if eset.contains(&e) {
                return Err(GraphError::DuplicateEdge(e));
            }
            eset.insert(e);
        }
        for (id, p) in &panoramas {
            if !vmap.contains_key(id) {
                return Err(GraphError::BadPanorama {
                    vertex: id.clone(),
                    reason: "no such vertex".into(),
                });
            }
            // Re-validate: panoramas may have been mutated through cell_mut.
            Panorama::new(p.feature_dim, p.cells.clone()).map_err(|reason| {
                GraphError::BadPanorama {
                    vertex: id.clone(),
                    reason,
                }
            })?;
        }
        let ids: Vec<String> = vmap.keys().cloned().collect();
        let index: HashMap<String, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for e in &eset {
            let (a, b) = (index[&e.lo], index[&e.hi]);
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self {
            scene_id,
            vertices: vmap,
            edges: eset,
            panoramas,
            topo: Topology { ids, adj, index },
        })
    }

    pub fn require_connected(&self) -> Result<(), GraphError> {
        let components = self.topo.component_count();
        if components == 1 {
            Ok(())
        } else {
            Err(GraphError::Disconnected {
                scene_id: self.scene_id.clone(),
                components,
            })
        }
    }

    pub fn is_connected(&self) -> bool {
        self.topo.component_count() == 1
    }

    pub fn component_count(&self) -> usize {
        self.topo.component_count()
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn vertex(&self, id: &str) -> Option<&Vertex> {
        self.vertices.get(id)
    }

    pub fn contains_vertex(&self, id: &str) -> bool {
        self.vertices.contains_key(id)
    }

    pub fn position(&self, id: &str) -> Result<Point3, GraphError> {
        self.vertices
            .get(id)
            .map(|v| v.position)
            .ok_or_else(|| GraphError::UnknownVertex(id.to_string()))
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn has_edge(&self, u: &str, v: &str) -> bool {
        self.edges.contains(&Edge::new(u, v))
    }

    pub fn neighbors<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a str> + 'a {
        let adj: &[usize] = self
            .topo
            .index_of(id)
            .map(|i| self.topo.adj[i].as_slice())
            .unwrap_or(&[]);
        adj.iter().map(move |&j| self.topo.ids[j].as_str())
    }

    pub fn panorama(&self, id: &str) -> Option<&Panorama> {
        self.panoramas.get(id)
    }

    pub fn panoramas(&self) -> &BTreeMap<String, Panorama> {
        &self.panoramas
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    /// Decomposes the scene back into constructor inputs.
    pub fn into_parts(self) -> (String, Vec<Vertex>, Vec<Edge>, BTreeMap<String, Panorama>) {
        (
            self.scene_id,
            self.vertices.into_values().collect(),
            self.edges.into_iter().collect(),
            self.panoramas,
        )
    }

    /// Bridges of the scene, ascending.
    pub fn bridges(&self) -> BTreeSet<Edge> {
        self.topo
            .bridges()
            .into_iter()
            .map(|(a, b)| Edge::new(self.topo.ids[a].clone(), self.topo.ids[b].clone()))
            .collect()
    }

    fn edge_indices(&self, e: &Edge) -> Result<(usize, usize), GraphError> {
        if !self.edges.contains(e) {
            return Err(GraphError::UnknownEdge(e.clone()));
        }
        Ok((self.topo.index[&e.lo], self.topo.index[&e.hi]))
    }
}

/// True iff removing `e` increases the number of components.
pub fn is_bridge(g: &SceneGraph, e: &Edge) -> Result<bool, GraphError> {
    let (a, b) = g.edge_indices(e)?;
    Ok(g.topo.bridges().binary_search(&(a, b)).is_ok())
}

/// Vertices reachable from `anchor` once the bridge `e` is removed.
pub fn side_component(
    g: &SceneGraph,
    e: &Edge,
    anchor: &str,
) -> Result<BTreeSet<String>, GraphError> {
    let (a, b) = g.edge_indices(e)?;
    if !e.contains(anchor) {
        return Err(GraphError::NotAnEndpoint {
            edge: e.clone(),
            anchor: anchor.to_string(),
        });
    }
    if !is_bridge(g, e)? {
        return Err(GraphError::NotABridge(e.clone()));
    }
    let src = g.topo.index[anchor];
    Ok(g.topo
        .bfs(src, Some((a, b)))
        .into_iter()
        .enumerate()
        .filter(|&(_, d)| d != usize::MAX)
        .map(|(i, _)| g.topo.ids[i].clone())
        .collect())
}

/// On-disk form of a scene. All collections are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub scene_id: String,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub panoramas: BTreeMap<String, Panorama>,
}

impl From<&SceneGraph> for SceneFile {
    fn from(g: &SceneGraph) -> Self {
        SceneFile {
            scene_id: g.scene_id.clone(),
            vertices: g.vertices.values().cloned().collect(),
            edges: g.edges.iter().cloned().collect(),
            panoramas: g.panoramas.clone(),
        }
    }
}

impl TryFrom<SceneFile> for SceneGraph {
    type Error = GraphError;

    fn try_from(f: SceneFile) -> Result<Self, Self::Error> {
        SceneGraph::new(f.scene_id, f.vertices, f.edges, f.panoramas)
    }
}
