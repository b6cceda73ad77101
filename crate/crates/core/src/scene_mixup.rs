//! Cross-connecting two scenes.
//!
//! Three stages, applied in order:
//!
//! 1. [`cross_connect`] merges two scenes under namespaced ids, removes both
//!    key edges and links `(A/v_s1, B/v_t2)` and `(B/v_s2, A/v_t1)`.
//! 2. [`align_orientation`] swaps the positions of `v_t1` and `v_t2` by
//!    translating each one's far side rigidly, so the heading across each
//!    cross edge equals the host scene's original key-edge heading.
//! 3. [`mix_panoramas`] pastes donor view sectors into the four key
//!    viewpoints around the junction direction.
//!
//! Because both key edges are bridges, the merged graph has exactly two
//! components: `S1 ∪ T2` and `S2 ∪ T1`, where `S`/`T` are the near/far sides
//! of each key edge. Every spliced path lives inside one of them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::key_select::KeyEdge;
use crate::nav_graph::{
    heading, is_bridge, sector_index, side_component, Edge, GraphError, Heading, Point3,
    SceneGraph, Vertex, H_SECTORS, V_TIERS,
};

pub const DEFAULT_K_REPLACE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixupError {
    #[error("key edge {edge} is invalid for scene `{scene}`: {reason}")]
    KeyEdgeInvalid {
        scene: String,
        edge: Edge,
        reason: String,
    },
    #[error("both scenes are named `{0}`")]
    SceneIdCollision(String),
    #[error("orientation alignment was already applied")]
    AlreadyAligned,
    #[error("views were already mixed")]
    AlreadyMixed,
    #[error("view mixing requires orientation alignment (or an explicit override)")]
    NotAligned,
    #[error("k_replace must be in 0..=12, got {0}")]
    KReplaceOutOfRange(usize),
    #[error("viewpoint `{0}` has no panorama")]
    MissingPanorama(String),
    #[error("feature dims differ: host `{host}` vs donor `{donor}`")]
    FeatureDimMismatch { host: String, donor: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub fn namespaced(scene_id: &str, vertex_id: &str) -> String {
    format!("{scene_id}/{vertex_id}")
}

pub fn cross_scene_id(a: &str, b: &str) -> String {
    format!("{a}+{b}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    /// Applied to the far side of scene A's key edge (`T1`).
    pub translation_b1: Point3,
    /// Applied to the far side of scene B's key edge (`T2`).
    pub translation_b2: Point3,
    pub applied: bool,
}

/// Everything about a cross scene except its graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMeta {
    pub scene_id: String,
    pub sources: [String; 2],
    pub key_edges: [KeyEdge; 2],
    /// `(A/v_s1, B/v_t2)` and `(B/v_s2, A/v_t1)`.
    pub cross_edges: [Edge; 2],
    /// The two key edges, namespaced.
    pub removed_edges: [Edge; 2],
    /// Original `v_s -> v_t` heading of each key edge.
    pub key_headings: [Heading; 2],
    /// Namespaced far sides `T1`, `T2`.
    pub far_sides: [BTreeSet<String>; 2],
    pub alignment: AlignmentRecord,
    /// Sectors replaced per key viewpoint, once views are mixed.
    pub k_replace: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossScene {
    pub meta: CrossMeta,
    pub graph: SceneGraph,
}

/// A key viewpoint of a cross scene and where its pasted views come from.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyViewpoint {
    pub host: String,
    /// Neighbor across the cross edge.
    pub neighbor: String,
    pub donor: String,
    /// Donor's original heading along its own key edge.
    pub donor_heading: Heading,
}

impl CrossMeta {
    fn ns_key(&self, side: usize) -> (String, String) {
        let k = &self.key_edges[side];
        (
            namespaced(&self.sources[side], &k.v_s),
            namespaced(&self.sources[side], &k.v_t),
        )
    }

    /// The four key viewpoints: `A/v_s1`, `A/v_t1`, `B/v_s2`, `B/v_t2`.
    pub fn key_viewpoints(&self) -> [KeyViewpoint; 4] {
        let (s1, t1) = self.ns_key(0);
        let (s2, t2) = self.ns_key(1);
        let [h1, h2] = self.key_headings;
        [
            KeyViewpoint {
                host: s1.clone(),
                neighbor: t2.clone(),
                donor: s2.clone(),
                donor_heading: h2,
            },
            KeyViewpoint {
                host: t1.clone(),
                neighbor: s2.clone(),
                donor: t2.clone(),
                donor_heading: h2.reversed(),
            },
            KeyViewpoint {
                host: s2,
                neighbor: t1.clone(),
                donor: s1.clone(),
                donor_heading: h1,
            },
            KeyViewpoint {
                host: t2,
                neighbor: s1,
                donor: t1,
                donor_heading: h1.reversed(),
            },
        ]
    }

    /// Source scene of a namespaced vertex id.
    pub fn source_of<'a>(&'a self, vertex: &str) -> Option<(&'a str, String)> {
        self.sources.iter().find_map(|s| {
            vertex
                .strip_prefix(s.as_str())
                .and_then(|rest| rest.strip_prefix('/'))
                .map(|local| (s.as_str(), local.to_string()))
        })
    }
}

impl CrossScene {
    /// The same cross scene under another id; vertex ids are unchanged.
    pub fn renamed(self, scene_id: &str) -> Result<CrossScene, MixupError> {
        let (_, vertices, edges, panoramas) = self.graph.into_parts();
        let mut meta = self.meta;
        meta.scene_id = scene_id.to_string();
        Ok(CrossScene {
            meta,
            graph: SceneGraph::new(scene_id, vertices, edges, panoramas)?,
        })
    }

    /// Angle between the current heading across each cross edge and the host
    /// scene's original key-edge heading, in radians.
    pub fn junction_mismatch(&self) -> Result<[f64; 2], GraphError> {
        let m = &self.meta;
        let mut out = [0.0; 2];
        for (i, e) in m.cross_edges.iter().enumerate() {
            let (s, _) = m.ns_key(i);
            let other = e.other(&s).expect("cross edge contains v_s");
            let now = heading(self.graph.position(&s)?, self.graph.position(other)?)?;
            out[i] = now.angle_to(m.key_headings[i]);
        }
        Ok(out)
    }
}

fn check_key(g: &SceneGraph, k: &KeyEdge) -> Result<Edge, MixupError> {
    let e = k.edge();
    let invalid = |reason: &str| MixupError::KeyEdgeInvalid {
        scene: g.scene_id().to_string(),
        edge: e.clone(),
        reason: reason.to_string(),
    };
    if k.scene_id != g.scene_id() {
        return Err(invalid("key edge belongs to another scene"));
    }
    match is_bridge(g, &e) {
        Ok(true) => Ok(e),
        Ok(false) => Err(invalid("not a bridge")),
        Err(_) => Err(invalid("not an edge of the scene")),
    }
}

pub fn cross_connect(
    g1: &SceneGraph,
    k1: &KeyEdge,
    g2: &SceneGraph,
    k2: &KeyEdge,
) -> Result<CrossScene, MixupError> {
    if g1.scene_id() == g2.scene_id() {
        return Err(MixupError::SceneIdCollision(g1.scene_id().to_string()));
    }
    let e1 = check_key(g1, k1)?;
    let e2 = check_key(g2, k2)?;
    let (a, b) = (g1.scene_id(), g2.scene_id());

    let key_headings = [
        heading(g1.position(&k1.v_s)?, g1.position(&k1.v_t)?)?,
        heading(g2.position(&k2.v_s)?, g2.position(&k2.v_t)?)?,
    ];
    let far_sides = [
        side_component(g1, &e1, &k1.v_t)?
            .iter()
            .map(|v| namespaced(a, v))
            .collect(),
        side_component(g2, &e2, &k2.v_t)?
            .iter()
            .map(|v| namespaced(b, v))
            .collect(),
    ];

    let mut vertices = Vec::with_capacity(g1.vertex_count() + g2.vertex_count());
    let mut edges = Vec::with_capacity(g1.edge_count() + g2.edge_count());
    let mut panoramas = BTreeMap::new();
    for (g, key) in [(g1, &e1), (g2, &e2)] {
        let sid = g.scene_id();
        vertices.extend(
            g.vertices()
                .map(|v| Vertex::new(namespaced(sid, &v.id), v.position)),
        );
        edges.extend(
            g.edges()
                .iter()
                .filter(|e| *e != key)
                .map(|e| Edge::new(namespaced(sid, e.lo()), namespaced(sid, e.hi()))),
        );
        for (id, p) in g.panoramas() {
            panoramas.insert(namespaced(sid, id), p.clone());
        }
    }
    let cross_edges = [
        Edge::new(namespaced(a, &k1.v_s), namespaced(b, &k2.v_t)),
        Edge::new(namespaced(b, &k2.v_s), namespaced(a, &k1.v_t)),
    ];
    edges.extend(cross_edges.iter().cloned());

    let scene_id = cross_scene_id(a, b);
    let graph = SceneGraph::new(scene_id.clone(), vertices, edges, panoramas)?;
    Ok(CrossScene {
        meta: CrossMeta {
            scene_id,
            sources: [a.to_string(), b.to_string()],
            key_edges: [k1.clone(), k2.clone()],
            cross_edges,
            removed_edges: [
                Edge::new(namespaced(a, e1.lo()), namespaced(a, e1.hi())),
                Edge::new(namespaced(b, e2.lo()), namespaced(b, e2.hi())),
            ],
            key_headings,
            far_sides,
            alignment: AlignmentRecord {
                translation_b1: [0.0; 3],
                translation_b2: [0.0; 3],
                applied: false,
            },
            k_replace: None,
        },
        graph,
    })
}

/// Swaps the positions of `v_t1` and `v_t2`, carrying each far side along.
pub fn align_orientation(c: &CrossScene) -> Result<CrossScene, MixupError> {
    if c.meta.alignment.applied {
        return Err(MixupError::AlreadyAligned);
    }
    let (_, t1) = c.meta.ns_key(0);
    let (_, t2) = c.meta.ns_key(1);
    let p1 = c.graph.position(&t1)?;
    let p2 = c.graph.position(&t2)?;
    let shift_b1 = [p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]];
    let shift_b2 = [p1[0] - p2[0], p1[1] - p2[1], p1[2] - p2[2]];

    let (scene_id, vertices, edges, panoramas) = c.graph.clone().into_parts();
    let [far1, far2] = &c.meta.far_sides;
    let moved = vertices
        .into_iter()
        .map(|mut v| {
            let shift = if far1.contains(&v.id) {
                Some(shift_b1)
            } else if far2.contains(&v.id) {
                Some(shift_b2)
            } else {
                None
            };
            if let Some(d) = shift {
                for (x, dx) in v.position.iter_mut().zip(d) {
                    *x += dx;
                }
            }
            v
        })
        .collect();
    let mut meta = c.meta.clone();
    meta.alignment = AlignmentRecord {
        translation_b1: shift_b1,
        translation_b2: shift_b2,
        applied: true,
    };
    Ok(CrossScene {
        meta,
        graph: SceneGraph::new(scene_id, moved, edges, panoramas)?,
    })
}

/// Sectors replaced around `center`: `center ± (k-1)/2` for odd `k`; for even
/// `k` the extra sector is on the clockwise (increasing index) side.
pub fn replaced_sectors(center: usize, k: usize) -> Vec<(usize, isize)> {
    if k == 0 {
        return Vec::new();
    }
    let lo = -(((k - 1) / 2) as isize);
    let hi = (k / 2) as isize;
    (lo..=hi)
        .map(|o| {
            (
                (center as isize + o).rem_euclid(H_SECTORS as isize) as usize,
                o,
            )
        })
        .collect()
}

/// Offset a sector index by `o` positions, wrapping.
pub fn offset_sector(center: usize, o: isize) -> usize {
    (center as isize + o).rem_euclid(H_SECTORS as isize) as usize
}

/// Pastes donor views into the four key viewpoints.
///
/// `allow_unaligned` permits mixing before orientation alignment.
pub fn mix_panoramas(
    c: &CrossScene,
    k_replace: usize,
    allow_unaligned: bool,
) -> Result<CrossScene, MixupError> {
    if k_replace > H_SECTORS {
        return Err(MixupError::KReplaceOutOfRange(k_replace));
    }
    if c.meta.k_replace.is_some() {
        return Err(MixupError::AlreadyMixed);
    }
    if !c.meta.alignment.applied && !allow_unaligned {
        return Err(MixupError::NotAligned);
    }
    let original = c.graph.panoramas();
    let mut mixed = original.clone();
    for kv in c.meta.key_viewpoints() {
        let host_pan = original
            .get(&kv.host)
            .ok_or_else(|| MixupError::MissingPanorama(kv.host.clone()))?;
        let donor_pan = original
            .get(&kv.donor)
            .ok_or_else(|| MixupError::MissingPanorama(kv.donor.clone()))?;
        if host_pan.feature_dim() != donor_pan.feature_dim() {
            return Err(MixupError::FeatureDimMismatch {
                host: kv.host.clone(),
                donor: kv.donor.clone(),
            });
        }
        let host_center = sector_index(heading(
            c.graph.position(&kv.host)?,
            c.graph.position(&kv.neighbor)?,
        )?);
        let donor_center = sector_index(kv.donor_heading);
        let target = mixed.get_mut(&kv.host).expect("host panorama present");
        for (h, o) in replaced_sectors(host_center, k_replace) {
            let d = offset_sector(donor_center, o);
            for v in 0..V_TIERS {
                *target.cell_mut(h, v) = donor_pan.cell(d, v).clone();
            }
        }
    }
    let (scene_id, vertices, edges, _) = c.graph.clone().into_parts();
    let mut meta = c.meta.clone();
    meta.k_replace = Some(k_replace);
    Ok(CrossScene {
        meta,
        graph: SceneGraph::new(scene_id, vertices, edges, mixed)?,
    })
}
