//! Path replay, navigation metrics and augmented-triplet validation.
//!
//! Metric definitions:
//! - TL: summed Euclidean step lengths.
//! - NE: Euclidean distance from the final viewpoint to the goal.
//! - SR / OSR: NE (or the closest visited viewpoint) within 3 m.
//! - SPL: `success * shortest / max(shortest, actual)`.
//! - nDTW: `exp(-DTW(R, P) / (|R| * d_th))`, Euclidean ground cost; SDTW = SR * nDTW.
//! - CLS: path coverage times length score, without a clamp on the length
//!   score (the original formulation).

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::nav_graph::{distance, heading, sector_index, GraphError, Heading, Point3, SceneGraph};
use crate::scene_mixup::{namespaced, offset_sector, replaced_sectors, CrossScene};
use crate::splice::{
    split_at_key_edge, split_chunks, AugmentedTriplet, InstructionRecord, PathRecord,
};

/// Success radius in meters.
pub const SUCCESS_RADIUS_M: f64 = 3.0;
/// Heading restoration tolerance in radians.
pub const HEADING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("invalid path at step {step}: {reason}")]
    InvalidPath { step: usize, reason: String },
    #[error("path is empty")]
    EmptyPath,
    #[error("bad lengths: shortest {shortest}, actual {actual}")]
    BadLengths { shortest: f64, actual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayResult {
    pub trajectory_length: f64,
    pub nav_error: f64,
    pub success: bool,
    pub oracle_success: bool,
    /// Heading of each step; `None` where the step is vertical.
    pub step_headings: Vec<Option<Heading>>,
    pub step_sectors: Vec<Option<usize>>,
}

/// Positions of `path` in `scene`, checking every step is an edge.
pub fn path_positions(path: &[String], scene: &SceneGraph) -> Result<Vec<Point3>, MetricsError> {
    if path.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    for (step, w) in path.windows(2).enumerate() {
        if !scene.has_edge(&w[0], &w[1]) {
            return Err(MetricsError::InvalidPath {
                step,
                reason: format!("({}, {}) is not an edge", w[0], w[1]),
            });
        }
    }
    path.iter()
        .enumerate()
        .map(|(step, id)| {
            scene.position(id).map_err(|_| MetricsError::InvalidPath {
                step,
                reason: format!("unknown viewpoint `{id}`"),
            })
        })
        .collect()
}

pub fn path_length(points: &[Point3]) -> f64 {
    points.windows(2).map(|w| distance(w[0], w[1])).sum()
}

pub fn replay(
    path: &[String],
    scene: &SceneGraph,
    goal: Point3,
) -> Result<ReplayResult, MetricsError> {
    let pts = path_positions(path, scene)?;
    let nav_error = distance(*pts.last().unwrap(), goal);
    let closest = pts
        .iter()
        .map(|p| distance(*p, goal))
        .fold(f64::INFINITY, f64::min);
    let step_headings: Vec<Option<Heading>> =
        pts.windows(2).map(|w| heading(w[0], w[1]).ok()).collect();
    Ok(ReplayResult {
        trajectory_length: path_length(&pts),
        nav_error,
        success: nav_error <= SUCCESS_RADIUS_M,
        oracle_success: closest <= SUCCESS_RADIUS_M,
        step_sectors: step_headings.iter().map(|h| h.map(sector_index)).collect(),
        step_headings,
    })
}

pub fn spl(success: bool, shortest_len: f64, actual_len: f64) -> Result<f64, MetricsError> {
    let ok = |x: f64| x.is_finite() && x >= 0.0;
    if !ok(shortest_len) || !ok(actual_len) {
        return Err(MetricsError::BadLengths {
            shortest: shortest_len,
            actual: actual_len,
        });
    }
    if !success {
        return Ok(0.0);
    }
    let denom = shortest_len.max(actual_len);
    if denom == 0.0 {
        // Start is the goal and the agent stayed put.
        return Ok(1.0);
    }
    Ok(shortest_len / denom)
}

/// Monotone DTW cost with Euclidean ground distance.
pub fn dtw(reference: &[Point3], pred: &[Point3]) -> f64 {
    let m = pred.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for r in reference {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = distance(*r, pred[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

pub fn ndtw_points(reference: &[Point3], pred: &[Point3], d_th: f64) -> Result<f64, MetricsError> {
    if reference.is_empty() || pred.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    Ok((-dtw(reference, pred) / (reference.len() as f64 * d_th)).exp())
}

pub fn ndtw(
    reference: &[String],
    pred: &[String],
    scene: &SceneGraph,
    d_th: f64,
) -> Result<f64, MetricsError> {
    ndtw_points(
        &path_positions(reference, scene)?,
        &path_positions(pred, scene)?,
        d_th,
    )
}

pub fn sdtw(success: bool, ndtw: f64) -> f64 {
    if success {
        ndtw
    } else {
        0.0
    }
}

/// Coverage weighted by length score.
pub fn cls(reference: &[Point3], pred: &[Point3], d_th: f64) -> Result<f64, MetricsError> {
    if reference.is_empty() || pred.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    let coverage = reference
        .iter()
        .map(|r| {
            let d = pred
                .iter()
                .map(|p| distance(*r, *p))
                .fold(f64::INFINITY, f64::min);
            (-d / d_th).exp()
        })
        .sum::<f64>()
        / reference.len() as f64;
    let expected = coverage * path_length(reference);
    let denom = expected + (expected - path_length(pred)).abs();
    let length_score = if denom == 0.0 { 1.0 } else { expected / denom };
    Ok(coverage * length_score)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMetrics {
    pub trajectory_length: f64,
    pub nav_error: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub ndtw: f64,
    pub sdtw: f64,
    pub cls: f64,
}

/// Scores `pred` against `reference`; the goal is the reference's last
/// viewpoint and the shortest length is the reference's length.
pub fn evaluate(
    reference: &[String],
    pred: &[String],
    scene: &SceneGraph,
) -> Result<PathMetrics, MetricsError> {
    let ref_pts = path_positions(reference, scene)?;
    let pred_pts = path_positions(pred, scene)?;
    let r = replay(pred, scene, *ref_pts.last().unwrap())?;
    let nd = ndtw_points(&ref_pts, &pred_pts, SUCCESS_RADIUS_M)?;
    Ok(PathMetrics {
        trajectory_length: r.trajectory_length,
        nav_error: r.nav_error,
        success: r.success,
        oracle_success: r.oracle_success,
        spl: spl(r.success, path_length(&ref_pts), r.trajectory_length)?,
        ndtw: nd,
        sdtw: sdtw(r.success, nd),
        cls: cls(&ref_pts, &pred_pts, SUCCESS_RADIUS_M)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub items: usize,
    pub trajectory_length: f64,
    pub nav_error: f64,
    pub success_rate: f64,
    pub oracle_success_rate: f64,
    pub spl: f64,
    pub ndtw: f64,
    pub sdtw: f64,
    pub cls: f64,
}

pub fn aggregate(items: &[PathMetrics]) -> Aggregate {
    let n = items.len();
    let mean = |f: &dyn Fn(&PathMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            items.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Aggregate {
        items: n,
        trajectory_length: mean(&|m| m.trajectory_length),
        nav_error: mean(&|m| m.nav_error),
        success_rate: mean(&|m| f64::from(u8::from(m.success))),
        oracle_success_rate: mean(&|m| f64::from(u8::from(m.oracle_success))),
        spl: mean(&|m| m.spl),
        ndtw: mean(&|m| m.ndtw),
        sdtw: mean(&|m| m.sdtw),
        cls: mean(&|m| m.cls),
    }
}

/// Source paths and instructions, keyed for donor lookups.
#[derive(Debug, Clone, Default)]
pub struct DonorIndex {
    pub paths: BTreeMap<String, PathRecord>,
    pub instructions: BTreeMap<String, InstructionRecord>,
}

impl DonorIndex {
    pub fn new(paths: &[PathRecord], instructions: &[InstructionRecord]) -> Self {
        Self {
            paths: paths
                .iter()
                .map(|p| (p.path_id.clone(), p.clone()))
                .collect(),
            instructions: instructions
                .iter()
                .map(|i| (i.instruction_id(), i.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    EdgeValidity {
        step: usize,
        from: String,
        to: String,
    },
    SingleCrossing {
        crossings: usize,
    },
    PathReconstruction {
        detail: String,
    },
    TokenReconstruction {
        detail: String,
    },
    HeadingRestoration {
        junction: String,
        mismatch_deg: f64,
        aligned: bool,
    },
    PanoramaProvenance {
        viewpoint: String,
        detail: String,
    },
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::EdgeValidity { .. } => "edge_validity",
            Violation::SingleCrossing { .. } => "single_crossing",
            Violation::PathReconstruction { .. } => "path_reconstruction",
            Violation::TokenReconstruction { .. } => "token_reconstruction",
            Violation::HeadingRestoration { .. } => "heading_restoration",
            Violation::PanoramaProvenance { .. } => "panorama_provenance",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EdgeValidity { step, from, to } => {
                write!(f, "step {step}: ({from}, {to}) is not an edge")
            }
            Violation::SingleCrossing { crossings } => {
                write!(f, "path crosses cross edges {crossings} times, expected 1")
            }
            Violation::PathReconstruction { detail }
            | Violation::TokenReconstruction { detail } => f.write_str(detail),
            Violation::HeadingRestoration {
                junction,
                mismatch_deg,
                aligned,
            } => write!(
                f,
                "junction {junction} heading off by {mismatch_deg:.6} deg (aligned: {aligned})"
            ),
            Violation::PanoramaProvenance { viewpoint, detail } => {
                write!(f, "{viewpoint}: {detail}")
            }
        }
    }
}

/// Re-derives a donor half from the source data.
fn donor_half(
    c: &CrossScene,
    donors: &DonorIndex,
    path_id: &str,
    instruction_id: &str,
    head: bool,
) -> Result<(Vec<String>, Vec<String>), String> {
    let p = donors
        .paths
        .get(path_id)
        .ok_or_else(|| format!("unknown donor path `{path_id}`"))?;
    let ins = donors
        .instructions
        .get(instruction_id)
        .ok_or_else(|| format!("unknown donor instruction `{instruction_id}`"))?;
    let side = c
        .meta
        .sources
        .iter()
        .position(|s| *s == p.scene_id)
        .ok_or_else(|| {
            format!(
                "donor path `{path_id}` is from foreign scene `{}`",
                p.scene_id
            )
        })?;
    let d = split_at_key_edge(p, &c.meta.key_edges[side])
        .ok_or_else(|| format!("donor path `{path_id}` never crosses its key edge"))?;
    let d = split_chunks(ins, &d).map_err(|e| e.to_string())?;
    let (verts, toks) = if head {
        (d.head.clone(), d.head_tokens().to_vec())
    } else {
        (d.tail.clone(), d.tail_tokens().to_vec())
    };
    Ok((
        verts.iter().map(|v| namespaced(&p.scene_id, v)).collect(),
        toks,
    ))
}

/// Checks one emitted triplet against its cross scene and the source data.
/// An empty result means the triplet is valid.
pub fn validate_triplet(
    t: &AugmentedTriplet,
    c: &CrossScene,
    donors: &DonorIndex,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let meta = &c.meta;

    // Edge validity.
    for (step, w) in t.vertices.windows(2).enumerate() {
        if !c.graph.has_edge(&w[0], &w[1]) {
            out.push(Violation::EdgeValidity {
                step,
                from: w[0].clone(),
                to: w[1].clone(),
            });
        }
    }

    // Exactly one cross-edge crossing.
    let crossings: Vec<usize> = t
        .vertices
        .windows(2)
        .filter_map(|w| meta.cross_edges.iter().position(|e| e.joins(&w[0], &w[1])))
        .collect();
    if crossings.len() != 1 {
        out.push(Violation::SingleCrossing {
            crossings: crossings.len(),
        });
    }

    // Path and token reconstruction from donors.
    let pv = &t.provenance;
    match (
        donor_half(c, donors, &pv.head_path, &pv.head_instruction, true),
        donor_half(c, donors, &pv.tail_path, &pv.tail_instruction, false),
    ) {
        (Ok((hv, ht)), Ok((tv, tt))) => {
            if [hv, tv].concat() != t.vertices {
                out.push(Violation::PathReconstruction {
                    detail: "path differs from donor head ++ tail".into(),
                });
            }
            if [ht, tt].concat() != t.tokens {
                out.push(Violation::TokenReconstruction {
                    detail: "tokens differ from donor head chunks ++ tail chunks".into(),
                });
            }
        }
        (Err(e), _) | (_, Err(e)) => out.push(Violation::TokenReconstruction { detail: e }),
    }

    // Junction heading and view provenance.
    if let Some(&i) = crossings.first() {
        match c.junction_mismatch() {
            Ok(m) if m[i] > HEADING_TOLERANCE => out.push(Violation::HeadingRestoration {
                junction: meta.cross_edges[i].to_string(),
                mismatch_deg: m[i].to_degrees(),
                aligned: meta.alignment.applied,
            }),
            Ok(_) => {}
            Err(e) => {
                log::warn!("junction heading undefined: {e}");
                out.push(Violation::HeadingRestoration {
                    junction: meta.cross_edges[i].to_string(),
                    mismatch_deg: f64::NAN,
                    aligned: meta.alignment.applied,
                });
            }
        }
        let junction = &meta.cross_edges[i];
        for kv in meta.key_viewpoints() {
            if junction.contains(&kv.host) {
                if let Err(detail) =
                    check_key_panorama(c, &kv.host, &kv.neighbor, &kv.donor, kv.donor_heading)
                {
                    out.push(Violation::PanoramaProvenance {
                        viewpoint: kv.host.clone(),
                        detail,
                    });
                }
            }
        }
    }
    out
}

fn check_key_panorama(
    c: &CrossScene,
    host: &str,
    neighbor: &str,
    donor: &str,
    donor_heading: Heading,
) -> Result<(), String> {
    let meta = &c.meta;
    let pan = c
        .graph
        .panorama(host)
        .ok_or_else(|| "missing panorama".to_string())?;
    let (host_scene, _) = meta.source_of(host).ok_or("host outside sources")?;
    let (donor_scene, donor_local) = meta.source_of(donor).ok_or("donor outside sources")?;
    let k = meta.k_replace.unwrap_or(0);
    let center = match (c.graph.position(host), c.graph.position(neighbor)) {
        (Ok(a), Ok(b)) => sector_index(heading(a, b).map_err(|e: GraphError| e.to_string())?),
        _ => return Err("unknown key viewpoint".into()),
    };
    let replaced: BTreeMap<usize, isize> = replaced_sectors(center, k).into_iter().collect();
    let donor_center = sector_index(donor_heading);
    let mut donor_cells = 0;
    for (idx, cell) in pan.cells().iter().enumerate() {
        let (h, v) = (idx % 12, idx / 12);
        let p = &cell.provenance;
        match replaced.get(&h) {
            Some(&o) => {
                let want_h = offset_sector(donor_center, o);
                if p.scene_id != donor_scene
                    || p.viewpoint_id != donor_local
                    || usize::from(p.h) != want_h
                    || usize::from(p.v) != v
                {
                    return Err(format!(
                        "cell ({h}, {v}) should come from {donor_scene}/{donor_local} sector {want_h}"
                    ));
                }
                donor_cells += 1;
            }
            None if p.scene_id != host_scene => {
                return Err(format!("cell ({h}, {v}) should be a host cell"));
            }
            None => {}
        }
    }
    if donor_cells != 3 * k {
        return Err(format!("{donor_cells} donor cells, expected {}", 3 * k));
    }
    Ok(())
}

/// Structural checks of a cross scene against its two sources.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub vertex_count_sums: bool,
    pub edge_count_sums: bool,
    pub connected: bool,
    pub components: usize,
    pub key_edges_removed: bool,
    pub cross_edges_present: bool,
}

impl StructureReport {
    /// Every check except connectivity.
    pub fn surgery_ok(&self) -> bool {
        self.vertex_count_sums
            && self.edge_count_sums
            && self.key_edges_removed
            && self.cross_edges_present
    }
}

pub fn cross_structure(c: &CrossScene, g1: &SceneGraph, g2: &SceneGraph) -> StructureReport {
    let g = &c.graph;
    StructureReport {
        vertex_count_sums: g.vertex_count() == g1.vertex_count() + g2.vertex_count(),
        edge_count_sums: g.edge_count() == g1.edge_count() + g2.edge_count(),
        connected: g.is_connected(),
        components: g.component_count(),
        key_edges_removed: c
            .meta
            .removed_edges
            .iter()
            .all(|e| !g.has_edge(e.lo(), e.hi())),
        cross_edges_present: c
            .meta
            .cross_edges
            .iter()
            .all(|e| g.has_edge(e.lo(), e.hi())),
    }
}
