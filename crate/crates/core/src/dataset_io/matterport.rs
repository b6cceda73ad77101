//! Import of simulator connectivity files: a JSON array of viewpoint records
//! `{image_id, pose[16], included, unobstructed[n], ...}` where `pose` is a
//! row-major 4x4 camera-to-world matrix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{read_json, DatasetError};
use crate::nav_graph::{Edge, Panorama, SceneGraph, Vertex};

#[derive(Debug, Clone, Deserialize)]
struct ViewpointRecord {
    image_id: String,
    pose: Vec<f64>,
    included: bool,
    unobstructed: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct MatterportImport {
    pub graph: SceneGraph,
    /// Included pairs flagged unobstructed in one direction only; dropped.
    pub asymmetric: Vec<Edge>,
}

pub fn import_matterport_connectivity(
    file: &Path,
    scene_id: &str,
    feature_dim: usize,
) -> Result<MatterportImport, DatasetError> {
    let records: Vec<serde_json::Value> = read_json(file)?;
    parse_matterport_connectivity(&records, scene_id, feature_dim).map_err(|e| match e {
        DatasetError::Parse { message, .. } => DatasetError::Parse {
            file: file.display().to_string(),
            message,
        },
        other => other,
    })
}

/// Builds a scene from already-parsed connectivity records.
pub fn parse_matterport_connectivity(
    records: &[serde_json::Value],
    scene_id: &str,
    feature_dim: usize,
) -> Result<MatterportImport, DatasetError> {
    let parse = |message: String| DatasetError::Parse {
        file: scene_id.to_string(),
        message,
    };
    let recs: Vec<ViewpointRecord> = records
        .iter()
        .map(|r| serde_json::from_value(r.clone()).map_err(|e| parse(e.to_string())))
        .collect::<Result<_, _>>()?;
    let n = recs.len();
    for r in &recs {
        if r.pose.len() != 16 {
            return Err(parse(format!(
                "`{}`: pose has {} entries, expected 16",
                r.image_id,
                r.pose.len()
            )));
        }
        if r.unobstructed.len() != n {
            return Err(parse(format!(
                "`{}`: unobstructed has {} entries, expected {n}",
                r.image_id,
                r.unobstructed.len()
            )));
        }
    }

    let mut vertices = Vec::new();
    let mut panoramas = BTreeMap::new();
    for r in recs.iter().filter(|r| r.included) {
        vertices.push(Vertex::new(
            r.image_id.clone(),
            [r.pose[3], r.pose[7], r.pose[11]],
        ));
        panoramas.insert(
            r.image_id.clone(),
            Panorama::placeholder(scene_id, &r.image_id, feature_dim),
        );
    }
    let mut edges = Vec::new();
    let mut asymmetric = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&recs[i], &recs[j]);
            if !(a.included && b.included) {
                continue;
            }
            let e = Edge::new(a.image_id.clone(), b.image_id.clone());
            match (a.unobstructed[j], b.unobstructed[i]) {
                (true, true) => edges.push(e),
                (false, false) => {}
                _ => {
                    log::warn!("{scene_id}: {e} is unobstructed in one direction only; dropped");
                    asymmetric.push(e);
                }
            }
        }
    }
    let graph = SceneGraph::new(scene_id, vertices, edges, panoramas)
        .map_err(|e| DatasetError::violation(scene_id, "scene_structure", e.to_string()))?;
    Ok(MatterportImport { graph, asymmetric })
}
