//! On-disk formats, bundle loading and saving, import and synthetic data.
//!
//! A bundle directory holds:
//! - `scenes/<scene_id>.json`: one scene file per scene, plus
//!   `scenes/<scene_id>.mixup.json` for cross scenes;
//! - `dataset.json`: array of `{path_id, scan, path, instructions}`, with
//!   optional `junction` and per-instruction `provenance` on augmented data;
//! - `chunks.json`: `path_id -> [[{token_span, path_span}, ...], ...]`, one
//!   list per instruction.

mod matterport;
mod pairs;
mod synth;

pub use matterport::{
    import_matterport_connectivity, parse_matterport_connectivity, MatterportImport,
};
pub use pairs::{sample_pairs, PairPlan};
pub use synth::{synth_generate, synth_generate_with, SynthConfig};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nav_graph::{Edge, SceneFile, SceneGraph};
use crate::scene_mixup::{CrossMeta, CrossScene};
use crate::splice::{
    check_chunks, AugmentedTriplet, Chunk, InstructionRecord, PathRecord, TripletProvenance,
};

pub const SCENES_DIR: &str = "scenes";
pub const DATASET_FILE: &str = "dataset.json";
pub const CHUNKS_FILE: &str = "chunks.json";
pub const MIXUP_SUFFIX: &str = ".mixup.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot parse {file}: {message}")]
    Parse { file: String, message: String },
    #[error("record `{record}` violates {rule}: {detail}")]
    InvariantViolation {
        record: String,
        rule: &'static str,
        detail: String,
    },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    fn violation(record: impl Into<String>, rule: &'static str, detail: impl Into<String>) -> Self {
        DatasetError::InvariantViolation {
            record: record.into(),
            rule,
            detail: detail.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// The violated rule, for invariant violations.
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            DatasetError::InvariantViolation { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

/// One row of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub path_id: String,
    pub scan: String,
    pub path: Vec<String>,
    pub instructions: Vec<Vec<String>>,
    /// Cross edge traversed by an augmented path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub junction: Option<Edge>,
    /// Donor provenance of each instruction of an augmented path.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<TripletProvenance>,
}

pub type ChunkFile = BTreeMap<String, Vec<Vec<Chunk>>>;

/// Scenes, paths and instructions, validated together.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetBundle {
    pub scenes: BTreeMap<String, SceneGraph>,
    /// Mixup records of the cross scenes in `scenes`.
    pub cross_meta: BTreeMap<String, CrossMeta>,
    pub paths: Vec<PathRecord>,
    pub instructions: Vec<InstructionRecord>,
    /// Augmented paths only: the cross edge each one traverses.
    pub junctions: BTreeMap<String, Edge>,
    /// Augmented instructions only, keyed by instruction id.
    pub provenance: BTreeMap<String, TripletProvenance>,
}

impl DatasetBundle {
    /// Checks every cross-record invariant. Scene-level structure is already
    /// enforced by [`SceneGraph::new`].
    pub fn validate(&self) -> Result<(), DatasetError> {
        for (id, g) in &self.scenes {
            if id != g.scene_id() {
                return Err(DatasetError::violation(
                    id,
                    "scene_id",
                    format!("file holds `{}`", g.scene_id()),
                ));
            }
            // Cross scenes are split in two by construction.
            if !self.cross_meta.contains_key(id) {
                g.require_connected()
                    .map_err(|e| DatasetError::violation(id, "scene_connected", e.to_string()))?;
            }
        }
        for (id, meta) in &self.cross_meta {
            if !self.scenes.contains_key(id) || meta.scene_id != *id {
                return Err(DatasetError::violation(
                    id,
                    "mixup_sidecar",
                    "sidecar without matching scene",
                ));
            }
        }
        let mut seen = BTreeSet::new();
        let mut path_len = BTreeMap::new();
        for p in &self.paths {
            if !seen.insert(p.path_id.as_str()) {
                return Err(DatasetError::violation(
                    &p.path_id,
                    "path_id_unique",
                    "duplicate path id",
                ));
            }
            let g = self.scenes.get(&p.scene_id).ok_or_else(|| {
                DatasetError::violation(
                    &p.path_id,
                    "path_scene_exists",
                    format!("unknown scene `{}`", p.scene_id),
                )
            })?;
            if p.vertices.len() < 2 {
                return Err(DatasetError::violation(
                    &p.path_id,
                    "path_length",
                    "fewer than 2 viewpoints",
                ));
            }
            if let Some(v) = p.vertices.iter().find(|v| !g.contains_vertex(v)) {
                return Err(DatasetError::violation(
                    &p.path_id,
                    "path_vertex_exists",
                    format!("unknown viewpoint `{v}`"),
                ));
            }
            if let Some((step, w)) = p
                .vertices
                .windows(2)
                .enumerate()
                .find(|(_, w)| !g.has_edge(&w[0], &w[1]))
            {
                return Err(DatasetError::violation(
                    &p.path_id,
                    "path_edge_valid",
                    format!("step {step}: ({}, {}) is not an edge", w[0], w[1]),
                ));
            }
            path_len.insert(p.path_id.as_str(), p.vertices.len());
        }
        let mut seen = BTreeSet::new();
        for ins in &self.instructions {
            let id = ins.instruction_id();
            let len = *path_len.get(ins.path_id.as_str()).ok_or_else(|| {
                DatasetError::violation(
                    &id,
                    "instruction_path_exists",
                    format!("unknown path `{}`", ins.path_id),
                )
            })?;
            if !seen.insert(id.clone()) {
                return Err(DatasetError::violation(
                    &id,
                    "instruction_id_unique",
                    "duplicate instruction",
                ));
            }
            if ins.tokens.is_empty() {
                return Err(DatasetError::violation(
                    &id,
                    "instruction_tokens",
                    "no tokens",
                ));
            }
            check_chunks(&ins.chunks, ins.tokens.len(), len)
                .map_err(|e| DatasetError::violation(&id, "chunk_alignment", e))?;
        }
        for (path_id, e) in &self.junctions {
            let p = self.paths.iter().find(|p| p.path_id == *path_id);
            let crosses = p.is_some_and(|p| p.vertices.windows(2).any(|w| e.joins(&w[0], &w[1])));
            if !crosses {
                return Err(DatasetError::violation(
                    path_id,
                    "junction_on_path",
                    format!("{e} is not traversed"),
                ));
            }
        }
        for id in self.provenance.keys() {
            if !seen.contains(id) {
                return Err(DatasetError::violation(
                    id,
                    "provenance_instruction_exists",
                    "unknown instruction",
                ));
            }
        }
        Ok(())
    }

    pub fn instructions_of<'a>(
        &'a self,
        path_id: &'a str,
    ) -> impl Iterator<Item = &'a InstructionRecord> + 'a {
        self.instructions
            .iter()
            .filter(move |i| i.path_id == path_id)
    }

    /// Cross scene records, for bundles holding augmented output.
    pub fn cross_scenes(&self) -> Vec<CrossScene> {
        self.cross_meta
            .iter()
            .filter_map(|(id, meta)| {
                Some(CrossScene {
                    meta: meta.clone(),
                    graph: self.scenes.get(id)?.clone(),
                })
            })
            .collect()
    }

    /// Augmented triplets, rebuilt from paths, instructions and provenance.
    pub fn triplets(&self) -> Vec<AugmentedTriplet> {
        let by_id: BTreeMap<&str, &PathRecord> =
            self.paths.iter().map(|p| (p.path_id.as_str(), p)).collect();
        self.instructions
            .iter()
            .filter_map(|ins| {
                let p = by_id.get(ins.path_id.as_str())?;
                Some(AugmentedTriplet {
                    cross_scene_id: p.scene_id.clone(),
                    vertices: p.vertices.clone(),
                    tokens: ins.tokens.clone(),
                    chunks: ins.chunks.clone(),
                    junction: self.junctions.get(&p.path_id)?.clone(),
                    provenance: self.provenance.get(&ins.instruction_id())?.clone(),
                })
            })
            .collect()
    }

    /// Dataset rows and chunk map, in path order.
    pub fn to_files(&self) -> (Vec<DatasetEntry>, ChunkFile) {
        let mut entries = Vec::with_capacity(self.paths.len());
        let mut chunks = ChunkFile::new();
        for p in &self.paths {
            let mut ins: Vec<&InstructionRecord> = self.instructions_of(&p.path_id).collect();
            ins.sort_by_key(|i| i.index);
            if ins.iter().any(|i| !i.chunks.is_empty()) {
                chunks.insert(
                    p.path_id.clone(),
                    ins.iter().map(|i| i.chunks.clone()).collect(),
                );
            }
            entries.push(DatasetEntry {
                path_id: p.path_id.clone(),
                scan: p.scene_id.clone(),
                path: p.vertices.clone(),
                instructions: ins.iter().map(|i| i.tokens.clone()).collect(),
                junction: self.junctions.get(&p.path_id).cloned(),
                provenance: ins
                    .iter()
                    .filter_map(|i| self.provenance.get(&i.instruction_id()).cloned())
                    .collect(),
            });
        }
        (entries, chunks)
    }

    /// Assembles a bundle from file records and validates it.
    pub fn from_files(
        scenes: BTreeMap<String, SceneGraph>,
        cross_meta: BTreeMap<String, CrossMeta>,
        entries: Vec<DatasetEntry>,
        chunks: ChunkFile,
    ) -> Result<Self, DatasetError> {
        let known: BTreeSet<&str> = entries.iter().map(|e| e.path_id.as_str()).collect();
        if let Some(k) = chunks.keys().find(|k| !known.contains(k.as_str())) {
            return Err(DatasetError::violation(
                k,
                "chunk_path_exists",
                "chunks for unknown path",
            ));
        }
        let mut b = DatasetBundle {
            scenes,
            cross_meta,
            ..Default::default()
        };
        for e in entries {
            let per_ins = chunks.get(&e.path_id);
            if per_ins.is_some_and(|c| c.len() != e.instructions.len()) {
                return Err(DatasetError::violation(
                    &e.path_id,
                    "chunk_count",
                    "chunk lists do not match instruction count",
                ));
            }
            if !e.provenance.is_empty() && e.provenance.len() != e.instructions.len() {
                return Err(DatasetError::violation(
                    &e.path_id,
                    "provenance_count",
                    "provenance entries do not match instruction count",
                ));
            }
            for (index, tokens) in e.instructions.into_iter().enumerate() {
                let ins = InstructionRecord {
                    path_id: e.path_id.clone(),
                    index,
                    tokens,
                    chunks: per_ins.map(|c| c[index].clone()).unwrap_or_default(),
                };
                if let Some(pv) = e.provenance.get(index) {
                    b.provenance.insert(ins.instruction_id(), pv.clone());
                }
                b.instructions.push(ins);
            }
            if let Some(j) = e.junction {
                b.junctions.insert(e.path_id.clone(), j);
            }
            b.paths.push(PathRecord {
                path_id: e.path_id,
                scene_id: e.scan,
                vertices: e.path,
            });
        }
        b.validate()?;
        Ok(b)
    }
}

/// Serializes `value` the way every output file is written.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory serialization");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    }
    fs::write(path, to_json_bytes(value)).map_err(|e| DatasetError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| DatasetError::Parse {
        file: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn sha256_file(path: &Path) -> Result<String, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Scenes by id, and mixup sidecars by cross scene id.
pub type SceneMaps = (BTreeMap<String, SceneGraph>, BTreeMap<String, CrossMeta>);

/// Reads every scene (and mixup sidecar) in `scene_dir`.
pub fn load_scenes(scene_dir: &Path) -> Result<SceneMaps, DatasetError> {
    let mut files: Vec<PathBuf> = fs::read_dir(scene_dir)
        .map_err(|e| DatasetError::io(scene_dir, e))?
        .map(|r| {
            r.map(|e| e.path())
                .map_err(|e| DatasetError::io(scene_dir, e))
        })
        .collect::<Result<_, _>>()?;
    files.sort();
    let mut scenes = BTreeMap::new();
    let mut metas = BTreeMap::new();
    for f in files {
        let name = f
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if let Some(stem) = name.strip_suffix(MIXUP_SUFFIX) {
            let meta: CrossMeta = read_json(&f)?;
            if meta.scene_id != stem {
                return Err(DatasetError::violation(
                    stem,
                    "mixup_sidecar",
                    format!("sidecar names `{}`", meta.scene_id),
                ));
            }
            metas.insert(stem.to_string(), meta);
        } else if let Some(stem) = name.strip_suffix(".json") {
            let file: SceneFile = read_json(&f)?;
            let g = SceneGraph::try_from(file)
                .map_err(|e| DatasetError::violation(stem, "scene_structure", e.to_string()))?;
            if g.scene_id() != stem {
                return Err(DatasetError::violation(
                    stem,
                    "scene_id",
                    format!("file holds `{}`", g.scene_id()),
                ));
            }
            scenes.insert(stem.to_string(), g);
        }
    }
    Ok((scenes, metas))
}

pub fn load_bundle(
    scene_dir: &Path,
    dataset_file: &Path,
    chunk_file: &Path,
) -> Result<DatasetBundle, DatasetError> {
    let (scenes, metas) = load_scenes(scene_dir)?;
    let entries: Vec<DatasetEntry> = read_json(dataset_file)?;
    let chunks: ChunkFile = if chunk_file.exists() {
        read_json(chunk_file)?
    } else {
        ChunkFile::new()
    };
    DatasetBundle::from_files(scenes, metas, entries, chunks)
}

/// Loads a bundle stored in the standard directory layout.
pub fn load_bundle_dir(dir: &Path) -> Result<DatasetBundle, DatasetError> {
    load_bundle(
        &dir.join(SCENES_DIR),
        &dir.join(DATASET_FILE),
        &dir.join(CHUNKS_FILE),
    )
}

pub fn save_scene(
    dir: &Path,
    g: &SceneGraph,
    meta: Option<&CrossMeta>,
) -> Result<(), DatasetError> {
    write_json(
        &dir.join(format!("{}.json", g.scene_id())),
        &SceneFile::from(g),
    )?;
    if let Some(m) = meta {
        write_json(&dir.join(format!("{}{MIXUP_SUFFIX}", g.scene_id())), m)?;
    }
    Ok(())
}

/// Writes `b` in the standard directory layout under `dir`.
pub fn save_bundle(b: &DatasetBundle, dir: &Path) -> Result<(), DatasetError> {
    let scene_dir = dir.join(SCENES_DIR);
    fs::create_dir_all(&scene_dir).map_err(|e| DatasetError::io(&scene_dir, e))?;
    for g in b.scenes.values() {
        save_scene(&scene_dir, g, b.cross_meta.get(g.scene_id()))?;
    }
    let (entries, chunks) = b.to_files();
    write_json(&dir.join(DATASET_FILE), &entries)?;
    write_json(&dir.join(CHUNKS_FILE), &chunks)
}
