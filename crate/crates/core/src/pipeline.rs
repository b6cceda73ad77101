//! End-to-end augmentation: pair scenes, select key edges, build cross
//! scenes, splice triplets, and write a reproducible output tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset_io::{
    load_bundle_dir, read_json, sample_pairs, sha256_file, to_json_bytes, write_json, ChunkFile,
    DatasetBundle, DatasetEntry, DatasetError, CHUNKS_FILE, DATASET_FILE, MIXUP_SUFFIX, SCENES_DIR,
};
use crate::eval_metrics::{cross_structure, validate_triplet, DonorIndex};
use crate::key_select::{select_key_edge, KeyEdge, DEFAULT_TOP_K};
use crate::nav_graph::{SceneFile, H_SECTORS};
use crate::scene_mixup::{
    align_orientation, cross_connect, cross_scene_id, mix_panoramas, CrossMeta, CrossScene,
    DEFAULT_K_REPLACE,
};
use crate::splice::{
    collect_donors, generate_pair, AugmentedTriplet, InstructionRecord, PathRecord, SpliceConfig,
    SpliceError, SplitDonor, DEFAULT_CAP_PER_PAIR,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MERGED_FILE: &str = "merged.json";
pub const MERGED_CHUNKS_FILE: &str = "merged_chunks.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub seed: u64,
    pub top_k: usize,
    pub k_replace: usize,
    pub orientation_align: bool,
    pub view_mix: bool,
    pub n_pairs: usize,
    /// Maximum distinct spliced paths per pair; `None` keeps all.
    pub cap_per_pair: Option<usize>,
    pub sample_ratio: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            top_k: DEFAULT_TOP_K,
            k_replace: DEFAULT_K_REPLACE,
            orientation_align: true,
            view_mix: true,
            n_pairs: 1,
            cap_per_pair: Some(DEFAULT_CAP_PER_PAIR),
            sample_ratio: 1.0,
        }
    }
}

impl AugmentConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.k_replace > H_SECTORS {
            return bad(format!("k_replace must lie in 0..={H_SECTORS}"));
        }
        if self.n_pairs == 0 {
            return bad("n_pairs must be at least 1".into());
        }
        if self.cap_per_pair == Some(0) {
            return bad("cap_per_pair must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.sample_ratio) {
            return bad("sample_ratio must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Dataset {
        stage: &'static str,
        #[source]
        source: DatasetError,
    },
}

impl PipelineError {
    fn at(stage: &'static str) -> impl FnOnce(DatasetError) -> PipelineError {
        move |source| PipelineError::Dataset { stage, source }
    }
}

/// Per-pair diagnostics recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub index: usize,
    pub sources: [String; 2],
    pub cross_scene_id: String,
    pub seed: u64,
    pub key_edges: [KeyEdge; 2],
    pub donors: [usize; 2],
    pub paths: usize,
    pub instructions: usize,
    pub components: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub index: usize,
    pub sources: [String; 2],
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentResult {
    pub cross: Vec<(CrossScene, u64)>,
    /// Cross scenes, spliced paths and instructions with provenance.
    pub bundle: DatasetBundle,
    pub pairs: Vec<PairReport>,
    pub skipped: Vec<SkippedPair>,
    /// Validator findings on the emitted triplets, counted by rule.
    pub violations: BTreeMap<String, usize>,
}

/// Seed of the `occurrence`-th use of pair `(a, b)`.
pub fn pair_seed(global: u64, a: &str, b: &str, occurrence: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    for part in [a, b] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    h.update((occurrence as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

type SceneKey = Result<(KeyEdge, Vec<SplitDonor>), (&'static str, String)>;

fn prepare_scene(b: &DatasetBundle, id: &str, top_k: usize) -> SceneKey {
    let g = &b.scenes[id];
    let key = select_key_edge(g, &b.paths, top_k).map_err(|e| ("key_select", e.to_string()))?;
    let donors =
        collect_donors(&key, &b.paths, &b.instructions).map_err(|e| ("donors", e.to_string()))?;
    Ok((key, donors))
}

enum PairOutcome {
    Done(Box<(CrossScene, u64, Vec<AugmentedTriplet>, PairReport)>),
    Skipped(SkippedPair),
}

/// Runs the augmentation on `input` entirely in memory.
pub fn augment(input: &DatasetBundle, cfg: &AugmentConfig) -> Result<AugmentResult, PipelineError> {
    cfg.check()?;
    let source_ids: Vec<String> = input
        .scenes
        .keys()
        .filter(|id| !input.cross_meta.contains_key(*id))
        .cloned()
        .collect();
    let plan =
        sample_pairs(&source_ids, cfg.n_pairs, cfg.seed).map_err(PipelineError::at("pairing"))?;

    let used: BTreeSet<&String> = plan.pairs.iter().flat_map(|(a, b)| [a, b]).collect();
    let prepared: BTreeMap<&String, SceneKey> = used
        .into_par_iter()
        .map(|id| (id, prepare_scene(input, id, cfg.top_k)))
        .collect();

    let mut seen: BTreeMap<&(String, String), usize> = BTreeMap::new();
    let jobs: Vec<(usize, &(String, String), usize)> = plan
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = seen.entry(p).or_default();
            *n += 1;
            (i, p, *n - 1)
        })
        .collect();

    let outcomes: Vec<PairOutcome> = jobs
        .par_iter()
        .map(|&(index, (a, b), occurrence)| {
            let skip = |stage: &str, reason: String| {
                PairOutcome::Skipped(SkippedPair {
                    index,
                    sources: [a.clone(), b.clone()],
                    stage: stage.to_string(),
                    reason,
                })
            };
            let (ka, da) = match &prepared[a] {
                Ok(x) => x,
                Err((stage, e)) => return skip(stage, e.clone()),
            };
            let (kb, db) = match &prepared[b] {
                Ok(x) => x,
                Err((stage, e)) => return skip(stage, e.clone()),
            };
            let seed = pair_seed(cfg.seed, a, b, occurrence);
            match build_pair(input, cfg, (a, ka, da), (b, kb, db), occurrence, seed) {
                Ok((c, trips, donors_note)) => {
                    let paths: BTreeSet<&Vec<String>> = trips.iter().map(|t| &t.vertices).collect();
                    let report = PairReport {
                        index,
                        sources: [a.clone(), b.clone()],
                        cross_scene_id: c.meta.scene_id.clone(),
                        seed,
                        key_edges: [ka.clone(), kb.clone()],
                        donors: [da.len(), db.len()],
                        paths: paths.len(),
                        instructions: trips.len(),
                        components: c.graph.component_count(),
                        note: donors_note,
                    };
                    PairOutcome::Done(Box::new((c, seed, trips, report)))
                }
                Err((stage, e)) => skip(stage, e),
            }
        })
        .collect();

    let mut result = AugmentResult {
        cross: Vec::new(),
        bundle: DatasetBundle::default(),
        pairs: Vec::new(),
        skipped: Vec::new(),
        violations: BTreeMap::new(),
    };
    let donors = DonorIndex::new(&input.paths, &input.instructions);
    for o in outcomes {
        match o {
            PairOutcome::Skipped(s) => {
                log::warn!(
                    "pair {} ({} + {}) skipped at {}: {}",
                    s.index,
                    s.sources[0],
                    s.sources[1],
                    s.stage,
                    s.reason
                );
                result.skipped.push(s);
            }
            PairOutcome::Done(done) => {
                let (c, seed, trips, report) = *done;
                for t in &trips {
                    for v in validate_triplet(t, &c, &donors) {
                        *result.violations.entry(v.rule().to_string()).or_default() += 1;
                    }
                }
                add_triplets(&mut result.bundle, &c.meta.scene_id, trips);
                result
                    .bundle
                    .scenes
                    .insert(c.meta.scene_id.clone(), c.graph.clone());
                result
                    .bundle
                    .cross_meta
                    .insert(c.meta.scene_id.clone(), c.meta.clone());
                result.cross.push((c, seed));
                result.pairs.push(report);
            }
        }
    }
    Ok(result)
}

type PairBuild = (CrossScene, Vec<AugmentedTriplet>, Option<String>);

fn build_pair(
    input: &DatasetBundle,
    cfg: &AugmentConfig,
    (a, ka, da): (&String, &KeyEdge, &Vec<SplitDonor>),
    (b, kb, db): (&String, &KeyEdge, &Vec<SplitDonor>),
    occurrence: usize,
    seed: u64,
) -> Result<PairBuild, (&'static str, String)> {
    let mut c = cross_connect(&input.scenes[a], ka, &input.scenes[b], kb)
        .map_err(|e| ("cross_connect", e.to_string()))?;
    if occurrence > 0 {
        let id = format!("{}~{occurrence}", cross_scene_id(a, b));
        c = c
            .renamed(&id)
            .map_err(|e| ("cross_connect", e.to_string()))?;
    }
    if cfg.orientation_align {
        c = align_orientation(&c).map_err(|e| ("orientation_align", e.to_string()))?;
    }
    if cfg.view_mix {
        c = mix_panoramas(&c, cfg.k_replace, !cfg.orientation_align)
            .map_err(|e| ("view_mix", e.to_string()))?;
    }
    let splice_cfg = SpliceConfig {
        cap_per_pair: cfg.cap_per_pair,
        sample_ratio: cfg.sample_ratio,
        seed,
    };
    match generate_pair(&c, da, db, &splice_cfg) {
        Ok(t) => Ok((c, t, None)),
        Err(e @ SpliceError::NoDonors(_)) => Ok((c, Vec::new(), Some(e.to_string()))),
        Err(e) => Err(("splice", e.to_string())),
    }
}

/// Appends triplets as paths of `scene_id`; triplets sharing a vertex
/// sequence become instructions of one path.
fn add_triplets(b: &mut DatasetBundle, scene_id: &str, trips: Vec<AugmentedTriplet>) {
    let mut groups: Vec<(Vec<String>, Vec<AugmentedTriplet>)> = Vec::new();
    for t in trips {
        match groups.last_mut() {
            Some((v, g)) if *v == t.vertices => g.push(t),
            _ => groups.push((t.vertices.clone(), vec![t])),
        }
    }
    for (j, (vertices, group)) in groups.into_iter().enumerate() {
        let path_id = format!("{scene_id}_{j:04}");
        b.junctions
            .insert(path_id.clone(), group[0].junction.clone());
        for (index, t) in group.into_iter().enumerate() {
            let ins = InstructionRecord {
                path_id: path_id.clone(),
                index,
                tokens: t.tokens,
                chunks: t.chunks,
            };
            b.provenance.insert(ins.instruction_id(), t.provenance);
            b.instructions.push(ins);
        }
        b.paths.push(PathRecord {
            path_id,
            scene_id: scene_id.to_string(),
            vertices,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    /// Input directory as given on the command line.
    pub dir: String,
    /// SHA-256 of every input file, keyed by path relative to `dir`.
    pub digests: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub pairs_requested: usize,
    pub cross_scenes: usize,
    pub paths: usize,
    pub instructions: usize,
    pub skipped_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config: AugmentConfig,
    pub input: InputRecord,
    pub counts: Counts,
    pub pairs: Vec<PairReport>,
    pub skipped: Vec<SkippedPair>,
    pub violations: BTreeMap<String, usize>,
    /// Fixed conventions of this build that affect outputs.
    pub conventions: BTreeMap<String, String>,
    /// SHA-256 of every other output file, keyed by relative path.
    pub outputs: BTreeMap<String, String>,
}

/// Scene sidecar: the mixup record plus the pair seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixupSidecar {
    #[serde(flatten)]
    pub meta: CrossMeta,
    pub seed: u64,
}

fn digest_tree(root: &Path) -> Result<BTreeMap<String, String>, DatasetError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| DatasetError::Io {
            path: dir.clone(),
            source: e,
        })?;
        for entry in entries {
            let p = entry
                .map_err(|e| DatasetError::Io {
                    path: dir.clone(),
                    source: e,
                })?
                .path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).expect("walk stays under root");
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(key, sha256_file(&p)?);
            }
        }
    }
    Ok(out)
}

fn conventions() -> BTreeMap<String, String> {
    [
        ("betweenness", "hop-count, unnormalized, unordered pairs"),
        ("cls_variant", "unclamped length score"),
        ("ndtw_normalizer", "reference length, d_th = 3.0 m"),
        ("overlapping_coordinates", "permitted after alignment"),
        ("success_radius_m", "3.0"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Loads the bundle in `input_dir`, augments it and writes the output tree.
pub fn run_augment(
    input_dir: &Path,
    out_dir: &Path,
    cfg: &AugmentConfig,
    merge: bool,
) -> Result<Manifest, PipelineError> {
    cfg.check()?;
    let input = load_bundle_dir(input_dir).map_err(PipelineError::at("load"))?;
    let digests = digest_tree(input_dir).map_err(PipelineError::at("load"))?;
    let result = augment(&input, cfg)?;
    write_output(&input, &result, out_dir, merge).map_err(PipelineError::at("write"))?;
    let outputs = digest_tree(out_dir).map_err(PipelineError::at("write"))?;
    let manifest = Manifest {
        tool: format!("rem {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        input: InputRecord {
            dir: input_dir.display().to_string(),
            digests,
        },
        counts: Counts {
            pairs_requested: cfg.n_pairs,
            cross_scenes: result.cross.len(),
            paths: result.bundle.paths.len(),
            instructions: result.bundle.instructions.len(),
            skipped_pairs: result.skipped.len(),
        },
        pairs: result.pairs,
        skipped: result.skipped,
        violations: result.violations,
        conventions: conventions(),
        outputs: outputs
            .into_iter()
            .filter(|(k, _)| k != MANIFEST_FILE)
            .collect(),
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest).map_err(PipelineError::at("write"))?;
    Ok(manifest)
}

fn write_output(
    input: &DatasetBundle,
    r: &AugmentResult,
    out: &Path,
    merge: bool,
) -> Result<(), DatasetError> {
    let scene_dir = out.join(SCENES_DIR);
    fs::create_dir_all(&scene_dir).map_err(|e| DatasetError::Io {
        path: scene_dir.clone(),
        source: e,
    })?;
    for (c, seed) in &r.cross {
        let id = &c.meta.scene_id;
        write_json(
            &scene_dir.join(format!("{id}.json")),
            &SceneFile::from(&c.graph),
        )?;
        let sidecar = MixupSidecar {
            meta: c.meta.clone(),
            seed: *seed,
        };
        write_json(&scene_dir.join(format!("{id}{MIXUP_SUFFIX}")), &sidecar)?;
    }
    let (entries, chunks) = r.bundle.to_files();
    write_json(&out.join(DATASET_FILE), &entries)?;
    write_json(&out.join(CHUNKS_FILE), &chunks)?;
    if merge {
        let (mut all, mut all_chunks): (Vec<DatasetEntry>, ChunkFile) = input.to_files();
        all.extend(entries);
        all_chunks.extend(chunks);
        write_json(&out.join(MERGED_FILE), &all)?;
        write_json(&out.join(MERGED_CHUNKS_FILE), &all_chunks)?;
    }
    Ok(())
}

/// Violations found in an output tree, grouped by rule.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub items: usize,
    pub cross_scenes: usize,
    /// Rule -> messages, each prefixed by the offending instruction or scene.
    pub violations: BTreeMap<String, Vec<String>>,
    /// Cross scenes whose graph has more than one component.
    pub disconnected_scenes: usize,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.violations.values().map(Vec::len).sum()
    }
}

/// Validates every triplet in the output tree `out_dir` against the source
/// bundle in `source_dir`, or the input recorded in the manifest.
pub fn validate_output(
    out_dir: &Path,
    source_dir: Option<&Path>,
) -> Result<ValidationReport, PipelineError> {
    let output = load_bundle_dir(out_dir).map_err(PipelineError::at("load output"))?;
    let source: PathBuf = match source_dir {
        Some(p) => p.to_path_buf(),
        None => {
            let m: Manifest = read_json(&out_dir.join(MANIFEST_FILE))
                .map_err(PipelineError::at("load manifest"))?;
            PathBuf::from(m.input.dir)
        }
    };
    let input = load_bundle_dir(&source).map_err(PipelineError::at("load source"))?;
    Ok(validate_bundle(&output, &input))
}

pub fn validate_bundle(output: &DatasetBundle, input: &DatasetBundle) -> ValidationReport {
    let donors = DonorIndex::new(&input.paths, &input.instructions);
    let cross: BTreeMap<String, CrossScene> = output
        .cross_scenes()
        .into_iter()
        .map(|c| (c.meta.scene_id.clone(), c))
        .collect();
    let mut report = ValidationReport {
        items: output.instructions.len(),
        cross_scenes: cross.len(),
        ..Default::default()
    };
    let mut add = |rule: &str, msg: String| {
        report
            .violations
            .entry(rule.to_string())
            .or_default()
            .push(msg)
    };
    for c in cross.values() {
        let [a, b] = &c.meta.sources;
        match (input.scenes.get(a), input.scenes.get(b)) {
            (Some(g1), Some(g2)) => {
                if !cross_structure(c, g1, g2).surgery_ok() {
                    add(
                        "cross_structure",
                        format!(
                            "{}: surgery counts or edges do not match sources",
                            c.meta.scene_id
                        ),
                    );
                }
            }
            _ => add(
                "cross_structure",
                format!("{}: source scenes missing", c.meta.scene_id),
            ),
        }
    }
    for t in output.triplets() {
        let Some(c) = cross.get(&t.cross_scene_id) else {
            add(
                "mixup_sidecar",
                format!("{}: no mixup record", t.cross_scene_id),
            );
            continue;
        };
        let id = format!(
            "{}/{}",
            t.provenance.head_instruction, t.provenance.tail_instruction
        );
        for v in validate_triplet(&t, c, &donors) {
            add(v.rule(), format!("{} [{id}]: {v}", t.cross_scene_id));
        }
    }
    let untracked = output.instructions.len() - output.triplets().len();
    if untracked > 0 {
        add(
            "provenance",
            format!("{untracked} instructions lack junction or provenance"),
        );
    }
    report.disconnected_scenes = cross.values().filter(|c| !c.graph.is_connected()).count();
    report
}

/// Whole-tree byte digest, for determinism checks.
pub fn tree_digest(dir: &Path) -> Result<String, DatasetError> {
    let files = digest_tree(dir)?;
    Ok(hex::encode(Sha256::digest(to_json_bytes(&files))))
}
