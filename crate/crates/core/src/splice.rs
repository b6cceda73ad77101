//! Splitting supervised paths and their chunk-aligned instructions at a key
//! edge, and recombining halves from two scenes over a cross edge.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::key_select::KeyEdge;
use crate::nav_graph::Edge;
use crate::scene_mixup::{namespaced, CrossScene};

pub const DEFAULT_CAP_PER_PAIR: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpliceError {
    #[error("instruction `{instruction}` has misaligned chunks: {reason}")]
    MisalignedChunks { instruction: String, reason: String },
    #[error("junction {0} is not a cross edge")]
    InvalidJunction(Edge),
    #[error("spliced path breaks at step {step}: ({from}, {to}) is not an edge")]
    BrokenPath {
        step: usize,
        from: String,
        to: String,
    },
    #[error("donors must come from the two different source scenes of `{0}`")]
    ForeignDonor(String),
    #[error("scene `{0}` contributes no donors crossing its key edge")]
    NoDonors(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_id: String,
    pub scene_id: String,
    pub vertices: Vec<String>,
}

/// Sub-instruction alignment. `token_span` is half-open; `path_span` is
/// inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub token_span: [usize; 2],
    pub path_span: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub path_id: String,
    /// Position among the instructions written for the same path.
    pub index: usize,
    pub tokens: Vec<String>,
    /// Empty when the instruction has no sub-instruction alignment.
    pub chunks: Vec<Chunk>,
}

impl InstructionRecord {
    pub fn instruction_id(&self) -> String {
        instruction_id(&self.path_id, self.index)
    }

    /// Checks chunk invariants against a path of `path_len` vertices.
    pub fn check_chunks(&self, path_len: usize) -> Result<(), SpliceError> {
        check_chunks(&self.chunks, self.tokens.len(), path_len).map_err(|reason| {
            SpliceError::MisalignedChunks {
                instruction: self.instruction_id(),
                reason,
            }
        })
    }
}

pub fn instruction_id(path_id: &str, index: usize) -> String {
    format!("{path_id}_{index}")
}

/// Token spans must partition `0..n_tokens` in order; path spans must be
/// ordered (both ends non-decreasing), gap-free and cover `0..path_len`.
pub fn check_chunks(chunks: &[Chunk], n_tokens: usize, path_len: usize) -> Result<(), String> {
    if chunks.is_empty() {
        return Ok(());
    }
    let mut next_token = 0;
    for (i, c) in chunks.iter().enumerate() {
        let [t0, t1] = c.token_span;
        let [p0, p1] = c.path_span;
        if t0 != next_token {
            return Err(format!(
                "chunk {i} token span starts at {t0}, expected {next_token}"
            ));
        }
        if t1 <= t0 || t1 > n_tokens {
            return Err(format!(
                "chunk {i} token span [{t0}, {t1}) is empty or out of bounds"
            ));
        }
        if p1 < p0 || p1 >= path_len {
            return Err(format!("chunk {i} path span [{p0}, {p1}] is out of bounds"));
        }
        if i == 0 && p0 != 0 {
            return Err("first chunk must start at vertex 0".into());
        }
        if i > 0 {
            let [q0, q1] = chunks[i - 1].path_span;
            if p0 < q0 || p1 < q1 {
                return Err(format!("chunk {i} path span is out of order"));
            }
            if p0 > q1 + 1 {
                return Err(format!("gap in path coverage before chunk {i}"));
            }
        }
        next_token = t1;
    }
    if next_token != n_tokens {
        return Err(format!("chunks cover {next_token} of {n_tokens} tokens"));
    }
    if chunks.last().unwrap().path_span[1] != path_len - 1 {
        return Err("chunks do not reach the last vertex".into());
    }
    Ok(())
}

/// A path cut at its first key-edge crossing, optionally with one of its
/// instructions split alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDonor {
    pub path_id: String,
    pub scene_id: String,
    /// Ends at the first key-edge endpoint reached.
    pub head: Vec<String>,
    /// Starts at the other endpoint.
    pub tail: Vec<String>,
    /// Index of the last head vertex in the original path.
    pub crossing_index: usize,
    pub instruction_id: Option<String>,
    pub tokens: Vec<String>,
    pub head_chunks: Vec<Chunk>,
    pub tail_chunks: Vec<Chunk>,
}

impl SplitDonor {
    fn token_boundary(&self) -> usize {
        self.head_chunks.last().map_or(0, |c| c.token_span[1])
    }

    pub fn head_tokens(&self) -> &[String] {
        &self.tokens[..self.token_boundary()]
    }

    pub fn tail_tokens(&self) -> &[String] {
        &self.tokens[self.token_boundary()..]
    }

    /// Whether the tail traverses the key edge again.
    pub fn tail_recrosses(&self, key: &Edge) -> bool {
        self.tail.windows(2).any(|w| key.joins(&w[0], &w[1]))
    }
}

pub fn split_at_key_edge(p: &PathRecord, k: &KeyEdge) -> Option<SplitDonor> {
    let key = k.edge();
    let i = p
        .vertices
        .windows(2)
        .position(|w| key.joins(&w[0], &w[1]))?;
    Some(SplitDonor {
        path_id: p.path_id.clone(),
        scene_id: p.scene_id.clone(),
        head: p.vertices[..=i].to_vec(),
        tail: p.vertices[i + 1..].to_vec(),
        crossing_index: i,
        instruction_id: None,
        tokens: Vec::new(),
        head_chunks: Vec::new(),
        tail_chunks: Vec::new(),
    })
}

/// Assigns each chunk of `instr` to the head or tail of `d`.
///
/// Chunks share boundary vertices, so the last head vertex `i` may open a
/// tail chunk: a chunk `[a, b]` goes to the tail when `a >= i` and `b > i`.
/// Every other chunk, including one that straddles the crossing (`a < i < b`),
/// goes to the head.
pub fn split_chunks(instr: &InstructionRecord, d: &SplitDonor) -> Result<SplitDonor, SpliceError> {
    let path_len = d.head.len() + d.tail.len();
    let misaligned = |reason: String| SpliceError::MisalignedChunks {
        instruction: instr.instruction_id(),
        reason,
    };
    if instr.path_id != d.path_id {
        return Err(misaligned(format!("belongs to path `{}`", instr.path_id)));
    }
    if instr.chunks.is_empty() {
        return Err(misaligned("instruction has no chunks".into()));
    }
    instr.check_chunks(path_len)?;
    let i = d.crossing_index;
    let split = instr
        .chunks
        .iter()
        .position(|c| c.path_span[0] >= i && c.path_span[1] > i)
        .unwrap_or(instr.chunks.len());
    let mut out = d.clone();
    out.instruction_id = Some(instr.instruction_id());
    out.tokens = instr.tokens.clone();
    out.head_chunks = instr.chunks[..split].to_vec();
    out.tail_chunks = instr.chunks[split..].to_vec();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletProvenance {
    pub head_path: String,
    pub head_instruction: String,
    pub tail_path: String,
    pub tail_instruction: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedTriplet {
    pub cross_scene_id: String,
    pub vertices: Vec<String>,
    pub tokens: Vec<String>,
    pub chunks: Vec<Chunk>,
    pub junction: Edge,
    pub provenance: TripletProvenance,
}

/// Joins the head of `head` to the tail of `tail` inside `c`.
pub fn cross_splice(
    head: &SplitDonor,
    tail: &SplitDonor,
    c: &CrossScene,
) -> Result<AugmentedTriplet, SpliceError> {
    let meta = &c.meta;
    let sources = &meta.sources;
    let valid_sources = head.scene_id != tail.scene_id
        && sources.contains(&head.scene_id)
        && sources.contains(&tail.scene_id);
    if !valid_sources {
        return Err(SpliceError::ForeignDonor(meta.scene_id.clone()));
    }
    let mut vertices: Vec<String> = head
        .head
        .iter()
        .map(|v| namespaced(&head.scene_id, v))
        .collect();
    let head_len = vertices.len();
    vertices.extend(tail.tail.iter().map(|v| namespaced(&tail.scene_id, v)));

    let junction = Edge::new(vertices[head_len - 1].clone(), vertices[head_len].clone());
    if !meta.cross_edges.contains(&junction) {
        return Err(SpliceError::InvalidJunction(junction));
    }
    for (step, w) in vertices.windows(2).enumerate() {
        if !c.graph.has_edge(&w[0], &w[1]) {
            return Err(SpliceError::BrokenPath {
                step,
                from: w[0].clone(),
                to: w[1].clone(),
            });
        }
    }

    let mut tokens = head.head_tokens().to_vec();
    tokens.extend_from_slice(tail.tail_tokens());

    // Re-index chunks into the spliced path and instruction.
    let last = vertices.len() - 1;
    let mut chunks: Vec<Chunk> = head
        .head_chunks
        .iter()
        .map(|ch| Chunk {
            token_span: ch.token_span,
            path_span: [ch.path_span[0], ch.path_span[1].min(head_len)],
        })
        .collect();
    let token_shift = head.head_tokens().len();
    let tail_token_start = tail.head_tokens().len();
    for ch in &tail.tail_chunks {
        let remap = |p: usize| p + head_len - (tail.crossing_index + 1);
        chunks.push(Chunk {
            token_span: [
                ch.token_span[0] - tail_token_start + token_shift,
                ch.token_span[1] - tail_token_start + token_shift,
            ],
            path_span: [remap(ch.path_span[0]), remap(ch.path_span[1])],
        });
    }
    if let Some(first) = chunks.first_mut() {
        first.path_span[0] = 0;
    }
    if let Some(end) = chunks.last_mut() {
        end.path_span[1] = last;
    }

    Ok(AugmentedTriplet {
        cross_scene_id: meta.scene_id.clone(),
        vertices,
        tokens,
        chunks,
        junction,
        provenance: TripletProvenance {
            head_path: head.path_id.clone(),
            head_instruction: head.instruction_id.clone().unwrap_or_default(),
            tail_path: tail.path_id.clone(),
            tail_instruction: tail.instruction_id.clone().unwrap_or_default(),
        },
    })
}

/// All donors of a scene: one per (crossing path, aligned instruction).
///
/// Paths whose tail crosses the key edge again are skipped, since the key
/// edge no longer exists in a cross scene. Instructions without chunks are
/// skipped.
pub fn collect_donors(
    key: &KeyEdge,
    paths: &[PathRecord],
    instructions: &[InstructionRecord],
) -> Result<Vec<SplitDonor>, SpliceError> {
    let by_path: BTreeMap<&str, Vec<&InstructionRecord>> =
        instructions.iter().fold(BTreeMap::new(), |mut m, ins| {
            m.entry(ins.path_id.as_str()).or_default().push(ins);
            m
        });
    let edge = key.edge();
    let mut out = Vec::new();
    for p in paths.iter().filter(|p| p.scene_id == key.scene_id) {
        let Some(d) = split_at_key_edge(p, key) else {
            continue;
        };
        if d.tail_recrosses(&edge) {
            continue;
        }
        for ins in by_path.get(p.path_id.as_str()).into_iter().flatten() {
            if ins.chunks.is_empty() {
                continue;
            }
            out.push(split_chunks(ins, &d)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpliceConfig {
    /// Maximum distinct paths kept per pair; `None` keeps all.
    pub cap_per_pair: Option<usize>,
    /// Fraction of the (capped) paths kept.
    pub sample_ratio: f64,
    pub seed: u64,
}

impl Default for SpliceConfig {
    fn default() -> Self {
        Self {
            cap_per_pair: Some(DEFAULT_CAP_PER_PAIR),
            sample_ratio: 1.0,
            seed: 0,
        }
    }
}

/// Every valid head x tail combination across both cross edges of `c`,
/// grouped by vertex sequence and deterministically subsampled.
///
/// The result is ordered by vertex sequence, then by instruction provenance.
pub fn generate_pair(
    c: &CrossScene,
    donors_a: &[SplitDonor],
    donors_b: &[SplitDonor],
    cfg: &SpliceConfig,
) -> Result<Vec<AugmentedTriplet>, SpliceError> {
    let [a, b] = &c.meta.sources;
    if donors_a.is_empty() {
        return Err(SpliceError::NoDonors(a.clone()));
    }
    if donors_b.is_empty() {
        return Err(SpliceError::NoDonors(b.clone()));
    }
    let mut by_path: BTreeMap<Vec<String>, BTreeMap<Vec<String>, AugmentedTriplet>> =
        BTreeMap::new();
    for (heads, tails) in [(donors_a, donors_b), (donors_b, donors_a)] {
        for h in heads.iter().filter(|d| !d.head_chunks.is_empty()) {
            for t in tails.iter().filter(|d| !d.tail_chunks.is_empty()) {
                let Ok(trip) = cross_splice(h, t, c) else {
                    continue;
                };
                // Identical token sequences on the same path collapse.
                by_path
                    .entry(trip.vertices.clone())
                    .or_default()
                    .entry(trip.tokens.clone())
                    .or_insert(trip);
            }
        }
    }

    let mut keep: Vec<usize> = (0..by_path.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if let Some(cap) = cfg.cap_per_pair {
        if keep.len() > cap {
            keep = sample(&mut rng, keep.len(), cap).into_vec();
            keep.sort_unstable();
        }
    }
    let ratio = cfg.sample_ratio.clamp(0.0, 1.0);
    if ratio < 1.0 {
        let n = (keep.len() as f64 * ratio).round() as usize;
        let picks = sample(&mut rng, keep.len(), n).into_vec();
        let mut sub: Vec<usize> = picks.into_iter().map(|i| keep[i]).collect();
        sub.sort_unstable();
        keep = sub;
    }

    let mut keep = keep.into_iter().peekable();
    let mut out = Vec::new();
    for (i, (_, group)) in by_path.into_iter().enumerate() {
        if keep.peek() == Some(&i) {
            keep.next();
            out.extend(group.into_values());
        }
    }
    Ok(out)
}
