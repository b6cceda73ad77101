//! Synthetic desk-scale scenes: clusters of rooms joined by single corridor
//! edges, with shortest-path routes and templated, step-aligned instructions.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, DatasetError};
use crate::nav_graph::{
    heading, Edge, Panorama, Point3, Provenance, SceneGraph, Vertex, ViewCell, H_SECTORS,
    PANORAMA_CELLS,
};
use crate::splice::{Chunk, InstructionRecord, PathRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub rooms_per_scene: usize,
    /// Viewpoints per room.
    pub room_size: usize,
    pub feature_dim: usize,
    pub paths_per_scene: usize,
    /// Distinct instruction templates per path, at most 3.
    pub instructions_per_path: usize,
    /// Probability that a route ends in a different room than it starts.
    pub cross_room_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_scenes: 10,
            rooms_per_scene: 4,
            room_size: 5,
            feature_dim: 8,
            paths_per_scene: 24,
            instructions_per_path: 3,
            cross_room_fraction: 0.9,
        }
    }
}

const ROOM_SPACING_M: f64 = 9.0;
const ROOM_HALF_WIDTH_M: f64 = 2.5;
const EXTRA_EDGE_PROB: f64 = 0.3;

pub fn synth_generate(
    seed: u64,
    n_scenes: usize,
    rooms_per_scene: usize,
    room_size: usize,
) -> Result<DatasetBundle, DatasetError> {
    synth_generate_with(&SynthConfig {
        seed,
        n_scenes,
        rooms_per_scene,
        room_size,
        ..SynthConfig::default()
    })
}

pub fn synth_generate_with(cfg: &SynthConfig) -> Result<DatasetBundle, DatasetError> {
    let bad = |m: &str| Err(DatasetError::BadParams(m.to_string()));
    if cfg.n_scenes == 0 {
        return bad("n_scenes must be at least 1");
    }
    if cfg.rooms_per_scene < 2 {
        return bad("rooms_per_scene must be at least 2 so a corridor bridge exists");
    }
    if cfg.room_size < 3 {
        return bad("room_size must be at least 3 so rooms have no internal bridges");
    }
    if cfg.feature_dim == 0 || cfg.paths_per_scene == 0 {
        return bad("feature_dim and paths_per_scene must be positive");
    }
    if !(1..=TEMPLATES.len()).contains(&cfg.instructions_per_path) {
        return bad("instructions_per_path must be between 1 and 3");
    }
    if !(0.0..=1.0).contains(&cfg.cross_room_fraction) {
        return bad("cross_room_fraction must lie in [0, 1]");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bundle = DatasetBundle::default();
    for s in 0..cfg.n_scenes {
        let scene_id = format!("scene{s:03}");
        let layout = Layout::generate(&mut rng, cfg);
        let g = layout.to_graph(&scene_id, cfg.feature_dim, &mut rng);
        for j in 0..cfg.paths_per_scene {
            let route = layout.route(&mut rng, cfg.cross_room_fraction);
            let path = PathRecord {
                path_id: format!("{scene_id}_{j:03}"),
                scene_id: scene_id.clone(),
                vertices: route.iter().map(|&v| layout.ids[v].clone()).collect(),
            };
            for (index, template) in TEMPLATES.iter().enumerate().take(cfg.instructions_per_path) {
                let (tokens, chunks) = layout.describe(&route, template);
                bundle.instructions.push(InstructionRecord {
                    path_id: path.path_id.clone(),
                    index,
                    tokens,
                    chunks,
                });
            }
            bundle.paths.push(path);
        }
        bundle.scenes.insert(scene_id, g);
    }
    bundle.validate()?;
    Ok(bundle)
}

struct Layout {
    ids: Vec<String>,
    positions: Vec<Point3>,
    room_of: Vec<usize>,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    rooms: Vec<Vec<usize>>,
}

impl Layout {
    fn generate(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Self {
        let (n_rooms, size) = (cfg.rooms_per_scene, cfg.room_size);
        let mut centers: Vec<[f64; 2]> = vec![[0.0, 0.0]];
        let mut parents = vec![0];
        for r in 1..n_rooms {
            let parent = rng.random_range(0..r);
            let theta: f64 = rng.random_range(0.0..2.0 * PI);
            let c = centers[parent];
            centers.push([
                c[0] + ROOM_SPACING_M * theta.cos(),
                c[1] + ROOM_SPACING_M * theta.sin(),
            ]);
            parents.push(parent);
        }

        let mut l = Layout {
            ids: Vec::new(),
            positions: Vec::new(),
            room_of: Vec::new(),
            edges: Vec::new(),
            adj: Vec::new(),
            rooms: vec![Vec::new(); n_rooms],
        };
        for (r, c) in centers.iter().enumerate() {
            for k in 0..size {
                l.rooms[r].push(l.ids.len());
                l.ids.push(format!("r{r}v{k}"));
                l.room_of.push(r);
                l.positions.push([
                    c[0] + rng.random_range(-ROOM_HALF_WIDTH_M..ROOM_HALF_WIDTH_M),
                    c[1] + rng.random_range(-ROOM_HALF_WIDTH_M..ROOM_HALF_WIDTH_M),
                    0.0,
                ]);
            }
        }
        for room in &l.rooms {
            // A cycle keeps the room 2-edge-connected; chords add density.
            for i in 0..size {
                l.edges.push((room[i], room[(i + 1) % size]));
            }
            for i in 0..size {
                for j in (i + 2)..size {
                    if (i, j) != (0, size - 1) && rng.random_bool(EXTRA_EDGE_PROB) {
                        l.edges.push((room[i], room[j]));
                    }
                }
            }
        }
        for (r, &parent) in parents.iter().enumerate().skip(1) {
            let a = *l.rooms[r].choose(rng).expect("room is nonempty");
            let b = *l.rooms[parent].choose(rng).expect("room is nonempty");
            l.edges.push((a, b));
        }
        l.adj = vec![Vec::new(); l.ids.len()];
        for &(a, b) in &l.edges {
            l.adj[a].push(b);
            l.adj[b].push(a);
        }
        for n in &mut l.adj {
            n.sort_unstable();
        }
        l
    }

    fn to_graph(&self, scene_id: &str, dim: usize, rng: &mut ChaCha8Rng) -> SceneGraph {
        let vertices = self
            .ids
            .iter()
            .zip(&self.positions)
            .map(|(id, p)| Vertex::new(id.clone(), *p))
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| Edge::new(self.ids[a].clone(), self.ids[b].clone()))
            .collect();
        let panoramas: BTreeMap<String, Panorama> = self
            .ids
            .iter()
            .map(|id| (id.clone(), random_panorama(scene_id, id, dim, rng)))
            .collect();
        SceneGraph::new(scene_id, vertices, edges, panoramas)
            .expect("synthetic scene is well formed")
    }

    /// Hop-shortest route between a random start and goal.
    fn route(&self, rng: &mut ChaCha8Rng, cross_room_fraction: f64) -> Vec<usize> {
        let n = self.ids.len();
        let start = rng.random_range(0..n);
        let here = self.room_of[start];
        let goals: Vec<usize> = if rng.random_bool(cross_room_fraction) {
            (0..n).filter(|&v| self.room_of[v] != here).collect()
        } else {
            self.rooms[here]
                .iter()
                .copied()
                .filter(|&v| v != start)
                .collect()
        };
        let goal = *goals
            .choose(rng)
            .expect("at least two rooms of at least three viewpoints");
        self.shortest(start, goal)
    }

    fn shortest(&self, start: usize, goal: usize) -> Vec<usize> {
        let mut parent = vec![usize::MAX; self.ids.len()];
        parent[start] = start;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            if u == goal {
                break;
            }
            for &w in &self.adj[u] {
                if parent[w] == usize::MAX {
                    parent[w] = u;
                    q.push_back(w);
                }
            }
        }
        let mut path = vec![goal];
        while *path.last().unwrap() != start {
            path.push(parent[*path.last().unwrap()]);
        }
        path.reverse();
        path
    }

    /// One chunk per step; the chunk of step `i` spans viewpoints `[i, i+1]`.
    fn describe(&self, route: &[usize], t: &Template) -> (Vec<String>, Vec<Chunk>) {
        let mut tokens: Vec<String> = Vec::new();
        let mut chunks = Vec::new();
        let mut prev = None;
        let last_step = route.len() - 2;
        for (i, w) in route.windows(2).enumerate() {
            let start = tokens.len();
            let h = heading(self.positions[w[0]], self.positions[w[1]]).ok();
            let turn = match (prev, h) {
                (Some(p), Some(h)) => signed_turn_deg(p, h.radians()),
                _ => 0.0,
            };
            let phrase = if turn.abs() <= 30.0 {
                t.forward
            } else if turn.abs() > 150.0 {
                t.around
            } else if turn > 0.0 {
                t.right
            } else {
                t.left
            };
            tokens.extend(phrase.iter().map(|s| s.to_string()));
            if self.room_of[w[0]] != self.room_of[w[1]] {
                tokens.extend(t.corridor.iter().map(|s| s.to_string()));
            }
            if i == last_step {
                tokens.extend(t.stop.iter().map(|s| s.to_string()));
            }
            chunks.push(Chunk {
                token_span: [start, tokens.len()],
                path_span: [i, i + 1],
            });
            prev = h.map(|h| h.radians()).or(prev);
        }
        (tokens, chunks)
    }
}

/// Clockwise-positive turn from heading `from` to heading `to`, in (-180, 180].
fn signed_turn_deg(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(2.0 * PI);
    let d = if d > PI { d - 2.0 * PI } else { d };
    d.to_degrees()
}

fn random_panorama(scene_id: &str, vp: &str, dim: usize, rng: &mut ChaCha8Rng) -> Panorama {
    let cells = (0..PANORAMA_CELLS)
        .map(|i| {
            let mut f: Vec<f32> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = f
                .iter()
                .map(|x| x * x)
                .sum::<f32>()
                .sqrt()
                .max(f32::MIN_POSITIVE);
            f.iter_mut().for_each(|x| *x /= norm);
            ViewCell {
                feature: f,
                provenance: Provenance {
                    scene_id: scene_id.to_string(),
                    viewpoint_id: vp.to_string(),
                    h: (i % H_SECTORS) as u8,
                    v: (i / H_SECTORS) as u8,
                },
            }
        })
        .collect();
    Panorama::new(dim, cells).expect("36 cells of the declared dimension")
}

struct Template {
    forward: &'static [&'static str],
    left: &'static [&'static str],
    right: &'static [&'static str],
    around: &'static [&'static str],
    corridor: &'static [&'static str],
    stop: &'static [&'static str],
}

const TEMPLATES: [Template; 3] = [
    Template {
        forward: &["go", "forward"],
        left: &["turn", "left"],
        right: &["turn", "right"],
        around: &["turn", "around"],
        corridor: &["through", "the", "corridor"],
        stop: &["and", "stop"],
    },
    Template {
        forward: &["walk", "straight", "ahead"],
        left: &["bear", "left"],
        right: &["bear", "right"],
        around: &["double", "back"],
        corridor: &["down", "the", "hallway"],
        stop: &["and", "wait", "there"],
    },
    Template {
        forward: &["continue", "on"],
        left: &["make", "a", "left"],
        right: &["make", "a", "right"],
        around: &["head", "back"],
        corridor: &["into", "the", "next", "room"],
        stop: &["then", "halt"],
    },
];
