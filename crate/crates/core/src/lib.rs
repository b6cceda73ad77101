//! Random environmental mixup for discrete navigation scenes.
//!
//! Pairs of scenes are cut at a key edge chosen by betweenness centrality,
//! cross-connected, orientation-aligned and view-mixed; supervised paths and
//! their chunk-aligned instructions are spliced across the junction to
//! produce augmented (environment, path, instruction) triplets.

pub mod centrality;
pub mod dataset_io;
pub mod eval_metrics;
pub mod key_select;
pub mod nav_graph;
pub mod pipeline;
pub mod scene_mixup;
pub mod splice;
