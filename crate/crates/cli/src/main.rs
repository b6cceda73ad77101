//! `rem`: command-line front end of the scene mixup pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use rem_core::centrality::betweenness;
use rem_core::dataset_io::{
    import_matterport_connectivity, load_bundle_dir, read_json, save_bundle, save_scene,
    synth_generate_with, DatasetError, SynthConfig, SCENES_DIR,
};
use rem_core::eval_metrics::{aggregate, evaluate, PathMetrics};
use rem_core::key_select::{select_key_edge, DEFAULT_TOP_K};
use rem_core::pipeline::{run_augment, validate_output, AugmentConfig, PipelineError};
use rem_core::scene_mixup::DEFAULT_K_REPLACE;
use rem_core::splice::DEFAULT_CAP_PER_PAIR;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "rem",
    version,
    about = "Random environmental mixup for navigation scene datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle.
    Synth(SynthArgs),
    /// Import a simulator connectivity file as a scene.
    Import(ImportArgs),
    /// Print the key edge of every scene in a bundle.
    Stats(StatsArgs),
    /// Build cross scenes and spliced triplets from a bundle.
    Augment(AugmentArgs),
    /// Check every triplet of an augment output tree.
    Validate(ValidateArgs),
    /// Score predicted paths against a reference bundle.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Overridden by the REM_SEED environment variable.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    scenes: usize,
    #[arg(long, default_value_t = 4)]
    rooms: usize,
    #[arg(long, default_value_t = 5)]
    room_size: usize,
    #[arg(long, default_value_t = 8)]
    feature_dim: usize,
    #[arg(long, default_value_t = 24)]
    paths_per_scene: usize,
    #[arg(long, default_value_t = 3)]
    instructions_per_path: usize,
}

#[derive(Args)]
struct ImportArgs {
    /// Connectivity JSON file.
    #[arg(long)]
    connectivity: PathBuf,
    /// Defaults to the file stem, minus a `_connectivity` suffix.
    #[arg(long)]
    scene_id: Option<String>,
    /// Bundle directory; the scene is written under its `scenes/`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    feature_dim: usize,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    /// Also write every betweenness score to this CSV file.
    #[arg(long)]
    centrality_csv: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overridden by the REM_SEED environment variable.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = DEFAULT_K_REPLACE)]
    k_replace: usize,
    #[arg(long)]
    no_orientation_align: bool,
    #[arg(long)]
    no_view_mix: bool,
    #[arg(long, default_value_t = 1)]
    n_pairs: usize,
    /// Maximum spliced paths per pair; 0 keeps all.
    #[arg(long, default_value_t = DEFAULT_CAP_PER_PAIR)]
    cap_per_pair: usize,
    #[arg(long, default_value_t = 1.0)]
    sample_ratio: f64,
    /// Also write the input dataset combined with the augmented one.
    #[arg(long)]
    merge: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Output tree of `rem augment`.
    #[arg(long)]
    out: PathBuf,
    /// Source bundle; defaults to the input recorded in the manifest.
    #[arg(long)]
    source: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference bundle directory.
    #[arg(long)]
    reference: PathBuf,
    /// JSON map `path_id -> [viewpoint ids]`, or an array of `{path_id, path}`.
    #[arg(long)]
    predictions: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        Failure {
            code: exit_code(&error),
            error,
        }
    }
}

fn dataset_code(e: &DatasetError) -> u8 {
    match e {
        DatasetError::Io { .. } => EXIT_IO,
        DatasetError::BadParams(_) => EXIT_CONFIG,
        DatasetError::Parse { .. } | DatasetError::InvariantViolation { .. } => EXIT_VALIDATION,
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return match p {
                PipelineError::Config(_) => EXIT_CONFIG,
                PipelineError::Dataset { source, .. } => dataset_code(source),
            };
        }
        if let Some(d) = cause.downcast_ref::<DatasetError>() {
            return dataset_code(d);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_OTHER
}

fn config_error(msg: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: anyhow!(msg),
    }
}

/// `REM_SEED`, when set, takes precedence over `--seed`.
fn effective_seed(flag: u64) -> Result<u64, Failure> {
    match std::env::var("REM_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| config_error(format!("REM_SEED must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(flag),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Synth(_) => "synth",
        Command::Import(_) => "import",
        Command::Stats(_) => "stats",
        Command::Augment(_) => "augment",
        Command::Validate(_) => "validate",
        Command::Metrics(_) => "metrics",
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Import(a) => cmd_import(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("rem {name}: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_synth(a: SynthArgs) -> Result<u8, Failure> {
    let cfg = SynthConfig {
        seed: effective_seed(a.seed)?,
        n_scenes: a.scenes,
        rooms_per_scene: a.rooms,
        room_size: a.room_size,
        feature_dim: a.feature_dim,
        paths_per_scene: a.paths_per_scene,
        instructions_per_path: a.instructions_per_path,
        ..SynthConfig::default()
    };
    let bundle = synth_generate_with(&cfg)?;
    save_bundle(&bundle, &a.out)?;
    println!(
        "wrote {} scenes, {} paths, {} instructions to {}",
        bundle.scenes.len(),
        bundle.paths.len(),
        bundle.instructions.len(),
        a.out.display()
    );
    Ok(0)
}

fn cmd_import(a: ImportArgs) -> Result<u8, Failure> {
    let scene_id = match a.scene_id {
        Some(s) => s,
        None => {
            let stem = a
                .connectivity
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| {
                    config_error("cannot derive a scene id from the file name".into())
                })?;
            stem.trim_end_matches("_connectivity").to_string()
        }
    };
    let imported = import_matterport_connectivity(&a.connectivity, &scene_id, a.feature_dim)?;
    let g = &imported.graph;
    save_scene(&a.out.join(SCENES_DIR), g, None)?;
    println!(
        "imported {}: {} viewpoints, {} edges, {} asymmetric pairs dropped, {} components",
        scene_id,
        g.vertex_count(),
        g.edge_count(),
        imported.asymmetric.len(),
        g.component_count()
    );
    Ok(0)
}

fn cmd_stats(a: StatsArgs) -> Result<u8, Failure> {
    let bundle = load_bundle_dir(&a.input)?;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    out.write_record([
        "scene_id",
        "vertices",
        "edges",
        "bridges",
        "key_edge",
        "path_count",
        "vc_rank_s",
        "vc_rank_t",
        "ec_rank",
        "top_k_used",
    ])?;
    let mut scores_csv = match &a.centrality_csv {
        Some(p) => {
            let mut w = csv::Writer::from_path(p)
                .with_context(|| format!("cannot write {}", p.display()))?;
            w.write_record(["scene_id", "kind", "id", "score"])?;
            Some(w)
        }
        None => None,
    };
    for (id, g) in &bundle.scenes {
        let base = [
            id.clone(),
            g.vertex_count().to_string(),
            g.edge_count().to_string(),
            g.bridges().len().to_string(),
        ];
        let rest = match select_key_edge(g, &bundle.paths, a.top_k) {
            Ok(k) => vec![
                k.edge().to_string(),
                k.path_count.to_string(),
                k.vc_rank_s.to_string(),
                k.vc_rank_t.to_string(),
                k.ec_rank.to_string(),
                k.top_k_used.to_string(),
            ],
            Err(e) => {
                log::warn!("{id}: {e}");
                vec![String::new(); 6]
            }
        };
        out.write_record(base.iter().chain(rest.iter()))?;
        if let Some(w) = scores_csv.as_mut() {
            let scores = betweenness(g).map_err(|e| anyhow!("{id}: {e}"))?;
            for (v, s) in &scores.vertex_scores {
                w.write_record([id.as_str(), "vertex", v, &s.to_string()])?;
            }
            for (e, s) in &scores.edge_scores {
                w.write_record([id.as_str(), "edge", &e.to_string(), &s.to_string()])?;
            }
        }
    }
    out.flush()?;
    if let Some(mut w) = scores_csv {
        w.flush()?;
    }
    Ok(0)
}

fn cmd_augment(a: AugmentArgs) -> Result<u8, Failure> {
    let cfg = AugmentConfig {
        seed: effective_seed(a.seed)?,
        top_k: a.top_k,
        k_replace: a.k_replace,
        orientation_align: !a.no_orientation_align,
        view_mix: !a.no_view_mix,
        n_pairs: a.n_pairs,
        cap_per_pair: (a.cap_per_pair > 0).then_some(a.cap_per_pair),
        sample_ratio: a.sample_ratio,
    };
    cfg.check()?;
    let m = run_augment(&a.input, &a.out, &cfg, a.merge)?;
    println!(
        "{} cross scenes, {} paths, {} instructions, {} pairs skipped",
        m.counts.cross_scenes, m.counts.paths, m.counts.instructions, m.counts.skipped_pairs
    );
    for (rule, n) in &m.violations {
        println!("validator: {n} {rule} violations");
    }
    Ok(0)
}

fn cmd_validate(a: ValidateArgs) -> Result<u8, Failure> {
    let report = validate_output(&a.out, a.source.as_deref())?;
    if report.items == 0 {
        println!("0 items");
    }
    for (rule, msgs) in &report.violations {
        println!("{rule}: {} violations", msgs.len());
        for m in msgs {
            println!("  {m}");
        }
    }
    println!(
        "{} items in {} cross scenes, {} violations",
        report.items,
        report.cross_scenes,
        report.violation_count()
    );
    Ok(if report.is_clean() {
        0
    } else {
        EXIT_VALIDATION
    })
}

fn read_predictions(path: &Path) -> Result<BTreeMap<String, Vec<String>>, Failure> {
    let v: serde_json::Value = read_json(path)?;
    let bad = || DatasetError::Parse {
        file: path.display().to_string(),
        message: "expected a map of paths or an array of {path_id, path}".into(),
    };
    let as_path = |x: &serde_json::Value| -> Option<Vec<String>> {
        x.as_array()?
            .iter()
            .map(|s| s.as_str().map(str::to_string))
            .collect()
    };
    let mut out = BTreeMap::new();
    match &v {
        serde_json::Value::Object(m) => {
            for (k, p) in m {
                out.insert(k.clone(), as_path(p).ok_or_else(bad)?);
            }
        }
        serde_json::Value::Array(items) => {
            for it in items {
                let id = it.get("path_id").and_then(|s| s.as_str()).ok_or_else(bad)?;
                let p = it.get("path").and_then(as_path).ok_or_else(bad)?;
                out.insert(id.to_string(), p);
            }
        }
        _ => return Err(bad().into()),
    }
    Ok(out)
}

fn fmt_metrics(m: &PathMetrics) -> [String; 8] {
    [
        m.trajectory_length.to_string(),
        m.nav_error.to_string(),
        u8::from(m.success).to_string(),
        u8::from(m.oracle_success).to_string(),
        m.spl.to_string(),
        m.ndtw.to_string(),
        m.sdtw.to_string(),
        m.cls.to_string(),
    ]
}

fn cmd_metrics(a: MetricsArgs) -> Result<u8, Failure> {
    let reference = load_bundle_dir(&a.reference)?;
    let preds = read_predictions(&a.predictions)?;
    let mut rows = Vec::new();
    for p in &reference.paths {
        let Some(pred) = preds.get(&p.path_id) else {
            log::warn!("no prediction for {}", p.path_id);
            continue;
        };
        let scene = &reference.scenes[&p.scene_id];
        let m = evaluate(&p.vertices, pred, scene).map_err(|e| Failure {
            code: EXIT_VALIDATION,
            error: anyhow!("{}: {e}", p.path_id),
        })?;
        rows.push((p.path_id.clone(), m));
    }
    if let Some(id) = preds
        .keys()
        .find(|k| !reference.paths.iter().any(|p| &p.path_id == *k))
    {
        return Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow!("prediction for unknown path `{id}`"),
        });
    }
    rows.sort_by(|x, y| x.0.cmp(&y.0));
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => {
            Box::new(fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?)
        }
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "path_id",
        "tl",
        "ne",
        "success",
        "oracle_success",
        "spl",
        "ndtw",
        "sdtw",
        "cls",
    ])?;
    for (id, m) in &rows {
        w.write_record(std::iter::once(id.clone()).chain(fmt_metrics(m)))?;
    }
    let metrics: Vec<PathMetrics> = rows.into_iter().map(|(_, m)| m).collect();
    let agg = aggregate(&metrics);
    w.write_record([
        "mean".to_string(),
        agg.trajectory_length.to_string(),
        agg.nav_error.to_string(),
        agg.success_rate.to_string(),
        agg.oracle_success_rate.to_string(),
        agg.spl.to_string(),
        agg.ndtw.to_string(),
        agg.sdtw.to_string(),
        agg.cls.to_string(),
    ])?;
    w.flush()?;
    if metrics.is_empty() {
        return Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow!("no reference path has a prediction"),
        });
    }
    Ok(0)
}
