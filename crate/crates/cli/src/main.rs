//! `trackforge`: build and inspect video object tracks.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid input or flags,
//! 3 missing flow, 4 missing probability records.

mod failure;
mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use image::RgbImage;
use rayon::prelude::*;
use trackforge::entropy::{evaluate, track_representative, EntropyReport, GroupStat};
use trackforge::flow::{flow_file_name, FlowDir};
use trackforge::io::{
    load_probs, load_proposals, load_tracks, manifest_path, save_tracks, split_videos, write_probs, write_proposals,
    FrameProposals, RunManifest,
};
use trackforge::ranking::{rank_order, rank_tracks};
use trackforge::synth::{generate_scene, plant_probabilities, SceneSpec};
use trackforge::{
    run_pipeline, temporal_nms, BoxRef, BuilderConfig, FlowProvider, LogBase, PipelineConfig, ProbVector,
    SuppressionConfig, Track, ZeroFlow,
};

use failure::*;

/// Environment variable that overrides the seed of `synth`.
const SEED_ENV: &str = "TRACKFORGE_SEED";

#[derive(Parser)]
#[command(name = "trackforge", version, about = "Link per-frame object proposals into ranked video tracks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, filter, rank and suppress tracks from a proposals file.
    Build(BuildArgs),
    /// Mean classifier entropy of the top-ranked track representatives.
    EvalEntropy(EvalArgs),
    /// Draw tracks onto frame images or blank canvases (PPM output).
    Render(RenderArgs),
    /// Generate a synthetic scene: proposals, flow, ground truth, probabilities.
    Synth(SynthArgs),
    /// Temporal NMS on an existing tracks file.
    Nms(NmsArgs),
    /// Re-score and sort an existing tracks file.
    Rank(RankArgs),
}

#[derive(Args, Clone)]
struct BuilderFlags {
    /// IoU a flow-shifted track box must exceed to match a proposal.
    #[arg(long = "iou-thresh", default_value_t = 0.5)]
    iou_thresh: f64,
    /// Initial and maximum time-to-live of a track, in frames.
    #[arg(long, default_value_t = 5)]
    ttl: u32,
    /// Proposals kept per frame, best first.
    #[arg(long = "top-k", default_value_t = 25)]
    top_k: usize,
}

impl BuilderFlags {
    fn config(&self) -> BuilderConfig {
        BuilderConfig {
            theta_tau: self.iou_thresh,
            gamma: self.ttl,
            top_k: self.top_k,
        }
    }
}

#[derive(Args, Clone)]
struct BuildArgs {
    /// Proposal records: `video frame x y w h score` per line.
    proposals: PathBuf,
    /// Output tracks file (JSON lines).
    #[arg(short, long)]
    output: PathBuf,
    /// Directory of `%06d.tflo` flow files, or of one such directory per video.
    #[arg(long = "flow-dir", conflicts_with = "zero_flow")]
    flow_dir: Option<PathBuf>,
    /// Assume no motion anywhere instead of reading flow.
    #[arg(long = "zero-flow")]
    zero_flow: bool,
    #[command(flatten)]
    builder: BuilderFlags,
    /// Shortest track kept, in frames.
    #[arg(long = "min-length", default_value_t = 10)]
    min_length: usize,
    /// Tracks moving less than this many pixels per frame are dropped.
    #[arg(long = "static-thresh", default_value_t = 1.0)]
    static_thresh: f64,
    /// Weight of the mean proposal score against the mean match IoU.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Volume IoU above which the weaker of two tracks is suppressed.
    #[arg(long, default_value_t = 0.5)]
    nms: f64,
    /// Worker threads; videos are processed in parallel.
    #[arg(short, long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Tracks file.
    tracks: PathBuf,
    /// Probability file (`NPROB <N>` header).
    #[arg(long)]
    probs: PathBuf,
    /// Output report (JSON).
    #[arg(short, long)]
    output: PathBuf,
    /// Tracks evaluated per video, best ranked first.
    #[arg(long, default_value_t = 25)]
    top: usize,
    /// Logarithm base: e, 2 or 10.
    #[arg(long = "log-base", default_value = "e")]
    log_base: LogBase,
}

#[derive(Args)]
struct RenderArgs {
    /// Tracks file.
    tracks: PathBuf,
    /// Output directory for `%06d.ppm` images.
    #[arg(short, long = "out-dir")]
    out_dir: PathBuf,
    /// Directory with `%06d.png|jpg|ppm` frames (or one such directory per video).
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Canvas size `WxH` when no frame image is available.
    #[arg(long, value_parser = parse_size)]
    size: Option<(u32, u32)>,
    /// Render frames `0..N` instead of the frames the tracks span.
    #[arg(long = "num-frames")]
    num_frames: Option<u32>,
    /// Only render this video.
    #[arg(long)]
    video: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML).
    scene: PathBuf,
    /// Output directory.
    #[arg(short, long = "out-dir")]
    out_dir: PathBuf,
    /// Seed; takes precedence over TRACKFORGE_SEED and the scene file.
    #[arg(long)]
    seed: Option<u64>,
    /// Classes in the planted probability file.
    #[arg(long, default_value_t = 1000)]
    classes: usize,
}

#[derive(Args)]
struct NmsArgs {
    tracks: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    nms: f64,
}

#[derive(Args)]
struct RankArgs {
    tracks: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: u32 = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: u32 = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("canvas must be at least 1x1".into());
    }
    Ok((w, h))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => build(a),
        Command::EvalEntropy(a) => eval_entropy(a),
        Command::Render(a) => render(a),
        Command::Synth(a) => synth(a),
        Command::Nms(a) => nms(a),
        Command::Rank(a) => rank(a),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_track_file(path: &Path) -> CliResult<Vec<Track<f64>>> {
    load_tracks(path).map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))
}

fn write_manifest(manifest: &RunManifest, path: &Path) -> CliResult {
    manifest.save(path).map_err(Failure::from)
}

/// Groups tracks by video, keeping the order in which videos first appear.
fn by_video(tracks: Vec<Track<f64>>) -> Vec<(String, Vec<Track<f64>>)> {
    let mut groups: Vec<(String, Vec<Track<f64>>)> = Vec::new();
    for t in tracks {
        match groups.iter_mut().find(|(v, _)| *v == t.video) {
            Some((_, g)) => g.push(t),
            None => groups.push((t.video.clone(), vec![t])),
        }
    }
    groups
}

/// Where the flow of `video` lives: `dir/<video>/` when present, else `dir`.
fn video_flow_dir(dir: &Path, video: &str) -> PathBuf {
    let sub = dir.join(video);
    if sub.is_dir() {
        sub
    } else {
        dir.to_path_buf()
    }
}

fn build(a: BuildArgs) -> CliResult {
    let cfg = PipelineConfig {
        builder: a.builder.config(),
        suppression: SuppressionConfig {
            nms_viou: a.nms,
            min_length: a.min_length,
            static_thresh: a.static_thresh,
        },
        lambda: a.lambda,
    };
    cfg.validate()?;
    if a.jobs == 0 {
        return Err(Failure::msg(EXIT_INPUT, "--jobs must be at least 1"));
    }
    let flow_root = match (&a.flow_dir, a.zero_flow) {
        (_, true) => None,
        (Some(dir), false) if dir.is_dir() => Some(dir.clone()),
        (Some(dir), false) => {
            return Err(Failure::msg(
                EXIT_MISSING_FLOW,
                format!("flow directory {} does not exist (pass --zero-flow for static input)", dir.display()),
            ))
        }
        (None, false) => {
            return Err(Failure::msg(EXIT_MISSING_FLOW, "no flow given: pass --flow-dir or --zero-flow"));
        }
    };

    let frames: Vec<FrameProposals<f64>> = load_proposals(&a.proposals, cfg.builder.top_k)
        .map_err(|e| Failure::from(e).context(format!("reading {}", a.proposals.display())))?;
    let videos = split_videos(&frames);

    let run_video = |frames: &[FrameProposals<f64>]| -> CliResult<Vec<Track<f64>>> {
        let video = &frames[0].video_id;
        let flows: Box<dyn FlowProvider<f64>> = match &flow_root {
            Some(root) => Box::new(FlowDir::new(video_flow_dir(root, video))),
            None => Box::new(ZeroFlow),
        };
        run_pipeline(frames, flows.as_ref(), &cfg).map_err(|e| Failure::from(e).context(format!("video {video}")))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    let results: Vec<CliResult<Vec<Track<f64>>>> = pool.install(|| videos.par_iter().map(|v| run_video(v)).collect());
    let mut tracks = Vec::new();
    for r in results {
        tracks.extend(r?);
    }

    save_tracks(&tracks, &a.output)?;
    let mut manifest = RunManifest::new("build");
    manifest.builder = cfg.builder;
    manifest.suppression = cfg.suppression;
    manifest.lambda = cfg.lambda;
    manifest.add_input(&a.proposals)?;
    match &flow_root {
        Some(root) => {
            let dirs: BTreeSet<PathBuf> = videos.iter().map(|v| video_flow_dir(root, &v[0].video_id)).collect();
            for d in dirs {
                manifest.add_input(&d)?;
            }
            manifest = manifest.with_option("flow", "dir");
        }
        None => manifest = manifest.with_option("flow", "zero"),
    }
    write_manifest(&manifest, &manifest_path(&a.output))?;
    eprintln!("{} tracks from {} video(s) -> {}", tracks.len(), videos.len(), a.output.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct EntropyOutput {
    top: usize,
    n_classes: usize,
    report: EntropyReport,
    per_video: BTreeMap<String, GroupStat>,
}

fn eval_entropy(a: EvalArgs) -> CliResult {
    if a.top == 0 {
        return Err(Failure::msg(EXIT_INPUT, "--top must be at least 1"));
    }
    let tracks = load_track_file(&a.tracks)?;
    let table = load_probs::<f64>(&a.probs)
        .map_err(|e| Failure::from(e).context(format!("reading {}", a.probs.display())))?;

    let mut selection: Vec<ProbVector<f64>> = Vec::new();
    let mut missing: Vec<BoxRef> = Vec::new();
    for (video, mut group) in by_video(tracks) {
        group.sort_by(rank_order);
        if group.len() < a.top {
            eprintln!(
                "warning: video {video} has {} track(s), fewer than --top {}; evaluating all of them",
                group.len(),
                a.top
            );
        }
        for t in group.iter().take(a.top) {
            let rep = track_representative(t)
                .ok_or_else(|| Failure::msg(EXIT_INPUT, format!("track {} of {video} has no matched entry", t.id)))?;
            let proposal = rep.proposal.ok_or_else(|| {
                Failure::msg(
                    EXIT_INPUT,
                    format!("track {} of {video}: representative at frame {} has no proposal index", t.id, rep.frame),
                )
            })?;
            let key = BoxRef::new(video.clone(), rep.frame, proposal);
            match table.get(&key) {
                Some(p) => selection.push(p.clone()),
                None => missing.push(key),
            }
        }
    }
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(5).map(|k| k.to_string()).collect();
        return Err(Failure::msg(
            EXIT_MISSING_PROBS,
            format!(
                "{} representative box(es) have no probability record (video/frame/box): {}{}",
                missing.len(),
                shown.join(", "),
                if missing.len() > shown.len() { ", ..." } else { "" }
            ),
        ));
    }
    if selection.is_empty() {
        return Err(Failure::msg(EXIT_INPUT, "tracks file holds no tracks"));
    }

    let report = evaluate(&selection, a.log_base)?;
    let out = EntropyOutput {
        top: a.top,
        n_classes: table.n_classes,
        per_video: report.grouped(|k| k.video.clone()),
        report,
    };
    let mut w = BufWriter::new(File::create(&a.output)?);
    serde_json::to_writer_pretty(&mut w, &out).map_err(|e| Failure::new(EXIT_OTHER, e))?;
    w.write_all(b"\n")?;
    w.flush()?;

    let mut manifest = RunManifest::new("eval-entropy").with_option("top", a.top);
    manifest.log_base = a.log_base;
    manifest.add_input(&a.tracks)?;
    manifest.add_input(&a.probs)?;
    write_manifest(&manifest, &manifest_path(&a.output))?;
    println!("mean entropy {:.6} over {} box(es)", out.report.mean, out.report.count);
    Ok(())
}

fn render(a: RenderArgs) -> CliResult {
    let tracks = load_track_file(&a.tracks)?;
    let mut groups = by_video(tracks);
    if let Some(v) = &a.video {
        groups.retain(|(name, _)| name == v);
        if groups.is_empty() {
            groups.push((v.clone(), Vec::new()));
        }
    }
    if groups.is_empty() {
        groups.push((String::new(), Vec::new()));
    }
    let nested = groups.len() > 1;

    let mut written = 0usize;
    for (video, group) in &groups {
        let out_dir = if nested { a.out_dir.join(video) } else { a.out_dir.clone() };
        fs::create_dir_all(&out_dir)?;
        let frame_dir = a.frames.as_ref().map(|d| video_flow_dir(d, video));

        let mut ranked: Vec<&Track<f64>> = group.iter().collect();
        ranked.sort_by(|x, y| rank_order(x, y));
        let frames: Vec<u32> = match a.num_frames {
            Some(n) => (0..n).collect(),
            None => {
                let last = ranked.iter().filter_map(|t| t.last_frame()).max();
                last.map_or_else(Vec::new, |l| (0..=l).collect())
            }
        };
        let blank = a.size.unwrap_or_else(|| if ranked.is_empty() { (320, 240) } else { render::canvas_size(&ranked) });

        for f in frames {
            let mut img = match frame_dir.as_deref().and_then(|d| render::find_frame_image(d, f)) {
                Some(p) => image::open(&p)
                    .map_err(|e| Failure::new(EXIT_INPUT, e).context(format!("reading {}", p.display())))?
                    .to_rgb8(),
                None => RgbImage::from_pixel(blank.0, blank.1, render::BACKGROUND),
            };
            render::draw_frame(&mut img, &ranked, f);
            render::save_ppm(&img, &out_dir.join(format!("{f:06}.ppm")))?;
            written += 1;
        }
    }

    let mut manifest = RunManifest::new("render");
    if let Some((w, h)) = a.size {
        manifest = manifest.with_option("size", format!("{w}x{h}"));
    }
    if let Some(n) = a.num_frames {
        manifest = manifest.with_option("num_frames", n);
    }
    if let Some(v) = &a.video {
        manifest = manifest.with_option("video", v);
    }
    manifest.add_input(&a.tracks)?;
    if let Some(d) = &a.frames {
        manifest.add_input(d)?;
    }
    write_manifest(&manifest, &a.out_dir.join("manifest.json"))?;
    eprintln!("{written} frame(s) -> {}", a.out_dir.display());
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult {
    let text = fs::read_to_string(&a.scene)?;
    let mut spec = SceneSpec::from_toml(&text)
        .map_err(|e| Failure::new(EXIT_INPUT, e).context(format!("reading {}", a.scene.display())))?;
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|_| Failure::msg(EXIT_INPUT, format!("{SEED_ENV}={s:?} is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    if let Some(seed) = a.seed.or(env_seed) {
        spec.seed = seed;
    }
    if spec.width == 0 || spec.height == 0 || spec.frames == 0 {
        return Err(Failure::msg(EXIT_INPUT, "scene needs a nonzero width, height and frame count"));
    }
    if a.classes < 2 {
        return Err(Failure::msg(EXIT_INPUT, "--classes must be at least 2"));
    }

    let scene = generate_scene::<f64>(&spec);
    fs::create_dir_all(a.out_dir.join("flow"))?;

    let mut w = BufWriter::new(File::create(a.out_dir.join("proposals.txt"))?);
    write_proposals(&scene.frames, &mut w)?;
    w.flush()?;
    for field in scene.flows.iter() {
        let mut w = BufWriter::new(File::create(a.out_dir.join("flow").join(flow_file_name(field.frame_index())))?);
        field.write_to(&mut w)?;
        w.flush()?;
    }
    save_tracks(&scene.ground_truth, &a.out_dir.join("ground_truth.jsonl"))?;
    let probs = plant_probabilities(&scene, a.classes, spec.seed);
    let mut w = BufWriter::new(File::create(a.out_dir.join("probs.txt"))?);
    write_probs(a.classes, &probs, &mut w)?;
    w.flush()?;

    let mut manifest = RunManifest::new("synth")
        .with_option("seed", spec.seed)
        .with_option("classes", a.classes);
    manifest.add_input(&a.scene)?;
    write_manifest(&manifest, &a.out_dir.join("manifest.json"))?;
    eprintln!(
        "scene {} ({} frames, seed {}) -> {}",
        spec.video,
        spec.frames,
        spec.seed,
        a.out_dir.display()
    );
    Ok(())
}

fn nms(a: NmsArgs) -> CliResult {
    let probe = SuppressionConfig {
        nms_viou: a.nms,
        ..SuppressionConfig::default()
    };
    probe.validate().map_err(|e| Failure::msg(EXIT_INPUT, e))?;
    let tracks = load_track_file(&a.tracks)?;
    let kept: Vec<Track<f64>> = by_video(tracks)
        .into_iter()
        .flat_map(|(_, g)| temporal_nms(g, a.nms))
        .collect();
    save_tracks(&kept, &a.output)?;
    let mut manifest = RunManifest::new("nms");
    manifest.suppression.nms_viou = a.nms;
    manifest.add_input(&a.tracks)?;
    write_manifest(&manifest, &manifest_path(&a.output))?;
    eprintln!("{} track(s) kept -> {}", kept.len(), a.output.display());
    Ok(())
}

fn rank(a: RankArgs) -> CliResult {
    if !(0.0..=1.0).contains(&a.lambda) {
        return Err(Failure::msg(EXIT_INPUT, format!("--lambda must lie in [0, 1], got {}", a.lambda)));
    }
    let tracks = load_track_file(&a.tracks)?;
    let ranked: Vec<Track<f64>> = by_video(tracks)
        .into_iter()
        .flat_map(|(_, g)| rank_tracks(g, a.lambda))
        .collect();
    save_tracks(&ranked, &a.output)?;
    let mut manifest = RunManifest::new("rank");
    manifest.lambda = a.lambda;
    manifest.add_input(&a.tracks)?;
    write_manifest(&manifest, &manifest_path(&a.output))?;
    eprintln!("{} track(s) ranked -> {}", ranked.len(), a.output.display());
    Ok(())
}
