use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mvdepth::augmentation::{
    draw_geometric, flip_sample, photometric_augment, scale_world, spatial_scale_sample,
};
use mvdepth::cost_volume::{build_cost_volume, Frame};
use mvdepth::dataset_io::{
    load_depth_png, load_rgb_png, load_sequence, read_pfm_depth, render_scene, write_depth_png,
    write_pfm_depth, SequenceIndex, SyntheticScene, DEFAULT_ASSOCIATION_TOLERANCE,
    TUM_DEPTH_SCALE,
};
use mvdepth::depthnet::gradcheck::random_problem;
use mvdepth::depthnet::{
    assemble_input, build_network, gradient_check, load_checkpoint, mean_l1_inv, save_checkpoint,
    train_toy, Mode, TrainConfig, TrainSample, WidthScale,
};
use mvdepth::geometry::{sample_inverse_depths, DepthHypotheses, Pose};
use mvdepth::metrics::MetricsAccumulator;
use mvdepth::sequence_mapper::{
    ClassicalEstimator, DepthEstimator, KeyframeRing, NetworkEstimator, SequenceMapper,
};
use mvdepth::{DepthMap, Normalization};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::args::{EstimatorKind, FrameSelection, GradcheckArgs, Resolved, SceneKind, SynthArgs, TrainArgs};

/// Sigmoid output scale used by every network the CLI builds.
const SIGMOID_SCALE: f64 = 2.0;
/// Gradient-check pass threshold on the maximum relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Records the command and its fully resolved configuration.
pub fn write_manifest(cfg: &Resolved, command: &str, details: serde_json::Value) -> Result<()> {
    write_json(
        &cfg.out.join("manifest.json"),
        &json!({
            "tool": "mvdepth",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": cfg,
            "details": details,
        }),
    )
}

fn hypotheses(cfg: &Resolved) -> Result<DepthHypotheses> {
    Ok(sample_inverse_depths(cfg.d_min, cfg.d_max, cfg.n_depth_samples)?)
}

fn open_sequence(dir: &Path) -> Result<SequenceIndex> {
    let index = load_sequence(dir, DEFAULT_ASSOCIATION_TOLERANCE)
        .with_context(|| format!("loading sequence {}", dir.display()))?;
    if index.intrinsics.is_none() {
        bail!("{} has no intrinsics.txt", dir.display());
    }
    Ok(index)
}

fn load_frame(index: &SequenceIndex, i: usize) -> Result<Frame> {
    let entry = index
        .entries
        .get(i)
        .with_context(|| format!("frame {i} requested from a {}-frame sequence", index.len()))?;
    let image = load_rgb_png(&entry.rgb)?;
    let id = entry
        .rgb
        .file_stem()
        .map_or_else(|| format!("{i:06}"), |s| s.to_string_lossy().into_owned());
    let intr = index.intrinsics.expect("checked on open");
    Ok(Frame::new(id, image, entry.pose, intr)?)
}

fn load_selection(sel: &FrameSelection) -> Result<(Frame, Vec<Frame>)> {
    let index = open_sequence(&sel.sequence)?;
    if sel.measurements.contains(&sel.reference) {
        bail!("frame {} cannot be its own measurement", sel.reference);
    }
    let reference = load_frame(&index, sel.reference)?;
    let measurements = sel
        .measurements
        .iter()
        .map(|&i| load_frame(&index, i))
        .collect::<Result<Vec<_>>>()?;
    Ok((reference, measurements))
}

fn estimator(cfg: &Resolved) -> Result<Box<dyn DepthEstimator>> {
    Ok(match cfg.estimator {
        EstimatorKind::Classical => Box::new(ClassicalEstimator::default()),
        EstimatorKind::Network => {
            let path = cfg.checkpoint.as_ref().expect("validated");
            let net = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            if net.n_depth_samples() != cfg.n_depth_samples {
                bail!(
                    "checkpoint expects {} hypotheses but nd is {}",
                    net.n_depth_samples(),
                    cfg.n_depth_samples
                );
            }
            Box::new(NetworkEstimator {
                net,
                normalization: Normalization::identity(3),
            })
        }
    })
}

pub fn volume(cfg: &Resolved, sel: &FrameSelection) -> Result<()> {
    let (reference, measurements) = load_selection(sel)?;
    let hyp = hypotheses(cfg)?;
    let vol = build_cost_volume(&reference, &measurements, &hyp)?;
    let path = cfg.out.join("volume.bin");
    vol.write_dump(&path)?;
    write_manifest(
        cfg,
        "volume",
        json!({
            "sequence": sel.sequence,
            "reference": reference.id,
            "measurements": measurements.iter().map(|m| &m.id).collect::<Vec<_>>(),
            "shape": [vol.depth_count(), vol.height(), vol.width()],
        }),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn depth(cfg: &Resolved, sel: &FrameSelection) -> Result<()> {
    let (reference, measurements) = load_selection(sel)?;
    let est = estimator(cfg)?;
    let map = est.estimate(&reference, &measurements, &hypotheses(cfg)?)?;
    write_pfm_depth(&map, &cfg.out.join("depth.pfm"))?;
    write_depth_png(&map, &cfg.out.join("depth.png"), TUM_DEPTH_SCALE)?;
    write_manifest(
        cfg,
        "depth",
        json!({
            "sequence": sel.sequence,
            "reference": reference.id,
            "measurements": measurements.iter().map(|m| &m.id).collect::<Vec<_>>(),
            "estimator": est.name(),
        }),
    )?;
    println!("wrote {}", cfg.out.join("depth.pfm").display());
    Ok(())
}

pub fn map(cfg: &Resolved, sequence: &Path) -> Result<()> {
    let index = open_sequence(sequence)?;
    let depth_dir = cfg.out.join("depth");
    std::fs::create_dir_all(&depth_dir)?;
    let ring = KeyframeRing::new(cfg.angle_deg, cfg.baseline_m);
    let mut mapper = SequenceMapper::new(ring, hypotheses(cfg)?, estimator(cfg)?);
    let mut outcomes = Vec::with_capacity(index.len());
    for i in 0..index.len() {
        let frame = load_frame(&index, i)?;
        let outcome = mapper.process_frame(&frame)?;
        if let Some(depth) = &outcome.depth {
            write_pfm_depth(depth, &depth_dir.join(format!("{}.pfm", frame.id)))?;
        }
        outcomes.push(outcome);
    }
    write_json(&cfg.out.join("outcomes.json"), &outcomes)?;
    let estimated = outcomes.iter().filter(|o| o.depth.is_some()).count();
    let selected = outcomes.iter().filter(|o| o.selection.selected).count();
    write_manifest(
        cfg,
        "map",
        json!({
            "sequence": sequence,
            "frames": index.len(),
            "selected": selected,
            "estimated": estimated,
            "estimator": mapper.estimator().name(),
        }),
    )?;
    println!("{} frames, {selected} selected, {estimated} depth maps", index.len());
    Ok(())
}

fn read_depth(path: &Path, png_scale: f64) -> Result<DepthMap> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let map = match ext.as_str() {
        "pfm" => read_pfm_depth(path)?,
        "png" => load_depth_png(path, png_scale)?,
        _ => bail!("{}: expected a .pfm or .png depth map", path.display()),
    };
    Ok(map)
}

fn depth_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pfm" | "png")));
    files.sort();
    Ok(files)
}

fn ground_truth_for(pred: &Path, gt_dir: &Path) -> Result<PathBuf> {
    let stem = pred.file_stem().context("prediction without a file name")?;
    ["pfm", "png"]
        .iter()
        .map(|ext| gt_dir.join(stem).with_extension(ext))
        .find(|p| p.exists())
        .with_context(|| format!("no ground truth for {} in {}", pred.display(), gt_dir.display()))
}

pub fn eval(cfg: &Resolved, pred: &Path, gt: &Path, png_scale: f64) -> Result<()> {
    let pairs: Vec<(PathBuf, PathBuf)> = if pred.is_dir() {
        if !gt.is_dir() {
            bail!("{} is a directory but {} is not", pred.display(), gt.display());
        }
        depth_files(pred)?
            .into_iter()
            .map(|p| ground_truth_for(&p, gt).map(|g| (p, g)))
            .collect::<Result<_>>()?
    } else {
        vec![(pred.to_path_buf(), gt.to_path_buf())]
    };
    if pairs.is_empty() {
        bail!("no depth maps in {}", pred.display());
    }
    let mut acc = MetricsAccumulator::default();
    for (p, g) in &pairs {
        let p_map = read_depth(p, png_scale)?;
        let g_map = read_depth(g, png_scale)?;
        acc.add(&p_map, &g_map).with_context(|| format!("scoring {}", p.display()))?;
    }
    let report = acc.finish()?;
    write_json(&cfg.out.join("metrics.json"), &report)?;
    write_manifest(
        cfg,
        "eval",
        json!({ "pred": pred, "gt": gt, "pairs": pairs.len(), "png_scale": png_scale }),
    )?;
    println!("{}", report.to_json());
    Ok(())
}

fn synth_scene(args: &SynthArgs, seed: u64) -> SyntheticScene {
    let intr = SyntheticScene::standard_intrinsics(args.width, args.height);
    let trajectory = SyntheticScene::linear_trajectory(
        args.frames,
        Vector3::zeros(),
        args.axis.unit() * args.step_m,
    );
    match args.scene {
        SceneKind::Desk => SyntheticScene::desk(intr, trajectory, seed),
        SceneKind::Plane => SyntheticScene::fronto_parallel(intr, args.plane_depth, trajectory, seed),
        SceneKind::Tilted => SyntheticScene::tilted(
            intr,
            Vector3::new(0.0, 0.0, args.plane_depth),
            Vector3::new(0.2, 0.3, 1.0),
            trajectory,
            seed,
        ),
        SceneKind::Repetitive => SyntheticScene::repetitive(intr, args.plane_depth, 8, trajectory),
    }
}

pub fn synth(cfg: &Resolved, args: &SynthArgs) -> Result<()> {
    if args.frames == 0 || args.width == 0 || args.height == 0 {
        bail!("frames, width and height must be positive");
    }
    if !(args.rate_hz > 0.0 && args.plane_depth > 0.0) {
        bail!("rate-hz and plane-depth must be positive");
    }
    let scene = synth_scene(args, cfg.seed);
    mvdepth::dataset_io::synthetic::write_tum_sequence(&scene, &cfg.out, args.rate_hz)?;
    write_manifest(cfg, "synth", serde_json::to_value(args)?)?;
    println!("wrote {} frames to {}", args.frames, cfg.out.display());
    Ok(())
}

/// One rendered reference/measurement pair with a random layout.
fn training_pair(args: &TrainArgs, rng: &mut ChaCha8Rng) -> SyntheticScene {
    let intr = SyntheticScene::standard_intrinsics(args.width, args.height);
    let dx = rng.random_range(0.05..0.2) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let trajectory = vec![Pose::identity(), Pose::from_translation(Vector3::new(dx, 0.0, 0.0))];
    let seed = rng.random();
    match rng.random_range(0..3) {
        0 => SyntheticScene::fronto_parallel(intr, rng.random_range(0.8..5.0), trajectory, seed),
        1 => {
            let normal = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0);
            let point = Vector3::new(0.0, 0.0, rng.random_range(1.0..4.0));
            SyntheticScene::tilted(intr, point, normal, trajectory, seed)
        }
        _ => SyntheticScene::desk(intr, trajectory, seed),
    }
}

fn training_sample(
    cfg: &Resolved,
    args: &TrainArgs,
    hyp: &DepthHypotheses,
    rng: &mut ChaCha8Rng,
) -> Result<TrainSample> {
    let scene = training_pair(args, rng);
    let (mut reference, mut gt) = render_scene(&scene, 0)?;
    let (mut measurement, _) = render_scene(&scene, 1)?;
    if !args.augment {
        let vol = build_cost_volume(&reference, &[measurement], hyp)?;
        return Ok(TrainSample::new(assemble_input(&[(&reference.image, &vol)])?, &gt)?);
    }
    let draw = draw_geometric(&cfg.augmentation, rng);
    let (frames, scaled_gt) = scale_world(&[reference, measurement], &gt, draw.world_scale)?;
    [reference, measurement] = frames.try_into().expect("two frames");
    gt = scaled_gt;
    let photo = rng.random::<u64>();
    reference = reference.with_image(photometric_augment(&reference.image, &cfg.augmentation, photo))?;
    measurement =
        measurement.with_image(photometric_augment(&measurement.image, &cfg.augmentation, photo ^ 1))?;
    let vol = build_cost_volume(&reference, &[measurement], hyp)?;
    let (vol, image, gt) = match draw.flip {
        Some(axis) => flip_sample(&vol, &reference.image, &gt, axis)?,
        None => (vol, reference.image, gt),
    };
    let (vol, image, gt) = spatial_scale_sample(&vol, &image, &gt, draw.spatial_scale)?;
    Ok(TrainSample::new(assemble_input(&[(&image, &vol)])?, &gt)?)
}

pub fn train(cfg: &Resolved, args: &TrainArgs) -> Result<()> {
    if args.samples == 0 {
        bail!("samples must be at least 1");
    }
    let scale = WidthScale::new(1, args.width_divisor)?;
    let mut net = build_network(cfg.n_depth_samples, scale, SIGMOID_SCALE)?;
    net.initialize(cfg.seed);
    net.check_input_size(args.height, args.width)?;
    let hyp = hypotheses(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = (0..args.samples)
        .map(|_| training_sample(cfg, args, &hyp, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let train_cfg = TrainConfig {
        iterations: args.iterations,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seed: cfg.seed,
        ..Default::default()
    };
    let log = train_toy(&mut net, &data, &train_cfg)?;
    let final_l1 = mean_l1_inv(&net, &data, Mode::Eval)?;
    save_checkpoint(&net, &cfg.out.join("checkpoint.mvdn"))?;
    write_json(&cfg.out.join("training_log.json"), &log)?;
    let first = log.records.first().map_or(f64::NAN, |r| r.loss);
    let last = log.records.last().map_or(f64::NAN, |r| r.loss);
    write_manifest(
        cfg,
        "train-toy",
        json!({
            "args": args,
            "train": train_cfg,
            "parameters": net.parameter_count(),
            "final_l1_inv_eval": final_l1,
        }),
    )?;
    println!("loss {first:.5} -> {last:.5}; eval L1-inv {final_l1:.5}");
    Ok(())
}

pub fn gradcheck(cfg: &Resolved, args: &GradcheckArgs) -> Result<bool> {
    let scale = WidthScale::new(1, args.width_divisor)?;
    let mut net = build_network(cfg.n_depth_samples, scale, SIGMOID_SCALE)?;
    net.initialize(cfg.seed);
    let (input, gt) = random_problem(&net, args.batch, args.size, args.size, cfg.seed)?;
    let report = gradient_check(&net, &input, &gt, args.count, args.step, cfg.seed)?;
    let passed = report.max_rel_error < GRADCHECK_TOLERANCE;
    write_json(&cfg.out.join("gradcheck.json"), &report)?;
    write_manifest(
        cfg,
        "gradcheck",
        json!({ "args": args, "tolerance": GRADCHECK_TOLERANCE, "passed": passed }),
    )?;
    println!(
        "max relative error {:.3e} over {} parameters ({} kink draws replaced): {}",
        report.max_rel_error,
        report.entries.len(),
        report.kink_skips,
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(passed)
}
