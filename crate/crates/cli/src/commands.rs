use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use defence::fenceseg::training::{train_detector, TrainingImage};
use defence::fenceseg::{
    segment_fence, HandcraftedFeatures, Label, LinearClassifier, Segmentation,
};
use defence::fusion::defence_pipeline;
use defence::imgcore::io::{load_flo, load_image, load_mask, save_flo, save_image, save_mask};
use defence::occflow::estimate_flow;
use defence::synthbench::io::{read_joints_csv, read_manifest, write_joints_csv, write_scene};
use defence::synthbench::{
    detection_fmeasure, endpoint_error, mask_fmeasure, psnr, render_scene, LatticeSpec, Motion,
    SceneSpec, Texture,
};
use defence::{BinaryMask, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{PipelineConfig, TrainingConfig};
use crate::{EvalCommand, FlowArgs, Outcome, RunArgs, SegmentArgs, SynthArgs, TrainArgs};

fn read_image(path: &Path) -> Result<Image<f64>> {
    load_image(path).with_context(|| format!("reading {}", path.display()))
}

fn read_mask(path: &Path) -> Result<BinaryMask> {
    load_mask(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(cfg: &PipelineConfig, flag: Option<&PathBuf>) -> Result<LinearClassifier<f64>> {
    let path = flag
        .cloned()
        .or_else(|| cfg.io.model.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            anyhow!(
                "no detector model; pass --model or set io.model (see `defence train-classifier`)"
            )
        })?;
    LinearClassifier::load(&path).with_context(|| format!("loading model {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "frame".into(), |s| s.to_string_lossy().into_owned())
}

fn trimap_image(seg: &Segmentation<f64>) -> Image<f64> {
    let fg = seg.trimap.mask_of(Label::Foreground);
    let bg = seg.trimap.mask_of(Label::Background);
    let (w, h) = fg.dims();
    Image::from_fn(w, h, |x, y| {
        if fg.get(x, y) {
            1.0
        } else if bg.get(x, y) {
            0.0
        } else {
            0.5
        }
    })
}

fn write_segmentation(
    dir: &Path,
    name: &str,
    seg: &Segmentation<f64>,
    intermediates: bool,
) -> Result<()> {
    save_mask(&seg.mask, dir.join(format!("{name}_mask.png")))?;
    if intermediates {
        save_mask(&seg.prelim, dir.join(format!("{name}_prelim.png")))?;
        save_image(&trimap_image(seg), dir.join(format!("{name}_trimap.png")))?;
        if let Some(alpha) = &seg.alpha {
            save_image(alpha, dir.join(format!("{name}_alpha.png")))?;
        }
        let dets: Vec<_> = seg.detections.iter().map(|d| (d.x, d.y)).collect();
        write_joints_csv(dir.join(format!("{name}_detections.csv")), &dets)?;
    }
    Ok(())
}

pub fn segment(cfg: &PipelineConfig, args: &SegmentArgs) -> Result<Outcome> {
    let clf = load_model(cfg, args.model.as_ref())?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut any = false;
    for path in &args.frames {
        let img = read_image(path)?;
        let seg = segment_fence(&img, &clf, &HandcraftedFeatures, &cfg.segment)?;
        log::info!(
            "{}: {} fence pixels ({:?})",
            path.display(),
            seg.mask.count(),
            seg.status
        );
        any |= !seg.mask.is_clear();
        write_segmentation(&args.out_dir, &stem(path), &seg, args.keep_intermediates)?;
    }
    if !any {
        log::warn!("no fence pixels found in any frame");
        return Ok(Outcome::EmptyMask);
    }
    Ok(Outcome::Done)
}

pub fn flow(cfg: &PipelineConfig, args: &FlowArgs) -> Result<Outcome> {
    let reference = read_image(&args.reference)?;
    let frame = read_image(&args.frame)?;
    let (w, h) = reference.dims();
    let mask = |p: &Option<PathBuf>| {
        p.as_deref()
            .map_or_else(|| Ok(BinaryMask::new(w, h)), read_mask)
    };
    let est = estimate_flow(
        &frame,
        &reference,
        &mask(&args.frame_mask)?,
        &mask(&args.reference_mask)?,
        &cfg.flow,
    )?;
    if est.low_confidence {
        log::warn!("frames carry too little texture for a reliable flow");
    }
    if !est.converged {
        log::info!("some CG solves stopped at flow.cg_iters before reaching flow.cg_tol");
    }
    save_flo(&est.flow, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(Outcome::Done)
}

pub fn run(cfg: &PipelineConfig, args: &RunArgs) -> Result<Outcome> {
    let out = args
        .out
        .clone()
        .or_else(|| cfg.io.output.as_ref().map(PathBuf::from))
        .ok_or_else(|| anyhow!("no output path; pass --out or set io.output"))?;
    let frames = args
        .frames
        .iter()
        .map(|p| read_image(p))
        .collect::<Result<Vec<_>>>()?;
    let reference = match args.reference {
        Some(r) => PipelineConfig {
            reference: Some(r),
            ..cfg.clone()
        }
        .reference_for(frames.len())?,
        None => cfg.reference_for(frames.len())?,
    };
    let keep = args.keep_intermediates.as_ref().map(|dir| {
        dir.clone()
            .or_else(|| cfg.io.intermediates.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| out.with_file_name(format!("{}_intermediates", stem(&out))))
    });
    if let Some(dir) = &keep {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    }

    let masks = if args.masks.is_empty() {
        let clf = load_model(cfg, args.model.as_ref())?;
        let mut masks = Vec::with_capacity(frames.len());
        for (m, (img, path)) in frames.iter().zip(&args.frames).enumerate() {
            let seg = segment_fence(img, &clf, &HandcraftedFeatures, &cfg.segment)?;
            log::info!(
                "frame {m}: {} fence pixels ({:?})",
                seg.mask.count(),
                seg.status
            );
            if let Some(dir) = &keep {
                write_segmentation(dir, &format!("{m}_{}", stem(path)), &seg, true)?;
            }
            masks.push(seg.mask);
        }
        masks
    } else {
        if args.masks.len() != frames.len() {
            bail!("{} masks for {} frames", args.masks.len(), frames.len());
        }
        args.masks
            .iter()
            .map(|p| read_mask(p))
            .collect::<Result<Vec<_>>>()?
    };

    let result = defence_pipeline(&frames, &masks, reference, &cfg.flow, &cfg.fista, None)?;
    if let Some(dir) = &keep {
        for (m, f) in result.flows.iter().enumerate() {
            save_flo(f, dir.join(format!("flow_{m}.flo")))?;
        }
    }
    save_image(&result.image, &out).with_context(|| format!("writing {}", out.display()))?;
    log::info!(
        "wrote {} after {:?} iterations",
        out.display(),
        result.iterations
    );

    if !result.flow_converged {
        log::info!("some flow CG solves stopped at flow.cg_iters before reaching flow.cg_tol");
    }
    if masks.iter().all(BinaryMask::is_clear) {
        log::warn!("no fence pixels in any frame; the reference frame was written unchanged");
        return Ok(Outcome::EmptyMask);
    }
    if !result.converged {
        log::warn!("reconstruction stopped at the iteration cap before converging");
        return Ok(Outcome::NotConverged);
    }
    Ok(Outcome::Done)
}

fn parse_motion(s: &str) -> Result<Motion> {
    let parts: Vec<_> = s.split(',').map(str::trim).collect();
    match parts[..] {
        [x, y] => Ok(Motion::translation(
            x.parse().with_context(|| format!("motion {s:?}"))?,
            y.parse().with_context(|| format!("motion {s:?}"))?,
        )),
        _ => bail!("motion {s:?} is not `x,y`"),
    }
}

pub fn synth(args: &SynthArgs) -> Result<Outcome> {
    let spec = match &args.spec {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("malformed scene {}", path.display()))?
        }
        None => {
            let motions = if args.motions.is_empty() {
                vec![
                    Motion::translation(-4.0, 3.0),
                    Motion::default(),
                    Motion::translation(3.0, -4.0),
                ]
            } else {
                args.motions
                    .iter()
                    .map(|m| parse_motion(m))
                    .collect::<Result<_>>()?
            };
            SceneSpec {
                width: args.width,
                height: args.height,
                lattice: LatticeSpec {
                    spacing: args.spacing,
                    angle_deg: args.angle,
                    ..LatticeSpec::default()
                },
                motions,
                noise_sigma: args.noise,
                seed: args.seed,
                ..SceneSpec::default()
            }
        }
    };
    let (frames, gt) = render_scene(&spec)?;
    write_scene(&args.out, &spec, &frames, &gt)
        .with_context(|| format!("writing {}", args.out.display()))?;
    // flows in the convention `flow` and `run` produce, towards the middle
    // frame, and the frames without fence or noise
    let r = frames.len() / 2;
    for m in 0..frames.len() {
        save_flo(
            &gt.relative_flow(m, r),
            args.out.join(format!("ref_flow_{m}.flo")),
        )?;
        save_image(&gt.clean[m], args.out.join(format!("clean_{m}.png")))?;
    }
    log::info!("wrote {} frames to {}", frames.len(), args.out.display());
    Ok(Outcome::Done)
}

fn emit(out: &Option<PathBuf>, value: serde_json::Value) -> Result<Outcome> {
    let text = serde_json::to_string_pretty(&value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(Outcome::Done)
}

pub fn eval(cmd: &EvalCommand) -> Result<Outcome> {
    match cmd {
        EvalCommand::Detection {
            pred,
            gt,
            radius,
            out,
        } => {
            let prf = detection_fmeasure(&read_joints_csv(pred)?, &read_joints_csv(gt)?, *radius)?;
            emit(
                out,
                json!({"precision": prf.precision, "recall": prf.recall, "f": prf.f}),
            )
        }
        EvalCommand::Mask { pred, gt, out } => {
            let prf = mask_fmeasure(&read_mask(pred)?, &read_mask(gt)?)?;
            emit(
                out,
                json!({"precision": prf.precision, "recall": prf.recall, "f": prf.f}),
            )
        }
        EvalCommand::Flow {
            pred,
            gt,
            exclude,
            out,
        } => {
            let p = load_flo::<f64>(pred).with_context(|| format!("reading {}", pred.display()))?;
            let g = load_flo::<f64>(gt).with_context(|| format!("reading {}", gt.display()))?;
            let ex = exclude.as_deref().map(read_mask).transpose()?;
            emit(out, json!({"epe": endpoint_error(&p, &g, ex.as_ref())?}))
        }
        EvalCommand::Psnr {
            pred,
            gt,
            region,
            out,
        } => {
            let region = region.as_deref().map(read_mask).transpose()?;
            let db = psnr(&read_image(pred)?, &read_image(gt)?, region.as_ref())?;
            // JSON has no infinity
            let value = if db.is_finite() {
                json!(db)
            } else {
                json!("inf")
            };
            emit(out, json!({ "psnr_db": value }))
        }
    }
}

/// Scenes spanning lattice spacings 30 to 60 px at random angles in
/// [0°, 30°), every third on a checkerboard.
pub fn training_specs(t: &TrainingConfig) -> Vec<SceneSpec> {
    let n = t.synthetic_scenes;
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(t.scene_seed + i as u64);
            let spacing = 30.0 + 30.0 * i as f64 / (n.max(2) - 1) as f64;
            let texture = if i % 3 == 2 {
                Texture::CheckerGradient { square: 7 + i }
            } else {
                Texture::default()
            };
            SceneSpec {
                texture,
                lattice: LatticeSpec {
                    spacing,
                    angle_deg: rng.random_range(0.0..30.0),
                    origin: [
                        rng.random_range(0.0..spacing),
                        rng.random_range(0.0..spacing),
                    ],
                    ..LatticeSpec::default()
                },
                seed: t.scene_seed + 1000 + i as u64,
                ..SceneSpec::default()
            }
        })
        .collect()
}

struct Labelled {
    image: Image<f64>,
    joints: Vec<(f64, f64)>,
    mask: Option<BinaryMask>,
}

fn scene_examples(dir: &Path) -> Result<Vec<Labelled>> {
    let manifest =
        read_manifest(dir).with_context(|| format!("reading scene {}", dir.display()))?;
    let mut out = Vec::new();
    for (m, frame) in manifest.frames.iter().enumerate() {
        let joints = manifest
            .joints
            .get(m)
            .ok_or_else(|| anyhow!("{}: no joints for frame {m}", dir.display()))?;
        out.push(Labelled {
            image: read_image(&dir.join(frame))?,
            joints: read_joints_csv(dir.join(joints))?,
            mask: manifest
                .masks
                .get(m)
                .map(|p| read_mask(&dir.join(p)))
                .transpose()?,
        });
    }
    Ok(out)
}

pub fn train(cfg: &PipelineConfig, args: &TrainArgs) -> Result<Outcome> {
    let mut examples = Vec::new();
    if args.scenes.is_empty() {
        for spec in training_specs(&cfg.training) {
            let (frames, gt) = render_scene(&spec)?;
            examples.push(Labelled {
                image: frames.into_iter().next().expect("one frame"),
                joints: gt.joints[0].clone(),
                mask: Some(gt.masks[0].clone()),
            });
        }
    } else {
        for dir in &args.scenes {
            examples.extend(scene_examples(dir)?);
        }
    }
    let images: Vec<_> = examples
        .iter()
        .map(|e| TrainingImage {
            image: &e.image,
            joints: &e.joints,
            fence: e.mask.as_ref(),
        })
        .collect();
    log::info!("training on {} images", images.len());
    let clf = train_detector(
        &images,
        &HandcraftedFeatures,
        &cfg.training.sample,
        &cfg.training.fit,
    )?;
    clf.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(Outcome::Done)
}
