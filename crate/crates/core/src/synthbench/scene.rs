use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DefenceError, Result};
use crate::imgcore::{bilinear_taps, gaussian_blur, BinaryMask, FlowField, Image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Texture {
    /// Uniform noise blurred with the given σ, stretched to `[lo, hi]`.
    SmoothNoise { sigma: f64, lo: f64, hi: f64 },
    /// Checkerboard of `square`-pixel cells plus a horizontal ramp.
    CheckerGradient { square: usize },
}

impl Default for Texture {
    fn default() -> Self {
        Texture::SmoothNoise {
            sigma: 2.0,
            lo: 0.05,
            hi: 0.7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSpec {
    pub spacing: f64,
    pub angle_deg: f64,
    pub thickness: f64,
    pub color: [f64; 3],
    /// Position of one lattice joint.
    pub origin: [f64; 2],
    /// Anti-aliased wires with a 1 px alpha falloff instead of opaque ones.
    pub soft_edge: bool,
    /// A disabled lattice renders fence-free frames.
    pub enabled: bool,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec {
            spacing: 40.0,
            angle_deg: 0.0,
            thickness: 3.0,
            color: [0.9, 0.9, 0.9],
            origin: [20.0, 20.0],
            soft_edge: false,
            enabled: true,
        }
    }
}

/// Per-frame background motion. A background point `q` appears in the frame
/// at `linear · q + translation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Motion {
    pub translation: [f64; 2],
    pub linear: [[f64; 2]; 2],
}

impl Default for Motion {
    fn default() -> Self {
        Motion {
            translation: [0.0, 0.0],
            linear: [[1.0, 0.0], [0.0, 1.0]],
        }
    }
}

impl Motion {
    pub fn translation(tx: f64, ty: f64) -> Self {
        Motion {
            translation: [tx, ty],
            ..Motion::default()
        }
    }

    fn forward(&self, q: (f64, f64)) -> (f64, f64) {
        let l = &self.linear;
        (
            l[0][0] * q.0 + l[0][1] * q.1 + self.translation[0],
            l[1][0] * q.0 + l[1][1] * q.1 + self.translation[1],
        )
    }

    fn inverse(&self, p: (f64, f64)) -> Result<(f64, f64)> {
        let l = &self.linear;
        let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
        if det.abs() < 1e-9 {
            return Err(DefenceError::param("motions.linear", "singular matrix"));
        }
        let (x, y) = (p.0 - self.translation[0], p.1 - self.translation[1]);
        Ok((
            (l[1][1] * x - l[0][1] * y) / det,
            (-l[1][0] * x + l[0][0] * y) / det,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub texture: Texture,
    pub lattice: LatticeSpec,
    /// One entry per frame.
    pub motions: Vec<Motion>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 320,
            height: 240,
            channels: 3,
            texture: Texture::default(),
            lattice: LatticeSpec::default(),
            motions: vec![Motion::default()],
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(DefenceError::param(
                "width/height",
                "scene must be at least 2x2",
            ));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(DefenceError::param("channels", "must be 1 or 3"));
        }
        if self.motions.is_empty() {
            return Err(DefenceError::param("motions", "need at least one frame"));
        }
        let l = &self.lattice;
        if l.enabled && (!(l.thickness > 0.0) || !(l.spacing > 2.0 * l.thickness)) {
            return Err(DefenceError::param(
                "lattice.spacing",
                "spacing must exceed twice the thickness",
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(DefenceError::param("noise_sigma", "must be non-negative"));
        }
        for m in &self.motions {
            m.inverse((0.0, 0.0))?;
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.motions.len()
    }
}

/// Everything the renderer knows about a scene.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// The latent background `x` in motion-free coordinates.
    pub background: Image<f64>,
    /// Per-frame fence masks.
    pub masks: Vec<BinaryMask>,
    /// Per-frame flow from the background grid into frame `m`:
    /// `background(q) = clean_m(q + flow_m(q))`.
    pub flows: Vec<FlowField<f64>>,
    /// Per-frame lattice joints (the fence does not move between frames).
    pub joints: Vec<Vec<(f64, f64)>>,
    /// Frames rendered without fence and noise.
    pub clean: Vec<Image<f64>>,
    pub motions: Vec<Motion>,
    pub seed: u64,
}

impl GroundTruth {
    /// Flow on frame `from`'s grid with `clean_from(p) = clean_to(p + f(p))`.
    pub fn relative_flow(&self, from: usize, to: usize) -> FlowField<f64> {
        let (w, h) = self.background.dims();
        let (a, b) = (&self.motions[from], &self.motions[to]);
        FlowField::from_fn(w, h, |x, y| {
            let p = (x as f64, y as f64);
            let q = a.inverse(p).expect("validated motion");
            let r = b.forward(q);
            (r.0 - p.0, r.1 - p.1)
        })
    }
}

struct Canvas {
    img: Image<f64>,
    margin: usize,
}

impl Canvas {
    fn sample(&self, x: f64, y: f64, ch: usize) -> f64 {
        let (sx, sy) = (x + self.margin as f64, y + self.margin as f64);
        let (w, h) = self.img.dims();
        let c = self.img.channels();
        let (sx, sy) = (sx.clamp(0.0, (w - 1) as f64), sy.clamp(0.0, (h - 1) as f64));
        let taps = bilinear_taps(sx, sy, w, h).expect("clamped sample");
        taps.iter()
            .map(|(i, wt)| wt * self.img.data()[i * c + ch])
            .sum()
    }
}

fn texture_canvas(spec: &SceneSpec, margin: usize) -> Image<f64> {
    let (w, h) = (spec.width + 2 * margin, spec.height + 2 * margin);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7e47_u64);
    let planes: Vec<Image<f64>> = (0..spec.channels)
        .map(|ch| match spec.texture {
            Texture::SmoothNoise { sigma, lo, hi } => {
                let noise = Image::from_fn(w, h, |_, _| rng.random::<f64>());
                let s = gaussian_blur(&noise, sigma);
                let (mn, mx) = s
                    .data()
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                        (a.min(*v), b.max(*v))
                    });
                let span = (mx - mn).max(1e-12);
                s.map(|v| lo + (hi - lo) * (v - mn) / span)
            }
            Texture::CheckerGradient { square } => {
                let sq = square.max(1);
                let phase = ch * sq / 3;
                let raw = Image::from_fn(w, h, |x, y| {
                    let cell = ((x + phase) / sq + y / sq) % 2;
                    0.25 + 0.3 * cell as f64 + 0.2 * x as f64 / w as f64
                });
                gaussian_blur(&raw, 1.0)
            }
        })
        .collect();
    Image::from_channels(&planes).expect("texture planes")
}

/// Signed distance (in pixels) from `p` to the nearest wire of the lattice.
fn wire_distance(l: &LatticeSpec, p: (f64, f64)) -> f64 {
    let (s, c) = l.angle_deg.to_radians().sin_cos();
    let (dx, dy) = (p.0 - l.origin[0], p.1 - l.origin[1]);
    let a = dx * c + dy * s;
    let b = -dx * s + dy * c;
    let off = |t: f64| (t - l.spacing * (t / l.spacing).round()).abs();
    off(a).min(off(b))
}

/// Lattice intersections inside the `width`×`height` raster.
pub fn lattice_joints(l: &LatticeSpec, width: usize, height: usize) -> Vec<(f64, f64)> {
    if !l.enabled {
        return Vec::new();
    }
    let (s, c) = l.angle_deg.to_radians().sin_cos();
    let reach = ((width * width + height * height) as f64).sqrt() / l.spacing + 2.0;
    let n = reach.ceil() as i64;
    let mut out = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            let (a, b) = (i as f64 * l.spacing, j as f64 * l.spacing);
            let x = l.origin[0] + a * c - b * s;
            let y = l.origin[1] + a * s + b * c;
            if x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64 {
                out.push((x, y));
            }
        }
    }
    out.sort_by(|p, q| p.1.total_cmp(&q.1).then(p.0.total_cmp(&q.0)));
    out
}

/// Fence coverage per pixel: 1 on the wire, 0 off it, with a 1 px ramp in
/// soft-edge mode.
pub fn lattice_alpha(l: &LatticeSpec, width: usize, height: usize) -> Image<f64> {
    if !l.enabled {
        return Image::new(width, height, 1);
    }
    let half = l.thickness / 2.0;
    Image::from_fn(width, height, |x, y| {
        let d = wire_distance(l, (x as f64, y as f64));
        if l.soft_edge {
            (half + 0.5 - d).clamp(0.0, 1.0)
        } else if d <= half {
            1.0
        } else {
            0.0
        }
    })
}

/// Renders every frame of the scene and its ground truth.
pub fn render_scene(spec: &SceneSpec) -> Result<(Vec<Image<f64>>, GroundTruth)> {
    spec.validate()?;
    let (w, h, nc) = (spec.width, spec.height, spec.channels);

    // margin large enough for every background sample any frame needs
    let mut reach: f64 = 0.0;
    for m in &spec.motions {
        for corner in [
            (0.0, 0.0),
            ((w - 1) as f64, 0.0),
            (0.0, (h - 1) as f64),
            ((w - 1) as f64, (h - 1) as f64),
        ] {
            let q = m.inverse(corner)?;
            reach = reach
                .max((q.0 - corner.0).abs())
                .max((q.1 - corner.1).abs());
        }
    }
    let margin = reach.ceil() as usize + 2;
    let canvas = Canvas {
        img: texture_canvas(spec, margin),
        margin,
    };

    let background = Image::from_channels(
        &(0..nc)
            .map(|ch| Image::from_fn(w, h, |x, y| canvas.sample(x as f64, y as f64, ch)))
            .collect::<Vec<_>>(),
    )?;

    let alpha = lattice_alpha(&spec.lattice, w, h);
    let mask = BinaryMask::from_fn(w, h, |x, y| alpha.at(x, y) >= 0.5);
    let joints = lattice_joints(&spec.lattice, w, h);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0))
        .map_err(|e| DefenceError::param("noise_sigma", e.to_string()))?;

    let mut frames = Vec::new();
    let mut clean = Vec::new();
    let mut flows = Vec::new();
    for (m, motion) in spec.motions.iter().enumerate() {
        let mut clean_m = Image::new(w, h, nc);
        for y in 0..h {
            for x in 0..w {
                let q = motion.inverse((x as f64, y as f64))?;
                for ch in 0..nc {
                    clean_m.set(x, y, ch, canvas.sample(q.0, q.1, ch));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            spec.seed
                .wrapping_mul(0x9e37_79b9)
                .wrapping_add(m as u64 + 1),
        );
        let mut frame = Image::new(w, h, nc);
        for y in 0..h {
            for x in 0..w {
                let a = alpha.at(x, y);
                for ch in 0..nc {
                    let v = a * spec.lattice.color[ch.min(2)] + (1.0 - a) * clean_m.get(x, y, ch);
                    let n = if spec.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    frame.set(x, y, ch, (v + n).clamp(0.0, 1.0));
                }
            }
        }
        flows.push(FlowField::from_fn(w, h, |x, y| {
            let q = (x as f64, y as f64);
            let p = motion.forward(q);
            (p.0 - q.0, p.1 - q.1)
        }));
        frames.push(frame);
        clean.push(clean_m);
    }

    Ok((
        frames,
        GroundTruth {
            background,
            masks: vec![mask; spec.frames()],
            flows,
            joints: vec![joints; spec.frames()],
            clean,
            motions: spec.motions.clone(),
            seed: spec.seed,
        },
    ))
}
