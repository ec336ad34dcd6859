//! Assembles positive/negative window sets from images with known joints.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DefenceError, Result};
use crate::fenceseg::{
    score_windows, train_classifier, window_fits, FeatureBackend, FeatureVector, LinearClassifier,
    TrainParams,
};
use crate::imgcore::{BinaryMask, Image};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleParams {
    pub window: usize,
    /// Negatives drawn per positive.
    pub negative_ratio: f64,
    /// Negatives are at least this far from every joint.
    pub min_negative_distance: f64,
    /// Spacing of the candidate grid for negatives.
    pub negative_stride: usize,
    /// Share of negatives taken on fence pixels (when a mask is supplied).
    pub on_fence_share: f64,
    pub seed: u64,
    /// Retraining rounds that add false detections on the training images
    /// as negatives.
    pub mining_rounds: usize,
    /// Scan stride used while mining.
    pub mining_stride: usize,
    /// Also train on left-right mirrored copies of every image, so a lattice
    /// at angle θ teaches the detector about −θ as well.
    pub mirror: bool,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            window: 32,
            negative_ratio: 2.0,
            min_negative_distance: 8.0,
            negative_stride: 3,
            on_fence_share: 0.5,
            seed: 0,
            mining_rounds: 2,
            mining_stride: 5,
            mirror: true,
        }
    }
}

/// One annotated training image.
impl SampleParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 4 {
            return Err(DefenceError::param("window", "must be at least 4"));
        }
        if !(self.negative_ratio > 0.0) {
            return Err(DefenceError::param("negative_ratio", "must be positive"));
        }
        if !(self.min_negative_distance >= 0.0) {
            return Err(DefenceError::param(
                "min_negative_distance",
                "must be non-negative",
            ));
        }
        if self.negative_stride == 0 || self.mining_stride == 0 {
            return Err(DefenceError::param(
                "negative_stride/mining_stride",
                "must be at least 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.on_fence_share) {
            return Err(DefenceError::param(
                "on_fence_share",
                format!("{} outside [0, 1]", self.on_fence_share),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
pub struct TrainingImage<'a, T> {
    pub image: &'a Image<T>,
    pub joints: &'a [(f64, f64)],
    pub fence: Option<&'a BinaryMask>,
}

/// Positives at every joint whose window fits; negatives drawn at random from
/// a grid of far-from-joint positions, part of them on fence wires.
pub fn sample_training_set<T: Scalar>(
    images: &[TrainingImage<'_, T>],
    backend: &dyn FeatureBackend<T>,
    params: &SampleParams,
) -> Result<(Vec<FeatureVector<T>>, Vec<FeatureVector<T>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let win = params.window;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for t in images {
        let (w, h) = t.image.dims();
        let mut n_pos = 0usize;
        for &(jx, jy) in t.joints {
            let (cx, cy) = (jx.round(), jy.round());
            if window_fits(cx, cy, w, h, win) {
                pos.push(backend.extract(t.image, cx as usize, cy as usize, win)?);
                n_pos += 1;
            }
        }
        let mut on_fence = Vec::new();
        let mut off_fence = Vec::new();
        let stride = params.negative_stride.max(1);
        for y in (0..h).step_by(stride) {
            for x in (0..w).step_by(stride) {
                if !window_fits(x as f64, y as f64, w, h, win) {
                    continue;
                }
                let far = t.joints.iter().all(|&(jx, jy)| {
                    (jx - x as f64).hypot(jy - y as f64) >= params.min_negative_distance
                });
                if !far {
                    continue;
                }
                if t.fence.is_some_and(|m| m.get(x, y)) {
                    on_fence.push((x, y));
                } else {
                    off_fence.push((x, y));
                }
            }
        }
        on_fence.shuffle(&mut rng);
        off_fence.shuffle(&mut rng);
        let want = (n_pos.max(1) as f64 * params.negative_ratio).round() as usize;
        let n_on = ((want as f64 * params.on_fence_share).round() as usize).min(on_fence.len());
        let n_off = (want - n_on).min(off_fence.len());
        for &(x, y) in on_fence[..n_on].iter().chain(&off_fence[..n_off]) {
            neg.push(backend.extract(t.image, x, y, win)?);
        }
    }
    Ok((pos, neg))
}

fn mirror_example<T: Scalar>(
    t: &TrainingImage<'_, T>,
) -> (Image<T>, Vec<(f64, f64)>, Option<BinaryMask>) {
    let (w, h) = t.image.dims();
    let planes: Vec<_> = t
        .image
        .split_channels()
        .iter()
        .map(|p| Image::from_fn(w, h, |x, y| p.at(w - 1 - x, y)))
        .collect();
    let image = Image::from_channels(&planes).expect("planes share a size");
    let joints = t
        .joints
        .iter()
        .map(|&(x, y)| ((w - 1) as f64 - x, y))
        .collect();
    let fence = t.fence.map(|m| {
        let mut out = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                out.set(x, y, m.get(w - 1 - x, y));
            }
        }
        out
    });
    (image, joints, fence)
}

/// Samples a training set, fits the classifier, then repeatedly scans the
/// training images and retrains with every window that fires at least
/// `min_negative_distance` from a joint added as a negative.
pub fn train_detector<T: Scalar>(
    images: &[TrainingImage<'_, T>],
    backend: &dyn FeatureBackend<T>,
    sample: &SampleParams,
    train: &TrainParams,
) -> Result<LinearClassifier<T>> {
    sample.validate()?;
    train.validate()?;
    let mirrored: Vec<_> = if sample.mirror {
        images.iter().map(mirror_example).collect()
    } else {
        Vec::new()
    };
    let mut all: Vec<TrainingImage<'_, T>> = images.to_vec();
    all.extend(mirrored.iter().map(|(image, joints, fence)| TrainingImage {
        image,
        joints,
        fence: fence.as_ref(),
    }));
    let images = &all[..];
    let (pos, mut neg) = sample_training_set(images, backend, sample)?;
    let mut clf = train_classifier(&pos, &neg, train, backend.id())?;
    for round in 0..sample.mining_rounds {
        let mut added = 0usize;
        for t in images {
            let hits = score_windows(
                t.image,
                &clf,
                backend,
                sample.mining_stride.max(1),
                sample.window,
            )?;
            for d in hits {
                if d.score <= clf.threshold.as_f64() {
                    continue;
                }
                let far = t
                    .joints
                    .iter()
                    .all(|&(jx, jy)| (jx - d.x).hypot(jy - d.y) >= sample.min_negative_distance);
                if far {
                    neg.push(backend.extract(
                        t.image,
                        d.x as usize,
                        d.y as usize,
                        sample.window,
                    )?);
                    added += 1;
                }
            }
        }
        log::debug!("mining round {round}: {added} hard negatives");
        if added == 0 {
            break;
        }
        clf = train_classifier(&pos, &neg, train, backend.id())?;
    }
    Ok(clf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fenceseg::HandcraftedFeatures;
    use crate::synthbench::{render_scene, LatticeSpec, Motion, SceneSpec, Texture};

    fn scene(angle: f64, seed: u64) -> SceneSpec {
        SceneSpec {
            width: 160,
            height: 120,
            channels: 3,
            texture: Texture::SmoothNoise {
                sigma: 2.0,
                lo: 0.05,
                hi: 0.7,
            },
            lattice: LatticeSpec {
                spacing: 36.0,
                angle_deg: angle,
                ..LatticeSpec::default()
            },
            motions: vec![Motion::default()],
            noise_sigma: 0.01,
            seed,
        }
    }

    #[test]
    fn mirror_flips_image_joints_and_mask() {
        let img = Image::from_fn(5, 2, |x, y| (x + 10 * y) as f64);
        let mut mask = BinaryMask::new(5, 2);
        mask.set(0, 1, true);
        let joints = [(1.0, 0.5)];
        let t = TrainingImage {
            image: &img,
            joints: &joints,
            fence: Some(&mask),
        };
        let (m, j, f) = mirror_example(&t);
        assert_eq!(m.at(4, 0), 0.0);
        assert_eq!(m.at(0, 1), 14.0);
        assert_eq!(j, vec![(3.0, 0.5)]);
        let f = f.unwrap();
        assert!(f.get(4, 1) && f.count() == 1);
    }

    #[test]
    fn trained_detector_separates_joints_from_wires() {
        let train: Vec<_> = [(8.0, 3), (17.0, 5)]
            .iter()
            .map(|&(a, seed)| render_scene(&scene(a, seed)).unwrap())
            .collect();
        let images: Vec<_> = train
            .iter()
            .map(|(f, gt)| TrainingImage {
                image: &f[0],
                joints: &gt.joints[0],
                fence: Some(&gt.masks[0]),
            })
            .collect();
        let backend = HandcraftedFeatures;
        // two small images give few updates per epoch
        let tp = TrainParams {
            epochs: 300,
            ..TrainParams::default()
        };
        let clf = train_detector(&images, &backend, &SampleParams::default(), &tp).unwrap();

        // held out, at an angle only the mirrored copies cover
        let (frames, gt) = render_scene(&scene(-12.0, 4)).unwrap();
        let img = &frames[0];
        let (w, h) = img.dims();
        let fires = |x: f64, y: f64| {
            let f = backend
                .extract(img, x.round() as usize, y.round() as usize, 32)
                .unwrap();
            clf.predict(&f)
        };
        let inner: Vec<(f64, f64)> = gt.joints[0]
            .iter()
            .copied()
            .filter(|&(x, y)| window_fits(x.round(), y.round(), w, h, 32))
            .collect();
        let hits = inner.iter().filter(|j| fires(j.0, j.1)).count();
        assert!(
            hits * 5 >= inner.len() * 4,
            "{hits} of {} joints",
            inner.len()
        );

        // midpoints of neighbouring joints lie on wires, far from any joint
        let mut mids = Vec::new();
        for a in &inner {
            for b in &inner {
                let d = (a.0 - b.0).hypot(a.1 - b.1);
                if d > 1.0 && d < 40.0 && a < b {
                    mids.push(((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0));
                }
            }
        }
        assert!(!mids.is_empty());
        let false_hits = mids.iter().filter(|m| fires(m.0, m.1)).count();
        assert!(
            false_hits * 5 <= mids.len(),
            "{false_hits} of {} wire midpoints",
            mids.len()
        );
    }
}
