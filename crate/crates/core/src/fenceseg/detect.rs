use rayon::prelude::*;

use crate::error::{DefenceError, Result};
use crate::fenceseg::{FeatureBackend, LinearClassifier};
use crate::imgcore::Image;
use crate::scalar::Scalar;

/// A detected fence texel joint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TexelDetection {
    pub x: f64,
    pub y: f64,
    /// Classifier margin `w·x + b`.
    pub score: f64,
}

impl TexelDetection {
    pub fn distance(&self, other: &TexelDetection) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Window centres visited by the scan, row-major. A window covers
/// `[c - window/2, c - window/2 + window)` and must lie inside the raster.
pub fn scan_centers(
    width: usize,
    height: usize,
    stride: usize,
    window: usize,
) -> Vec<(usize, usize)> {
    let half = window / 2;
    let axis = |n: usize| -> Vec<usize> {
        if window > n {
            return Vec::new();
        }
        (half..=n - window + half).step_by(stride.max(1)).collect()
    };
    let xs = axis(width);
    axis(height)
        .into_iter()
        .flat_map(|y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

/// True when a window of the given size centred on `(x, y)` fits the raster.
pub fn window_fits(x: f64, y: f64, width: usize, height: usize, window: usize) -> bool {
    let half = (window / 2) as f64;
    x >= half
        && y >= half
        && x <= (width - window) as f64 + half
        && y <= (height - window) as f64 + half
}

/// Greedy non-maximum suppression: visit in descending score (scan order on
/// ties) and drop anything within `radius` of an already kept detection.
pub fn non_maximum_suppression(mut dets: Vec<TexelDetection>, radius: f64) -> Vec<TexelDetection> {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<TexelDetection> = Vec::new();
    for d in dets {
        if kept.iter().all(|k| k.distance(&d) > radius) {
            kept.push(d);
        }
    }
    kept
}

/// Every window score on the scan grid, row-major.
pub fn score_windows<T: Scalar>(
    img: &Image<T>,
    clf: &LinearClassifier<T>,
    backend: &dyn FeatureBackend<T>,
    stride: usize,
    window: usize,
) -> Result<Vec<TexelDetection>> {
    if stride == 0 {
        return Err(DefenceError::param("stride", "must be at least 1"));
    }
    if window > img.width().min(img.height()) {
        return Err(DefenceError::param(
            "window",
            format!(
                "{window} exceeds image size {}x{}",
                img.width(),
                img.height()
            ),
        ));
    }
    if backend.dim() != clf.dim() {
        return Err(DefenceError::Dimension(format!(
            "classifier expects {}-d features, backend `{}` yields {}",
            clf.dim(),
            backend.id(),
            backend.dim()
        )));
    }
    scan_centers(img.width(), img.height(), stride, window)
        .into_par_iter()
        .map(|(cx, cy)| {
            let f = backend.extract(img, cx, cy, window)?;
            Ok(TexelDetection {
                x: cx as f64,
                y: cy as f64,
                score: clf.score(&f).as_f64(),
            })
        })
        .collect()
}

/// Sliding-window joint detection followed by non-maximum suppression.
pub fn detect_texels<T: Scalar>(
    img: &Image<T>,
    clf: &LinearClassifier<T>,
    backend: &dyn FeatureBackend<T>,
    stride: usize,
    window: usize,
    nms_radius: f64,
) -> Result<Vec<TexelDetection>> {
    let threshold = clf.threshold.as_f64();
    let hits = score_windows(img, clf, backend, stride, window)?
        .into_iter()
        .filter(|d| d.score > threshold)
        .collect();
    Ok(non_maximum_suppression(hits, nms_radius))
}

/// Moves each detection to the pixel within `radius` (Chebyshev) about which
/// the surrounding `(2·half+1)²` grayscale patch is most nearly point
/// symmetric. Lattice joints are centres of 180° symmetry; the stride-spaced
/// scan grid is not.
pub fn refine_by_symmetry<T: Scalar>(
    img: &Image<T>,
    dets: &[TexelDetection],
    radius: usize,
    half: usize,
) -> Vec<TexelDetection> {
    if radius == 0 || dets.is_empty() {
        return dets.to_vec();
    }
    let gray = img.to_gray();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (r, hf) = (radius as isize, half as isize);
    dets.par_iter()
        .map(|d| {
            let (x0, y0) = (d.x.round() as isize, d.y.round() as isize);
            // (cost, squared shift, x, y); ties go to the smaller shift.
            let mut best = (f64::INFINITY, 0isize, d.x, d.y);
            for oy in -r..=r {
                for ox in -r..=r {
                    let (cx, cy) = (x0 + ox, y0 + oy);
                    if cx < 0 || cy < 0 || cx as f64 >= w || cy as f64 >= h {
                        continue;
                    }
                    let mut cost = 0.0;
                    // Half the patch suffices: (dx, dy) and (−dx, −dy) pair up.
                    for dy in 0..=hf {
                        for dx in -hf..=hf {
                            if dy == 0 && dx <= 0 {
                                continue;
                            }
                            let a = gray.get_clamped(cx + dx, cy + dy, 0).as_f64();
                            let b = gray.get_clamped(cx - dx, cy - dy, 0).as_f64();
                            cost += (a - b) * (a - b);
                        }
                    }
                    let shift = ox * ox + oy * oy;
                    if cost < best.0 || (cost == best.0 && shift < best.1) {
                        best = (cost, shift, cx as f64, cy as f64);
                    }
                }
            }
            TexelDetection {
                x: best.2,
                y: best.3,
                score: d.score,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fenceseg::{HandcraftedFeatures, HANDCRAFTED_DIM};

    #[test]
    fn scan_grid_keeps_windows_inside() {
        let c = scan_centers(40, 30, 5, 16);
        assert_eq!(c.first(), Some(&(8, 8)));
        assert!(c.iter().all(|&(x, y)| x + 8 <= 40 && y + 8 <= 30));
        assert_eq!(c.len(), 5 * 3);
        assert_eq!(c.last(), Some(&(28, 18)));
        assert!(window_fits(8.0, 8.0, 40, 30, 16));
        assert!(!window_fits(7.0, 8.0, 40, 30, 16));
        assert!(window_fits(32.0, 22.0, 40, 30, 16));
        assert!(!window_fits(33.0, 22.0, 40, 30, 16));
    }

    #[test]
    fn nms_keeps_strongest_of_close_pair() {
        let dets = vec![
            TexelDetection {
                x: 10.0,
                y: 10.0,
                score: 0.8,
            },
            TexelDetection {
                x: 11.0,
                y: 10.0,
                score: 0.9,
            },
            TexelDetection {
                x: 60.0,
                y: 10.0,
                score: 0.1,
            },
        ];
        let kept = non_maximum_suppression(dets, 10.0);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].score, 0.9);
        assert_eq!(kept[1].x, 60.0);
    }

    #[test]
    fn symmetry_refinement_finds_cross_centre() {
        let img = Image::from_fn(60, 60, |x, y| {
            let on = (x as isize - 31).abs() <= 1 || (y as isize - 27).abs() <= 1;
            if on {
                0.9
            } else {
                0.2 + 0.01 * ((x * 7 + y * 13) % 5) as f64
            }
        });
        let d = TexelDetection {
            x: 29.0,
            y: 30.0,
            score: 1.0,
        };
        let r = refine_by_symmetry(&img, &[d], 3, 8);
        assert_eq!((r[0].x, r[0].y), (31.0, 27.0));
        assert_eq!(r[0].score, 1.0);
        assert_eq!(refine_by_symmetry(&img, &[d], 0, 8)[0], d);
    }

    #[test]
    fn negative_classifier_detects_nothing() {
        let img = Image::from_fn(64, 48, |x, y| ((x ^ y) & 7) as f64 / 7.0);
        let clf = LinearClassifier {
            weights: vec![0.0; HANDCRAFTED_DIM],
            bias: -1.0,
            threshold: 0.0,
            backend: "hog-color-152".into(),
        };
        let d = detect_texels(&img, &clf, &HandcraftedFeatures, 5, 32, 16.0).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let img = Image::<f64>::new(64, 48, 1);
        let clf = LinearClassifier {
            weights: vec![0.0; 3],
            bias: 0.0,
            threshold: 0.0,
            backend: "x".into(),
        };
        assert!(detect_texels(&img, &clf, &HandcraftedFeatures, 5, 32, 16.0).is_err());
    }
}
