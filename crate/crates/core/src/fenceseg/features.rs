//! Window descriptors. The default backend is a hand-crafted gradient
//! orientation + colour histogram; the file backend serves vectors computed
//! elsewhere (for instance 4096-d CNN activations) keyed by window centre.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DefenceError, Result};
use crate::imgcore::Image;
use crate::scalar::Scalar;

pub const HANDCRAFTED_ID: &str = "hog-color-152";
pub const FEATURE_FILE_ID: &str = "feature-file";

const ORIENT_BINS: usize = 8;
const GRID: usize = 4;
const COLOR_BINS: usize = 8;
/// Length of the default descriptor: 4×4 cells × 8 orientations + 3 × 8 colour bins.
pub const HANDCRAFTED_DIM: usize = GRID * GRID * ORIENT_BINS + 3 * COLOR_BINS;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<T>(pub Vec<T>);

impl<T: Scalar> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }
}

/// Source of per-window descriptors.
pub trait FeatureBackend<T: Scalar>: Sync {
    /// Identifier stored in classifier model files.
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Descriptor of the `window`×`window` patch centred at `(cx, cy)`.
    fn extract(
        &self,
        img: &Image<T>,
        cx: usize,
        cy: usize,
        window: usize,
    ) -> Result<FeatureVector<T>>;
}

/// Orientation histograms on a 4×4 grid of the grayscale patch plus 8-bin
/// per-channel colour histograms. Each of the two blocks is L2-normalised;
/// an all-zero block stays zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct HandcraftedFeatures;

impl<T: Scalar> FeatureBackend<T> for HandcraftedFeatures {
    fn id(&self) -> &str {
        HANDCRAFTED_ID
    }

    fn dim(&self) -> usize {
        HANDCRAFTED_DIM
    }

    fn extract(
        &self,
        img: &Image<T>,
        cx: usize,
        cy: usize,
        window: usize,
    ) -> Result<FeatureVector<T>> {
        if window < GRID {
            return Err(DefenceError::param("window", format!("{window} < {GRID}")));
        }
        Ok(FeatureVector(handcrafted_descriptor(img, cx, cy, window)))
    }
}

fn l2_normalize<T: Scalar>(block: &mut [T]) {
    let n = block.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if n > T::zero() {
        block.iter_mut().for_each(|v| *v /= n);
    }
}

fn handcrafted_descriptor<T: Scalar>(
    img: &Image<T>,
    cx: usize,
    cy: usize,
    window: usize,
) -> Vec<T> {
    let x0 = cx as isize - (window / 2) as isize;
    let y0 = cy as isize - (window / 2) as isize;
    let c = img.channels();
    let luma = |x: isize, y: isize| -> T {
        if c == 1 {
            img.get_clamped(x, y, 0)
        } else {
            T::lit(0.299) * img.get_clamped(x, y, 0)
                + T::lit(0.587) * img.get_clamped(x, y, 1)
                + T::lit(0.114) * img.get_clamped(x, y, 2)
        }
    };
    let mut gray = vec![T::zero(); window * window];
    for j in 0..window {
        for i in 0..window {
            gray[j * window + i] = luma(x0 + i as isize, y0 + j as isize);
        }
    }

    let mut out = vec![T::zero(); HANDCRAFTED_DIM];
    let half = T::lit(0.5);
    let bin_width = std::f64::consts::PI / 4.0;
    for j in 0..window {
        let (jp, jn) = (j.saturating_sub(1), (j + 1).min(window - 1));
        for i in 0..window {
            let (ip, in_) = (i.saturating_sub(1), (i + 1).min(window - 1));
            let gx = (gray[j * window + in_] - gray[j * window + ip]) * half;
            let gy = (gray[jn * window + i] - gray[jp * window + i]) * half;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == T::zero() {
                continue;
            }
            // bins centred on multiples of 45 degrees
            let theta = gy.as_f64().atan2(gx.as_f64());
            let bin =
                ((theta / bin_width).round() as isize).rem_euclid(ORIENT_BINS as isize) as usize;
            let cell = (j * GRID / window) * GRID + i * GRID / window;
            out[cell * ORIENT_BINS + bin] += mag;
        }
    }

    let color = &mut out[GRID * GRID * ORIENT_BINS..];
    for j in 0..window {
        for i in 0..window {
            for ch in 0..3 {
                let v = img.get_clamped(x0 + i as isize, y0 + j as isize, ch.min(c - 1));
                let b =
                    ((v.as_f64().clamp(0.0, 1.0) * COLOR_BINS as f64) as usize).min(COLOR_BINS - 1);
                color[ch * COLOR_BINS + b] += T::one();
            }
        }
    }

    let (orient, color) = out.split_at_mut(GRID * GRID * ORIENT_BINS);
    l2_normalize(orient);
    l2_normalize(color);
    out
}

/// Externally computed descriptors keyed by integer window centre.
///
/// On-disk layout, all little-endian:
///
/// ```text
/// b"FVEC" | dim: u32 | count: u32 | count × { cx: i32 | cy: i32 | dim × f32 }
/// ```
#[derive(Clone, Debug, Default)]
pub struct FeatureFile {
    dim: usize,
    records: HashMap<(i64, i64), Vec<f32>>,
}

impl FeatureFile {
    pub fn new(dim: usize) -> Self {
        FeatureFile {
            dim,
            records: HashMap::new(),
        }
    }

    pub fn insert(&mut self, cx: i64, cy: i64, values: Vec<f32>) -> Result<()> {
        if values.len() != self.dim {
            return Err(DefenceError::Dimension(format!(
                "feature of length {} in a {}-d file",
                values.len(),
                self.dim
            )));
        }
        self.records.insert((cx, cy), values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"FVEC")?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())?;
        let mut keys: Vec<_> = self.records.keys().copied().collect();
        keys.sort_unstable_by_key(|&(x, y)| (y, x));
        for (cx, cy) in keys {
            w.write_all(&(cx as i32).to_le_bytes())?;
            w.write_all(&(cy as i32).to_le_bytes())?;
            for v in &self.records[&(cx, cy)] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"FVEC" {
            return Err(DefenceError::Format(
                "feature file magic is not FVEC".into(),
            ));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let count = u32::from_le_bytes(word) as usize;
        let mut out = FeatureFile::new(dim);
        let mut rec = vec![0u8; 8 + 4 * dim];
        for _ in 0..count {
            r.read_exact(&mut rec)?;
            let cx = i32::from_le_bytes(rec[0..4].try_into().unwrap()) as i64;
            let cy = i32::from_le_bytes(rec[4..8].try_into().unwrap()) as i64;
            let values = rec[8..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            out.insert(cx, cy, values)?;
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}

impl<T: Scalar> FeatureBackend<T> for FeatureFile {
    fn id(&self) -> &str {
        FEATURE_FILE_ID
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(
        &self,
        _img: &Image<T>,
        cx: usize,
        cy: usize,
        _window: usize,
    ) -> Result<FeatureVector<T>> {
        let (cx, cy) = (cx as i64, cy as i64);
        let v = self
            .records
            .get(&(cx, cy))
            .ok_or(DefenceError::MissingFeature { cx, cy })?;
        Ok(FeatureVector(v.iter().map(|x| T::lit(*x as f64)).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extract(img: &Image<f64>, cx: usize, cy: usize, window: usize) -> Vec<f64> {
        FeatureBackend::<f64>::extract(&HandcraftedFeatures, img, cx, cy, window)
            .unwrap()
            .0
    }

    #[test]
    fn constant_patch_has_zero_orientation_block() {
        let img = Image::filled(40, 40, 3, 0.4);
        let f = extract(&img, 20, 20, 32);
        assert_eq!(f.len(), HANDCRAFTED_DIM);
        assert!(f[..128].iter().all(|v| *v == 0.0));
        let color_norm: f64 = f[128..].iter().map(|v| v * v).sum();
        assert!((color_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_by_quarter_turn_permutes_orientation_block() {
        // a bright vertical bar and a dimmer horizontal bar: gradients only
        // along the two axes
        let w = 32;
        let patch = Image::from_fn(w, w, |x, y| {
            let mut v = 0.1;
            if (10..14).contains(&x) {
                v += 0.6;
            }
            if (20..23).contains(&y) {
                v += 0.25;
            }
            v
        });
        let rotated = Image::from_fn(w, w, |x, y| patch.at(y, w - 1 - x));
        let a = extract(&patch, w / 2, w / 2, w);
        let b = extract(&rotated, w / 2, w / 2, w);
        assert_eq!(a[128..], b[128..]);
        assert_ne!(a[..128], b[..128]);
        let mut sa = a[..128].to_vec();
        let mut sb = b[..128].to_vec();
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_patches_give_identical_features() {
        let tile = |x: usize, y: usize| ((x % 16) * 3 + (y % 16) * 7) as f64 / 120.0;
        let img = Image::from_fn(64, 64, tile);
        assert_eq!(extract(&img, 16, 16, 16), extract(&img, 48, 32, 16));
    }

    #[test]
    fn feature_file_round_trip_and_missing_key() {
        let mut ff = FeatureFile::new(3);
        ff.insert(5, 10, vec![1.0, 2.0, 3.0]).unwrap();
        ff.insert(-1, 0, vec![0.5, 0.0, -4.0]).unwrap();
        assert!(ff.insert(0, 0, vec![1.0]).is_err());
        let mut buf = Vec::new();
        ff.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FVEC");
        assert_eq!(buf.len(), 12 + 2 * (8 + 12));
        let back = FeatureFile::read(&mut buf.as_slice()).unwrap();
        let img = Image::<f64>::new(20, 20, 1);
        let v = FeatureBackend::<f64>::extract(&back, &img, 5, 10, 8).unwrap();
        assert_eq!(v.0, vec![1.0, 2.0, 3.0]);
        let err = FeatureBackend::<f64>::extract(&back, &img, 6, 10, 8).unwrap_err();
        assert!(matches!(
            err,
            DefenceError::MissingFeature { cx: 6, cy: 10 }
        ));
    }
}
