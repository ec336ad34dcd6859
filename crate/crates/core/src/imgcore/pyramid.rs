use crate::error::{DefenceError, Result};
use crate::imgcore::{BinaryMask, FlowField, Image};
use crate::scalar::Scalar;

/// Gaussian scale-space, finest level first.
#[derive(Clone, Debug)]
pub struct Pyramid<T> {
    pub levels: Vec<Image<T>>,
    pub ratio: f64,
}

impl<T: Scalar> Pyramid<T> {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &Image<T> {
        &self.levels[0]
    }

    pub fn coarsest(&self) -> &Image<T> {
        self.levels.last().expect("pyramid has at least one level")
    }
}

/// Anti-aliasing blur applied before a downscale by `ratio`.
pub fn pyramid_sigma(ratio: f64) -> f64 {
    0.6 * (1.0 / (ratio * ratio) - 1.0).sqrt()
}

fn check_ratio(ratio: f64, min_dim: usize) -> Result<()> {
    if !(0.25..=0.9).contains(&ratio) {
        return Err(DefenceError::param(
            "pyramid_ratio",
            format!("{ratio} outside [0.25, 0.9]"),
        ));
    }
    if min_dim < 16 {
        return Err(DefenceError::param("min_dim", format!("{min_dim} < 16")));
    }
    Ok(())
}

/// Level sizes produced by the ceil recurrence, finest first.
pub fn pyramid_dims(
    width: usize,
    height: usize,
    ratio: f64,
    min_dim: usize,
) -> Vec<(usize, usize)> {
    let mut dims = vec![(width, height)];
    loop {
        let (w, h) = *dims.last().unwrap();
        let nw = (w as f64 * ratio).ceil() as usize;
        let nh = (h as f64 * ratio).ceil() as usize;
        if nw.min(nh) < min_dim || (nw, nh) == (w, h) {
            break;
        }
        dims.push((nw, nh));
    }
    dims
}

pub fn gaussian_pyramid<T: Scalar>(
    img: &Image<T>,
    ratio: f64,
    min_dim: usize,
) -> Result<Pyramid<T>> {
    check_ratio(ratio, min_dim)?;
    let dims = pyramid_dims(img.width(), img.height(), ratio, min_dim);
    let sigma = pyramid_sigma(ratio);
    let mut levels = vec![img.clone()];
    for &(w, h) in &dims[1..] {
        let prev = levels.last().unwrap();
        levels.push(resize_bilinear(&gaussian_blur(prev, sigma), w, h));
    }
    Ok(Pyramid { levels, ratio })
}

/// Any-true downsampling of a mask to each pyramid level.
pub fn mask_pyramid(mask: &BinaryMask, dims: &[(usize, usize)]) -> Vec<BinaryMask> {
    dims.iter()
        .map(|&(w, h)| {
            if (w, h) == mask.dims() {
                mask.clone()
            } else {
                downsample_mask_any(mask, w, h)
            }
        })
        .collect()
}

pub fn downsample_mask_any(mask: &BinaryMask, nw: usize, nh: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let span = |i: usize, n: usize, full: usize| {
        let lo = i * full / n;
        let hi = ((i + 1) * full).div_ceil(n).min(full);
        lo..hi.max(lo + 1)
    };
    BinaryMask::from_fn(nw, nh, |x, y| {
        span(y, nh, h).any(|sy| span(x, nw, w).any(|sx| mask.get(sx, sy)))
    })
}

/// Separable Gaussian blur with replicate boundary.
pub fn gaussian_blur<T: Scalar>(img: &Image<T>, sigma: f64) -> Image<T> {
    if sigma < 1e-3 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= s);
    let kernel: Vec<T> = kernel.into_iter().map(T::lit).collect();

    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut tmp = Image::new(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = T::zero();
                for (k, kv) in kernel.iter().enumerate() {
                    acc += *kv * img.get_clamped(x as isize + k as isize - radius, y as isize, ch);
                }
                tmp.set(x, y, ch, acc);
            }
        }
    }
    let mut out = Image::new(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = T::zero();
                for (k, kv) in kernel.iter().enumerate() {
                    acc += *kv * tmp.get_clamped(x as isize, y as isize + k as isize - radius, ch);
                }
                out.set(x, y, ch, acc);
            }
        }
    }
    out
}

#[inline]
fn source_coord(i: usize, n_dst: usize, n_src: usize) -> f64 {
    let s = (i as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5;
    s.clamp(0.0, (n_src - 1) as f64)
}

/// Pixel-centre aligned bilinear resize.
pub fn resize_bilinear<T: Scalar>(img: &Image<T>, nw: usize, nh: usize) -> Image<T> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = Image::new(nw, nh, c);
    for y in 0..nh {
        let sy = source_coord(y, nh, h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = T::lit(sy - y0 as f64);
        for x in 0..nw {
            let sx = source_coord(x, nw, w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = T::lit(sx - x0 as f64);
            for ch in 0..c {
                let top = img.get(x0, y0, ch) * (T::one() - fx) + img.get(x1, y0, ch) * fx;
                let bot = img.get(x0, y1, ch) * (T::one() - fx) + img.get(x1, y1, ch) * fx;
                out.set(x, y, ch, top * (T::one() - fy) + bot * fy);
            }
        }
    }
    out
}

/// Resamples a flow field to a new grid, rescaling displacements by the
/// per-axis size ratio.
pub fn resize_flow<T: Scalar>(flow: &FlowField<T>, nw: usize, nh: usize) -> FlowField<T> {
    let (w, h) = flow.dims();
    let u = Image::from_vec(w, h, 1, flow.u().to_vec()).expect("flow u plane");
    let v = Image::from_vec(w, h, 1, flow.v().to_vec()).expect("flow v plane");
    let sx = T::lit(nw as f64 / w as f64);
    let sy = T::lit(nh as f64 / h as f64);
    let u = resize_bilinear(&u, nw, nh).map(|a| a * sx);
    let v = resize_bilinear(&v, nw, nh).map(|a| a * sy);
    FlowField::from_vecs(nw, nh, u.into_vec(), v.into_vec()).expect("resized flow")
}
