use crate::imgcore::{BinaryMask, FlowField, Image};
use crate::scalar::Scalar;

/// The four source pixels (linear index, weight) of a bilinear sample at
/// `(sx, sy)`, or `None` when the footprint leaves the `w`×`h` raster.
#[inline]
pub fn bilinear_taps<T: Scalar>(sx: T, sy: T, w: usize, h: usize) -> Option<[(usize, T); 4]> {
    let (wmax, hmax) = (T::from_usize_lossy(w - 1), T::from_usize_lossy(h - 1));
    if !(sx >= T::zero() && sy >= T::zero() && sx <= wmax && sy <= hmax) {
        return None;
    }
    let (x0, fx) = split_coord(sx, w);
    let (y0, fy) = split_coord(sy, h);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (gx, gy) = (T::one() - fx, T::one() - fy);
    Some([
        (y0 * w + x0, gx * gy),
        (y0 * w + x1, fx * gy),
        (y1 * w + x0, gx * fy),
        (y1 * w + x1, fx * fy),
    ])
}

#[inline]
fn split_coord<T: Scalar>(s: T, n: usize) -> (usize, T) {
    let mut i = s.floor().to_usize().unwrap_or(0);
    if n >= 2 && i >= n - 1 {
        i = n - 2;
    }
    if n == 1 {
        return (0, T::zero());
    }
    (i, s - T::from_usize_lossy(i))
}

/// Backward warp: output `(x, y)` samples `img` at `(x + u, y + v)`.
///
/// Pixels whose bilinear footprint leaves the raster are set to zero and
/// flagged in the returned mask.
pub fn warp_image<T: Scalar>(img: &Image<T>, flow: &FlowField<T>) -> (Image<T>, BinaryMask) {
    assert_eq!(img.dims(), flow.dims(), "flow and image dimensions differ");
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = Image::new(w, h, c);
    let mut invalid = BinaryMask::new(w, h);
    let src = img.data();
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = T::from_usize_lossy(x) + flow.u()[i];
            let sy = T::from_usize_lossy(y) + flow.v()[i];
            match bilinear_taps(sx, sy, w, h) {
                Some(taps) => {
                    for ch in 0..c {
                        let mut acc = T::zero();
                        for (j, wt) in taps {
                            acc += wt * src[j * c + ch];
                        }
                        dst[i * c + ch] = acc;
                    }
                }
                None => invalid.set(x, y, true),
            }
        }
    }
    (out, invalid)
}

/// Nearest-neighbour backward warp of a mask. Samples outside the raster
/// read as `false`.
pub fn warp_mask_nearest<T: Scalar>(mask: &BinaryMask, flow: &FlowField<T>) -> BinaryMask {
    assert_eq!(mask.dims(), flow.dims(), "flow and mask dimensions differ");
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        let (u, v) = flow.get(x, y);
        let sx = (T::from_usize_lossy(x) + u)
            .round()
            .to_isize()
            .unwrap_or(isize::MIN);
        let sy = (T::from_usize_lossy(y) + v)
            .round()
            .to_isize()
            .unwrap_or(isize::MIN);
        mask.get_or(sx, sy, false)
    })
}

/// Central differences with replicate boundary, computed per channel.
pub fn image_gradients<T: Scalar>(img: &Image<T>) -> (Image<T>, Image<T>) {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let half = T::lit(0.5);
    let mut gx = Image::new(w, h, c);
    let mut gy = Image::new(w, h, c);
    for y in 0..h {
        let (yp, yn) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xp, xn) = (x.saturating_sub(1), (x + 1).min(w - 1));
            for ch in 0..c {
                gx.set(x, y, ch, (img.get(xn, y, ch) - img.get(xp, y, ch)) * half);
                gy.set(x, y, ch, (img.get(x, yn, ch) - img.get(x, yp, ch)) * half);
            }
        }
    }
    (gx, gy)
}
