use crate::error::{DefenceError, Result};
use crate::imgcore::{bilinear_taps, BinaryMask, FlowField, Image};
use crate::scalar::Scalar;

/// `O_m F_m`: bilinear backward warp followed by zeroing fence pixels and
/// pixels whose sample left the raster.
#[derive(Clone, Debug)]
pub struct DegradationOperator<T> {
    pub warp: FlowField<T>,
    /// True on fence pixels, which carry no data.
    pub mask: BinaryMask,
    /// True where the warp footprint lies inside the raster.
    pub valid: BinaryMask,
    taps: Vec<Option<[(usize, T); 4]>>,
}

impl<T: Scalar> DegradationOperator<T> {
    pub fn new(warp: FlowField<T>, mask: BinaryMask) -> Result<Self> {
        if warp.dims() != mask.dims() {
            return Err(DefenceError::Dimension(format!(
                "warp {:?} vs mask {:?}",
                warp.dims(),
                mask.dims()
            )));
        }
        let (w, h) = warp.dims();
        let mut taps = Vec::with_capacity(w * h);
        let mut valid = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = warp.get(x, y);
                let t = bilinear_taps(T::from_usize_lossy(x) + u, T::from_usize_lossy(y) + v, w, h);
                valid.set(x, y, t.is_some());
                taps.push(if mask.get(x, y) { None } else { t });
            }
        }
        Ok(DegradationOperator {
            warp,
            mask,
            valid,
            taps,
        })
    }

    pub fn identity(mask: BinaryMask) -> Self {
        let (w, h) = mask.dims();
        Self::new(FlowField::zeros(w, h), mask).expect("matching dimensions")
    }

    pub fn dims(&self) -> (usize, usize) {
        self.warp.dims()
    }

    /// Pixels that carry data (unmasked and in bounds).
    pub fn support(&self) -> BinaryMask {
        self.valid.minus(&self.mask)
    }

    fn check(&self, img: &Image<T>) -> Result<()> {
        if img.dims() != self.dims() {
            return Err(DefenceError::Dimension(format!(
                "image {:?} vs operator {:?}",
                img.dims(),
                self.dims()
            )));
        }
        Ok(())
    }

    /// `y = O F x`, channel by channel.
    pub fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        self.check(x)?;
        let c = x.channels();
        let (w, h) = self.dims();
        let mut out = Image::new(w, h, c);
        let (src, dst) = (x.data(), out.data_mut());
        for (i, t) in self.taps.iter().enumerate() {
            if let Some(taps) = t {
                for ch in 0..c {
                    let mut acc = T::zero();
                    for &(j, wt) in taps {
                        acc += wt * src[j * c + ch];
                    }
                    dst[i * c + ch] = acc;
                }
            }
        }
        Ok(out)
    }

    /// `Fᵀ Oᵀ r`: each data pixel scatters its residual to its four taps.
    pub fn adjoint(&self, r: &Image<T>) -> Result<Image<T>> {
        self.check(r)?;
        let c = r.channels();
        let (w, h) = self.dims();
        let mut out = Image::new(w, h, c);
        let (src, dst) = (r.data(), out.data_mut());
        for (i, t) in self.taps.iter().enumerate() {
            if let Some(taps) = t {
                for ch in 0..c {
                    let ri = src[i * c + ch];
                    for &(j, wt) in taps {
                        dst[j * c + ch] += wt * ri;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::dot;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image<f64> {
        Image::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_op(rng: &mut ChaCha8Rng, w: usize, h: usize, fence: f64) -> DegradationOperator<f64> {
        let flow = FlowField::from_fn(w, h, |_, _| {
            (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))
        });
        let mask = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(fence));
        DegradationOperator::new(flow, mask).unwrap()
    }

    #[test]
    fn identity_and_full_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(&mut rng, 9, 7);
        let id = DegradationOperator::identity(BinaryMask::new(9, 7));
        assert_eq!(id.apply(&x).unwrap(), x);
        assert_eq!(id.adjoint(&x).unwrap(), x);
        let full = DegradationOperator::identity(BinaryMask::filled(9, 7, true));
        assert!(full.apply(&x).unwrap().data().iter().all(|v| *v == 0.0));
        assert!(full.adjoint(&x).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shift_samples_right_neighbour() {
        let ramp = Image::from_fn(10, 6, |x, y| (3 * x + y) as f64);
        let op =
            DegradationOperator::new(FlowField::uniform(10, 6, 1.0, 0.0), BinaryMask::new(10, 6))
                .unwrap();
        let y = op.apply(&ramp).unwrap();
        for yy in 0..6 {
            for xx in 0..9 {
                assert_eq!(y.at(xx, yy), ramp.at(xx + 1, yy));
            }
            assert!(!op.valid.get(9, yy));
            assert_eq!(y.at(9, yy), 0.0);
        }
    }

    #[test]
    fn dot_product_test_16x16() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for fence in [0.0, 0.2, 0.7] {
            let op = random_op(&mut rng, 16, 16, fence);
            let x = random_image(&mut rng, 16, 16);
            let y = random_image(&mut rng, 16, 16);
            let lhs = dot(op.apply(&x).unwrap().data(), y.data());
            let rhs = dot(x.data(), op.adjoint(&y).unwrap().data());
            assert!(
                (lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn adjoint_is_transpose_of_dense_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (5, 4);
        let op = random_op(&mut rng, w, h, 0.2);
        let n = w * h;
        let basis = |k: usize| Image::from_fn(w, h, |x, y| if y * w + x == k { 1.0 } else { 0.0 });
        for i in 0..n {
            let col = op.apply(&basis(i)).unwrap();
            for j in 0..n {
                // A[j][i] from the forward map equals Aᵀ[i][j] from the adjoint.
                let a_ji = col.data()[j];
                let at_ij = op.adjoint(&basis(j)).unwrap().data()[i];
                assert!((a_ji - at_ij).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dot_product_property(seed in any::<u64>(), w in 2usize..12, h in 2usize..12, c in prop::sample::select(vec![1usize, 3])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let op = random_op(&mut rng, w, h, 0.3);
            let planes: Vec<_> = (0..c).map(|_| random_image(&mut rng, w, h)).collect();
            let x = Image::from_channels(&planes).unwrap();
            let planes: Vec<_> = (0..c).map(|_| random_image(&mut rng, w, h)).collect();
            let y = Image::from_channels(&planes).unwrap();
            let lhs = dot(op.apply(&x).unwrap().data(), y.data());
            let rhs = dot(x.data(), op.adjoint(&y).unwrap().data());
            prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1.0));
        }
    }
}
