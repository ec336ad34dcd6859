use log::debug;

use crate::error::{DefenceError, Result};
use crate::imgcore::{
    dilate, gaussian_pyramid, mask_pyramid, resize_flow, warp_image, warp_mask_nearest, BinaryMask,
    FlowField, Image,
};
use crate::occflow::{solve_increment, FlowParams, Linearization};
use crate::scalar::Scalar;

/// Pixels whose data term is disabled: the reference fence, the target fence
/// pulled back through `w` (nearest sample, grown by 1 px) and samples that
/// fell outside the target.
pub fn combined_mask<T: Scalar>(
    o_ref: &BinaryMask,
    o_t: &BinaryMask,
    w: &FlowField<T>,
    invalid: &BinaryMask,
) -> BinaryMask {
    assert!(o_ref.dims() == o_t.dims() && o_t.dims() == w.dims() && w.dims() == invalid.dims());
    let pulled = dilate(&warp_mask_nearest(o_t, w), 1);
    o_ref.or(&pulled).or(invalid)
}

#[derive(Clone, Debug)]
pub struct FlowEstimate<T> {
    pub flow: FlowField<T>,
    /// Every CG solve reached `cg_tol`.
    pub converged: bool,
    /// Set when an input carries no texture and the zero field was returned.
    pub low_confidence: bool,
}

fn is_constant<T: Scalar>(img: &Image<T>) -> bool {
    let d = img.data();
    let (lo, hi) = d
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    d.is_empty() || (hi - lo).as_f64() < 1e-9
}

/// Flow `w` with `y_ref(p) ≈ y_t(p + w(p))`. Colour inputs are reduced to
/// Rec. 601 luma first.
pub fn estimate_flow<T: Scalar>(
    y_ref: &Image<T>,
    y_t: &Image<T>,
    o_ref: &BinaryMask,
    o_t: &BinaryMask,
    params: &FlowParams,
) -> Result<FlowEstimate<T>> {
    params.validate()?;
    if !y_ref.same_size(y_t) {
        return Err(DefenceError::Dimension(format!(
            "reference {:?} vs target {:?}",
            y_ref.dims(),
            y_t.dims()
        )));
    }
    if o_ref.dims() != y_ref.dims() || o_t.dims() != y_ref.dims() {
        return Err(DefenceError::Dimension(
            "mask size differs from image".into(),
        ));
    }
    let (width, height) = y_ref.dims();
    let g_ref = y_ref.to_gray();
    let g_t = y_t.to_gray();
    if is_constant(&g_ref) || is_constant(&g_t) {
        return Ok(FlowEstimate {
            flow: FlowField::zeros(width, height),
            converged: true,
            low_confidence: true,
        });
    }

    let p_ref = gaussian_pyramid(&g_ref, params.pyramid_ratio, params.min_dim)?;
    let p_t = gaussian_pyramid(&g_t, params.pyramid_ratio, params.min_dim)?;
    let dims: Vec<_> = p_ref.levels.iter().map(|l| l.dims()).collect();
    let m_ref = mask_pyramid(o_ref, &dims);
    let m_t = mask_pyramid(o_t, &dims);

    let mut converged = true;
    let (cw, ch) = *dims.last().expect("pyramid has a level");
    let mut flow = FlowField::zeros(cw, ch);
    for level in (0..dims.len()).rev() {
        let (lw, lh) = dims[level];
        if flow.dims() != (lw, lh) {
            flow = resize_flow(&flow, lw, lh);
        }
        let (a, b) = (&p_ref.levels[level], &p_t.levels[level]);
        for _ in 0..params.warp_updates {
            let (_, invalid) = warp_image(b, &flow);
            let occluded = combined_mask(&m_ref[level], &m_t[level], &flow, &invalid);
            let lin = Linearization::new(a, b, &flow, &occluded);
            let n = lin.len();
            let mut du = vec![T::zero(); n];
            let mut dv = vec![T::zero(); n];
            for _ in 0..params.outer_iters {
                let sys = lin.reweight(&du, &dv, params);
                let inc = solve_increment(&sys, params, Some((&du, &dv)));
                converged &= inc.converged;
                du = inc.du;
                dv = inc.dv;
            }
            flow.add_assign(&du, &dv);
        }
        debug!(
            "flow level {level} ({lw}x{lh}) max |w| = {}",
            flow.max_abs()
        );
    }
    Ok(FlowEstimate {
        flow,
        converged,
        low_confidence: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Image::from_fn(w, h, |_, _| rng.random::<f64>());
        crate::imgcore::gaussian_blur(&raw, 2.0)
    }

    #[test]
    fn combined_mask_examples() {
        let mut o = BinaryMask::new(20, 20);
        o.set(10, 10, true);
        let none = BinaryMask::new(20, 20);
        let zero = FlowField::<f64>::zeros(20, 20);
        assert_eq!(combined_mask(&o, &o, &zero, &none), dilate(&o, 1));

        let mut inv = BinaryMask::new(20, 20);
        inv.set(0, 3, true);
        assert_eq!(combined_mask(&none, &none, &zero, &inv), inv);

        // Backward warping reads the target at x + u, so the target fence at
        // x = 10 shows up at x = 8 on the reference grid.
        let shift = FlowField::uniform(20, 20, 2.0, 0.0);
        let m = combined_mask(&none, &o, &shift, &none);
        let mut expected = BinaryMask::new(20, 20);
        expected.set(8, 10, true);
        assert_eq!(m, dilate(&expected, 1));
        assert_eq!(m.count(), 5);
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let img = textured(48, 40, 1);
        let m = BinaryMask::new(48, 40);
        let est = estimate_flow(&img, &img, &m, &m, &FlowParams::default()).unwrap();
        assert!(est.flow.max_abs() <= 0.1);
        assert!(!est.low_confidence);
    }

    #[test]
    fn fully_occluded_returns_initialisation() {
        let a = textured(40, 32, 2);
        let b = textured(40, 32, 3);
        let m = BinaryMask::filled(40, 32, true);
        let est = estimate_flow(&a, &b, &m, &m, &FlowParams::default()).unwrap();
        assert_eq!(est.flow.max_abs(), 0.0);
    }

    #[test]
    fn constant_input_is_low_confidence() {
        let a = Image::filled(30, 30, 1, 0.4);
        let b = textured(30, 30, 4);
        let m = BinaryMask::new(30, 30);
        let est = estimate_flow(&a, &b, &m, &m, &FlowParams::default()).unwrap();
        assert!(est.low_confidence);
        assert_eq!(est.flow.max_abs(), 0.0);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let a = textured(30, 30, 4);
        let b = textured(31, 30, 4);
        let m = BinaryMask::new(30, 30);
        assert!(estimate_flow(&a, &b, &m, &m, &FlowParams::default()).is_err());
        let bad = FlowParams {
            pyramid_ratio: 0.95,
            ..FlowParams::default()
        };
        assert!(estimate_flow(&a, &a, &m, &m, &bad).is_err());
    }
}
