use std::collections::VecDeque;

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{DefenceError, Result};
use crate::fusion::{fista_defence, DegradationOperator, FistaParams, FistaProblem};
use crate::imgcore::{BinaryMask, FlowField, Image};
use crate::occflow::{estimate_flow, FlowParams};
use crate::scalar::Scalar;

/// Replaces every masked pixel by its nearest unmasked pixel in 4-connected
/// breadth-first order. A fully masked image is returned unchanged.
pub fn fill_nearest<T: Scalar>(img: &Image<T>, mask: &BinaryMask) -> Image<T> {
    assert_eq!(img.dims(), mask.dims());
    let (w, h) = img.dims();
    let c = img.channels();
    let mut out = img.clone();
    let mut source: Vec<Option<usize>> = mask
        .data()
        .iter()
        .enumerate()
        .map(|(i, m)| (!m).then_some(i))
        .collect();
    let mut queue: VecDeque<usize> = (0..w * h).filter(|i| source[*i].is_some()).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if source[j].is_none() {
                source[j] = source[i];
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    let data = out.data_mut();
    for (i, s) in source.iter().enumerate() {
        if let Some(s) = *s {
            if s != i {
                for ch in 0..c {
                    data[i * c + ch] = img.data()[s * c + ch];
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct DefenceOutput<T> {
    pub image: Image<T>,
    /// Flow for each frame, on that frame's grid, pointing into the reference.
    pub flows: Vec<FlowField<T>>,
    /// FISTA iterations per channel.
    pub iterations: Vec<usize>,
    /// Every channel reached the stopping tolerance.
    pub converged: bool,
    /// Every flow solve converged and had texture to work with.
    pub flow_converged: bool,
}

/// Fuses the frames into a fence-free version of `frames[ref_index]`.
///
/// Masks are true on fence pixels. When `flows` is `None` each non-reference
/// frame gets occlusion-aware flow into the reference; the reference frame
/// always uses the identity warp.
pub fn defence_pipeline<T: Scalar>(
    frames: &[Image<T>],
    masks: &[BinaryMask],
    ref_index: usize,
    flow_params: &FlowParams,
    fista_params: &FistaParams,
    flows: Option<Vec<FlowField<T>>>,
) -> Result<DefenceOutput<T>> {
    if frames.is_empty() || frames.len() != masks.len() {
        return Err(DefenceError::Precondition(format!(
            "{} frames with {} masks",
            frames.len(),
            masks.len()
        )));
    }
    if ref_index >= frames.len() {
        return Err(DefenceError::param(
            "ref_index",
            format!("{ref_index} is not below the frame count {}", frames.len()),
        ));
    }
    let reference = &frames[ref_index];
    for (f, m) in frames.iter().zip(masks) {
        if !f.same_size(reference)
            || f.channels() != reference.channels()
            || m.dims() != reference.dims()
        {
            return Err(DefenceError::Dimension(
                "frames and masks must share one size".into(),
            ));
        }
    }
    flow_params.validate()?;
    fista_params.validate()?;
    let (w, h) = reference.dims();

    let (flows, flow_converged) = match flows {
        Some(f) => {
            if f.len() != frames.len() || f.iter().any(|f| f.dims() != (w, h)) {
                return Err(DefenceError::Dimension(
                    "one flow field per frame is required".into(),
                ));
            }
            (f, true)
        }
        None => {
            let estimates: Vec<Result<(FlowField<T>, bool)>> = (0..frames.len())
                .into_par_iter()
                .map(|m| {
                    if m == ref_index {
                        return Ok((FlowField::zeros(w, h), true));
                    }
                    let est = estimate_flow(
                        &frames[m],
                        reference,
                        &masks[m],
                        &masks[ref_index],
                        flow_params,
                    )?;
                    Ok((est.flow, est.converged && !est.low_confidence))
                })
                .collect();
            let mut flows = Vec::with_capacity(frames.len());
            let mut ok = true;
            for e in estimates {
                let (f, c) = e?;
                ok &= c;
                flows.push(f);
            }
            (flows, ok)
        }
    };

    if masks.iter().all(|m| m.is_clear()) {
        info!("no fence pixels; returning the reference frame");
        return Ok(DefenceOutput {
            image: reference.clone(),
            flows,
            iterations: vec![0; reference.channels()],
            converged: true,
            flow_converged,
        });
    }

    let mut ops = Vec::with_capacity(frames.len());
    for (m, (flow, mask)) in flows.iter().zip(masks).enumerate() {
        let warp = if m == ref_index {
            FlowField::zeros(w, h)
        } else {
            flow.clone()
        };
        ops.push(DegradationOperator::new(warp, mask.clone())?);
    }
    let x0 = fill_nearest(reference, &masks[ref_index]);

    let channels = reference.channels();
    let planes: Vec<Vec<Image<T>>> = frames.iter().map(|f| f.split_channels()).collect();
    let x0_planes = x0.split_channels();
    let results: Vec<Result<(Image<T>, usize, bool)>> = (0..channels)
        .into_par_iter()
        .map(|c| {
            let obs: Vec<Image<T>> = planes.iter().map(|p| p[c].clone()).collect();
            let prob = FistaProblem::with_params(obs, ops.clone(), fista_params)?;
            let out = fista_defence(&prob, &x0_planes[c])?;
            Ok((out.x, out.iterations, out.converged))
        })
        .collect();
    let mut solved = Vec::with_capacity(channels);
    let mut iterations = Vec::with_capacity(channels);
    let mut converged = true;
    for r in results {
        let (x, it, c) = r?;
        solved.push(x);
        iterations.push(it);
        converged &= c;
    }
    if !converged {
        warn!("FISTA stopped at the iteration cap");
    }
    Ok(DefenceOutput {
        image: Image::from_channels(&solved)?,
        flows,
        iterations,
        converged,
        flow_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_takes_nearest_unmasked_value() {
        let img = Image::from_fn(5, 1, |x, _| x as f64);
        let mask = BinaryMask::from_fn(5, 1, |x, _| (1..=3).contains(&x));
        let out = fill_nearest(&img, &mask);
        assert_eq!(out.data(), &[0.0, 0.0, 0.0, 4.0, 4.0]);
        let all = BinaryMask::filled(5, 1, true);
        assert_eq!(fill_nearest(&img, &all), img);
    }

    #[test]
    fn fill_handles_colour() {
        let planes = [
            Image::from_fn(3, 3, |x, y| (x + y) as f64),
            Image::from_fn(3, 3, |x, _| x as f64 * 2.0),
            Image::filled(3, 3, 1, 0.5),
        ];
        let img = Image::from_channels(&planes).unwrap();
        let mut mask = BinaryMask::new(3, 3);
        mask.set(1, 1, true);
        let out = fill_nearest(&img, &mask);
        let src = (1, 0);
        for c in 0..3 {
            assert_eq!(out.get(1, 1, c), img.get(src.0, src.1, c));
        }
    }

    #[test]
    fn empty_masks_return_reference() {
        let f = Image::from_fn(24, 20, |x, y| ((x * 3 + y * 5) % 7) as f64 / 7.0);
        let frames = vec![f.clone(), f.clone(), f.clone()];
        let masks = vec![BinaryMask::new(24, 20); 3];
        let out = defence_pipeline(
            &frames,
            &masks,
            1,
            &FlowParams::default(),
            &FistaParams::default(),
            None,
        )
        .unwrap();
        assert_eq!(out.image, f);
        assert!(out.converged);
    }

    #[test]
    fn identical_frames_with_fence_stay_close() {
        let f = Image::from_fn(24, 20, |x, y| 0.3 + 0.4 * ((x + 2 * y) % 5) as f64 / 5.0);
        let frames = vec![f.clone(), f.clone(), f.clone()];
        let mask = BinaryMask::from_fn(24, 20, |x, _| x % 8 == 3);
        let masks = vec![
            BinaryMask::new(24, 20),
            mask.clone(),
            BinaryMask::new(24, 20),
        ];
        let flows = Some(vec![FlowField::zeros(24, 20); 3]);
        let out = defence_pipeline(
            &frames,
            &masks,
            1,
            &FlowParams::default(),
            &FistaParams::default(),
            flows,
        )
        .unwrap();
        for (a, b) in out.image.data().iter().zip(f.data()) {
            assert!((a - b).abs() <= 0.01);
        }
    }

    #[test]
    fn validates_inputs() {
        let f = Image::<f64>::new(10, 10, 1);
        let m = BinaryMask::new(10, 10);
        let p = (FlowParams::default(), FistaParams::default());
        assert!(defence_pipeline(std::slice::from_ref(&f), &[], 0, &p.0, &p.1, None).is_err());
        assert!(defence_pipeline(
            &[f.clone(), f.clone()],
            &[m.clone(), m.clone()],
            2,
            &p.0,
            &p.1,
            None
        )
        .is_err());
        let g = Image::<f64>::new(11, 10, 1);
        assert!(defence_pipeline(&[f, g], &[m.clone(), m], 0, &p.0, &p.1, None).is_err());
    }
}
