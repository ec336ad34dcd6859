use serde::Serialize;

use crate::error::{DefenceError, Result};
use crate::imgcore::{BinaryMask, FlowField, Image};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Harmonic mean `2PR / (P + R)`, 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn prf_from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    Prf {
        precision,
        recall,
        f: f_measure(precision, recall),
    }
}

/// Greedy one-to-one matching in order of increasing distance; a pair
/// counts only when it lies within `radius`.
pub fn match_points(pred: &[(f64, f64)], gt: &[(f64, f64)], radius: f64) -> usize {
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = (p.0 - g.0).hypot(p.1 - g.1);
            if d <= radius {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            tp += 1;
        }
    }
    tp
}

pub fn detection_fmeasure(pred: &[(f64, f64)], gt: &[(f64, f64)], radius: f64) -> Result<Prf> {
    if !(radius > 0.0) {
        return Err(DefenceError::param("radius", "must be positive"));
    }
    let tp = match_points(pred, gt, radius);
    Ok(prf_from_counts(tp, pred.len() - tp, gt.len() - tp))
}

pub fn mask_fmeasure(pred: &BinaryMask, gt: &BinaryMask) -> Result<Prf> {
    if pred.dims() != gt.dims() {
        return Err(DefenceError::Dimension("mask sizes differ".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.data().iter().zip(gt.data()) {
        match (*p, *g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(prf_from_counts(tp, fp, fn_))
}

/// Mean endpoint error over pixels not in `exclude`.
pub fn endpoint_error<T: Scalar>(
    pred: &FlowField<T>,
    gt: &FlowField<T>,
    exclude: Option<&BinaryMask>,
) -> Result<f64> {
    if pred.dims() != gt.dims() || exclude.is_some_and(|m| m.dims() != pred.dims()) {
        return Err(DefenceError::Dimension("flow sizes differ".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.u().len() {
        if exclude.is_some_and(|m| m.data()[i]) {
            continue;
        }
        let du = (pred.u()[i] - gt.u()[i]).as_f64();
        let dv = (pred.v()[i] - gt.v()[i]).as_f64();
        sum += du.hypot(dv);
        n += 1;
    }
    if n == 0 {
        return Err(DefenceError::NoData(
            "every pixel excluded from the EPE".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// `10 log10(1 / MSE)` over `region` (all pixels when `None`); `+∞` when the
/// images agree exactly.
pub fn psnr<T: Scalar>(pred: &Image<T>, gt: &Image<T>, region: Option<&BinaryMask>) -> Result<f64> {
    if pred.dims() != gt.dims() || pred.channels() != gt.channels() {
        return Err(DefenceError::Dimension("image sizes differ".into()));
    }
    if region.is_some_and(|m| m.dims() != pred.dims()) {
        return Err(DefenceError::Dimension("region size differs".into()));
    }
    let c = pred.channels();
    let mut sse = 0.0;
    let mut n = 0usize;
    for p in 0..pred.pixel_count() {
        if region.is_some_and(|m| !m.data()[p]) {
            continue;
        }
        for ch in 0..c {
            let d = (pred.data()[p * c + ch] - gt.data()[p * c + ch]).as_f64();
            sse += d * d;
        }
        n += c;
    }
    if n == 0 {
        return Err(DefenceError::NoData("empty PSNR region".into()));
    }
    let mse = sse / n as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::dilate;
    use crate::synthbench::{lattice_alpha, LatticeSpec};

    #[test]
    fn table_arithmetic() {
        assert!((f_measure(0.96, 0.98) - 0.9699).abs() < 1e-4);
        assert!((f_measure(0.95, 0.46) - 0.6199).abs() < 1e-4);
        assert_eq!(f_measure(0.0, 0.0), 0.0);
    }

    #[test]
    fn f_measure_is_symmetric() {
        for (p, r) in [(0.3, 0.9), (0.5, 0.51), (1.0, 0.2)] {
            assert_eq!(f_measure(p, r), f_measure(r, p));
            let a = prf_from_counts(30, 10, 70);
            let b = prf_from_counts(30, 70, 10);
            assert_eq!(a.precision, b.recall);
            assert_eq!(a.f, b.f);
        }
    }

    #[test]
    fn perfect_detection() {
        let gt = vec![(10.0, 10.0), (50.0, 10.0), (10.0, 50.0)];
        let m = detection_fmeasure(&gt, &gt, 5.0).unwrap();
        assert_eq!((m.precision, m.recall, m.f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn matching_is_one_to_one() {
        let gt = vec![(0.0, 0.0)];
        let pred = vec![(1.0, 0.0), (0.0, 2.0), (30.0, 0.0)];
        let m = detection_fmeasure(&pred, &gt, 5.0).unwrap();
        assert_eq!(m.recall, 1.0);
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!(detection_fmeasure(&pred, &gt, 0.0).is_err());
    }

    #[test]
    fn mask_scores() {
        let gt = BinaryMask::from_fn(10, 10, |x, _| x < 3);
        let m = mask_fmeasure(&gt, &gt).unwrap();
        assert_eq!((m.precision, m.recall, m.f), (1.0, 1.0, 1.0));
        let m = mask_fmeasure(&BinaryMask::new(10, 10), &gt).unwrap();
        assert_eq!((m.precision, m.recall, m.f), (0.0, 0.0, 0.0));
    }

    #[test]
    fn dilated_lattice_precision_by_counting() {
        let l = LatticeSpec {
            spacing: 40.0,
            thickness: 2.0,
            origin: [20.5, 20.5],
            ..LatticeSpec::default()
        };
        let alpha = lattice_alpha(&l, 160, 120);
        let gt = BinaryMask::from_fn(160, 120, |x, y| alpha.at(x, y) >= 0.5);
        let pred = dilate(&gt, 1);
        let m = mask_fmeasure(&pred, &gt).unwrap();
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, gt.count() as f64 / pred.count() as f64);
        // wires of width 2 become width 4 after a unit dilation, so the
        // ratio is close to one half
        assert!((m.precision - 0.5).abs() < 0.05, "{}", m.precision);
    }

    #[test]
    fn epe_cases() {
        let gt = FlowField::<f64>::uniform(8, 6, 3.0, -2.0);
        assert_eq!(endpoint_error(&gt, &gt, None).unwrap(), 0.0);
        let shifted = FlowField::uniform(8, 6, 4.0, -2.0);
        assert!((endpoint_error(&shifted, &gt, None).unwrap() - 1.0).abs() < 1e-12);
        let zero = FlowField::zeros(8, 6);
        assert!((endpoint_error(&zero, &gt, None).unwrap() - 13f64.sqrt()).abs() < 1e-12);
        let all = BinaryMask::filled(8, 6, true);
        assert!(endpoint_error(&zero, &gt, Some(&all)).is_err());
    }

    #[test]
    fn psnr_cases() {
        let gt = Image::<f64>::filled(5, 5, 3, 0.5);
        assert_eq!(psnr(&gt, &gt, None).unwrap(), f64::INFINITY);
        let off = gt.map(|v| v + 0.1);
        assert!((psnr(&off, &gt, None).unwrap() - 20.0).abs() < 1e-9);
        let off = gt.map(|v| v - 0.01);
        assert!((psnr(&off, &gt, None).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&off, &gt, Some(&BinaryMask::new(5, 5))).is_err());
    }
}
