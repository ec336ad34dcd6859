use crate::error::{DefenceError, Result};
use crate::fenceseg::{Label, Trimap};
use crate::imgcore::{BinaryMask, Image};
use crate::linalg::conjugate_gradient;
use crate::scalar::Scalar;

/// Produces an alpha map in `[0, 1]` from an image and scribbles.
pub trait AlphaSolver<T: Scalar>: Sync {
    fn solve(&self, img: &Image<T>, trimap: &Trimap) -> Result<Image<T>>;
}

/// Scribble-constrained graph-Laplacian matting on the 4-connected grid.
///
/// Minimises `Σ a_pq (α_p − α_q)² + λ_s Σ_scribbled (α_p − s_p)²` with colour
/// affinities `a_pq = exp(−‖I_p − I_q‖² / 2σ_c²)`, solved by
/// Jacobi-preconditioned CG from the trimap initialisation.
#[derive(Clone, Debug)]
pub struct LaplacianMatting {
    pub lambda_s: f64,
    pub sigma_c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LaplacianMatting {
    fn default() -> Self {
        LaplacianMatting {
            lambda_s: 100.0,
            sigma_c: 0.1,
            tol: 1e-6,
            max_iter: 5000,
        }
    }
}

/// The matting problem in operator form, exposed for energy checks.
pub struct MattingSystem<T> {
    width: usize,
    height: usize,
    /// Affinity to the right neighbour (0 on the last column).
    right: Vec<T>,
    /// Affinity to the neighbour below (0 on the last row).
    down: Vec<T>,
    /// `λ_s` on scribbled pixels, 0 elsewhere.
    constraint: Vec<T>,
    /// Scribble value: 1 foreground, 0 otherwise.
    target: Vec<T>,
}

impl<T: Scalar> MattingSystem<T> {
    pub fn new(img: &Image<T>, trimap: &Trimap, lambda_s: f64, sigma_c: f64) -> Self {
        assert_eq!(
            img.dims(),
            trimap.dims(),
            "trimap and image dimensions differ"
        );
        let (w, h, c) = (img.width(), img.height(), img.channels());
        let inv = T::lit(1.0 / (2.0 * sigma_c * sigma_c));
        let affinity = |p: usize, q: usize| {
            let mut d2 = T::zero();
            for ch in 0..c {
                let d = img.data()[p * c + ch] - img.data()[q * c + ch];
                d2 += d * d;
            }
            (-d2 * inv).exp()
        };
        let mut right = vec![T::zero(); w * h];
        let mut down = vec![T::zero(); w * h];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if x + 1 < w {
                    right[p] = affinity(p, p + 1);
                }
                if y + 1 < h {
                    down[p] = affinity(p, p + w);
                }
            }
        }
        let ls = T::lit(lambda_s);
        let constraint = trimap
            .labels()
            .iter()
            .map(|l| if *l == Label::Unknown { T::zero() } else { ls })
            .collect();
        let target = trimap
            .labels()
            .iter()
            .map(|l| {
                if *l == Label::Foreground {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect();
        MattingSystem {
            width: w,
            height: h,
            right,
            down,
            constraint,
            target,
        }
    }

    /// `(L + λ_s S) α`.
    pub fn apply(&self, a: &[T], out: &mut [T]) {
        let w = self.width;
        for (o, (x, k)) in out.iter_mut().zip(a.iter().zip(&self.constraint)) {
            *o = *k * *x;
        }
        for p in 0..a.len() {
            let r = self.right[p];
            if r != T::zero() {
                let d = r * (a[p] - a[p + 1]);
                out[p] += d;
                out[p + 1] -= d;
            }
            let dn = self.down[p];
            if dn != T::zero() {
                let d = dn * (a[p] - a[p + w]);
                out[p] += d;
                out[p + w] -= d;
            }
        }
    }

    pub fn rhs(&self) -> Vec<T> {
        self.constraint
            .iter()
            .zip(&self.target)
            .map(|(k, t)| *k * *t)
            .collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        let w = self.width;
        let mut d = self.constraint.clone();
        for p in 0..d.len() {
            d[p] += self.right[p] + self.down[p];
            if p % w > 0 {
                d[p] += self.right[p - 1];
            }
            if p >= w {
                d[p] += self.down[p - w];
            }
        }
        d
    }

    /// The matting energy at `a`.
    pub fn energy(&self, a: &[T]) -> T {
        let w = self.width;
        let mut e = T::zero();
        for p in 0..a.len() {
            if p % w + 1 < w {
                let d = a[p] - a[p + 1];
                e += self.right[p] * d * d;
            }
            if p + w < a.len() {
                let d = a[p] - a[p + w];
                e += self.down[p] * d * d;
            }
            let d = a[p] - self.target[p];
            e += self.constraint[p] * d * d;
        }
        e
    }

    /// Starting point: scribble values, unknown pixels at 0.
    pub fn initial(&self) -> Vec<T> {
        self.target.clone()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl<T: Scalar> AlphaSolver<T> for LaplacianMatting {
    fn solve(&self, img: &Image<T>, trimap: &Trimap) -> Result<Image<T>> {
        let fg = trimap.count(Label::Foreground);
        let bg = trimap.count(Label::Background);
        if fg == 0 || bg == 0 {
            return Err(DefenceError::Precondition(format!(
                "matting needs both scribble kinds (fg {fg}, bg {bg})"
            )));
        }
        let sys = MattingSystem::new(img, trimap, self.lambda_s, self.sigma_c);
        let inv_diag: Vec<T> = sys
            .diagonal()
            .into_iter()
            .map(|d| {
                if d > T::zero() {
                    T::one() / d
                } else {
                    T::one()
                }
            })
            .collect();
        let out = conjugate_gradient(
            |a, o| sys.apply(a, o),
            Some(&inv_diag),
            &sys.rhs(),
            sys.initial(),
            T::lit(self.tol),
            self.max_iter,
        );
        if !out.converged {
            log::warn!(
                "matting CG stopped after {} iterations at relative residual {:.3e}",
                out.iterations,
                out.rel_residual.as_f64()
            );
        }
        let (w, h) = sys.dims();
        let alpha = out
            .x
            .into_iter()
            .map(|a| a.max(T::zero()).min(T::one()))
            .collect();
        Image::from_vec(w, h, 1, alpha)
    }
}

/// Convenience wrapper over the default solver.
pub fn solve_alpha<T: Scalar>(img: &Image<T>, trimap: &Trimap, lambda_s: f64) -> Result<Image<T>> {
    LaplacianMatting {
        lambda_s,
        ..LaplacianMatting::default()
    }
    .solve(img, trimap)
}

/// `true` where `alpha ≥ tau`.
pub fn threshold_alpha<T: Scalar>(alpha: &Image<T>, tau: f64) -> Result<BinaryMask> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(DefenceError::param("tau", format!("{tau} outside (0, 1)")));
    }
    let t = T::lit(tau);
    BinaryMask::from_vec(
        alpha.width(),
        alpha.height(),
        (0..alpha.pixel_count())
            .map(|i| alpha.data()[i * alpha.channels()] >= t)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn dense_solution(sys: &MattingSystem<f64>, n: usize) -> Vec<f64> {
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            sys.apply(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        let b = DVector::from_vec(sys.rhs());
        m.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn uniform_image_matches_dense_oracle() {
        let img = Image::filled(8, 8, 1, 0.5);
        let mut t = Trimap::new(8, 8);
        t.set(1, 1, Label::Foreground);
        t.set(6, 5, Label::Background);
        let alpha: Image<f64> = solve_alpha(&img, &t, 100.0).unwrap();
        let sys = MattingSystem::new(&img, &t, 100.0, 0.1);
        let want = dense_solution(&sys, 64);
        for (a, b) in alpha.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        assert!((alpha.at(1, 1) - 1.0).abs() < 1e-2);
        assert!(alpha.at(6, 5) < 1e-2);
        // harmonic: values decrease monotonically along the row through the fg scribble
        assert!(alpha.at(2, 1) > alpha.at(4, 1) && alpha.at(4, 1) > alpha.at(7, 1));
    }

    #[test]
    fn scribbled_pixels_follow_labels_with_strong_weight() {
        let img = Image::from_fn(8, 8, |x, y| ((x + y) % 3) as f64 * 0.3);
        let mut t = Trimap::new(8, 8);
        for y in 0..8 {
            t.set(0, y, Label::Foreground);
            t.set(7, y, Label::Background);
        }
        let alpha: Image<f64> = solve_alpha(&img, &t, 100.0).unwrap();
        for y in 0..8 {
            assert!((alpha.at(0, y) - 1.0).abs() < 1e-2);
            assert!(alpha.at(7, y) < 1e-2);
        }
        assert!(alpha.data().iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn single_unknown_in_foreground_sea_goes_to_one() {
        let img = Image::filled(6, 6, 3, 0.2);
        let mut t = Trimap::new(6, 6);
        for y in 0..6 {
            for x in 0..6 {
                t.set(x, y, Label::Foreground);
            }
        }
        t.set(3, 3, Label::Unknown);
        t.set(0, 5, Label::Background);
        let alpha: Image<f64> = solve_alpha(&img, &t, 100.0).unwrap();
        assert!((alpha.at(3, 3) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cg_lowers_energy_from_trimap_start() {
        let img = Image::from_fn(16, 12, |x, y| ((x * 7 + y * 3) % 10) as f64 / 10.0);
        let mut t = Trimap::new(16, 12);
        t.set(2, 2, Label::Foreground);
        t.set(3, 2, Label::Foreground);
        t.set(13, 9, Label::Background);
        let sys = MattingSystem::new(&img, &t, 100.0, 0.1);
        let alpha: Image<f64> = solve_alpha(&img, &t, 100.0).unwrap();
        assert!(sys.energy(alpha.data()) <= sys.energy(&sys.initial()));
    }

    #[test]
    fn missing_scribbles_is_an_error() {
        let img = Image::<f64>::new(4, 4, 1);
        let mut t = Trimap::new(4, 4);
        t.set(0, 0, Label::Foreground);
        assert!(solve_alpha(&img, &t, 100.0).is_err());
    }

    #[test]
    fn threshold_cases() {
        let zeros = Image::<f64>::new(4, 4, 1);
        assert!(threshold_alpha(&zeros, 0.5).unwrap().is_clear());
        let ones = Image::<f64>::filled(4, 4, 1, 1.0);
        assert_eq!(threshold_alpha(&ones, 0.5).unwrap().count(), 16);
        let checker = Image::from_fn(6, 6, |x, y| if (x + y) % 2 == 0 { 0.51 } else { 0.49 });
        let m = threshold_alpha(&checker, 0.5).unwrap();
        assert_eq!(m, BinaryMask::from_fn(6, 6, |x, y| (x + y) % 2 == 0));
        assert!(threshold_alpha(&ones, 1.0).is_err());
    }
}
