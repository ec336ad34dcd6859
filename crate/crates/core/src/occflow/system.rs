use crate::imgcore::{image_gradients, warp_image, BinaryMask, FlowField, Image};
use crate::linalg::{conjugate_gradient, CgOutcome};
use crate::occflow::{phi, phi_prime, FlowParams};
use crate::scalar::Scalar;

/// Quantities fixed at one linearisation point `w`: the warped target, its
/// warped derivatives and the data-term selector.
#[derive(Clone, Debug)]
pub struct Linearization<T> {
    pub width: usize,
    pub height: usize,
    /// `F_w ỹ_t − ỹ_r`.
    pub residual: Vec<T>,
    /// Diagonal of `Y_x` (warped horizontal derivative).
    pub ix: Vec<T>,
    /// Diagonal of `Y_y`.
    pub iy: Vec<T>,
    /// 1 where the data term is active, 0 where `O` disables it.
    pub select: Vec<T>,
    pub u: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Linearization<T> {
    /// `O` marks pixels whose data term is switched off (fence, occluded or
    /// warped out of bounds).
    pub fn new(y_ref: &Image<T>, y_t: &Image<T>, w: &FlowField<T>, occluded: &BinaryMask) -> Self {
        assert_eq!(y_ref.channels(), 1, "flow works on grayscale images");
        assert_eq!(y_t.channels(), 1, "flow works on grayscale images");
        assert!(y_ref.same_size(y_t) && y_ref.dims() == w.dims() && w.dims() == occluded.dims());
        let (warped, invalid) = warp_image(y_t, w);
        let (gx, gy) = image_gradients(y_t);
        let (ix, _) = warp_image(&gx, w);
        let (iy, _) = warp_image(&gy, w);
        let residual = warped
            .data()
            .iter()
            .zip(y_ref.data())
            .map(|(a, b)| *a - *b)
            .collect();
        let select = occluded
            .data()
            .iter()
            .zip(invalid.data())
            .map(|(o, i)| if *o || *i { T::zero() } else { T::one() })
            .collect();
        Linearization {
            width: y_ref.width(),
            height: y_ref.height(),
            residual,
            ix: ix.into_vec(),
            iy: iy.into_vec(),
            select,
            u: w.u().to_vec(),
            v: w.v().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residual.is_empty()
    }

    /// Linearised residual `F_w ỹ_t + Y_x du + Y_y dv − ỹ_r`.
    fn linear_residual(&self, du: &[T], dv: &[T], p: usize) -> T {
        self.residual[p] + self.ix[p] * du[p] + self.iy[p] * dv[p]
    }

    /// `|∇(u+du)|² + |∇(v+dv)|²` per pixel, forward differences.
    fn flow_gradient_sq(&self, du: &[T], dv: &[T]) -> Vec<T> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![T::zero(); w * h];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let mut s = T::zero();
                for (f, d) in [(&self.u, du), (&self.v, dv)] {
                    let here = f[p] + d[p];
                    if x + 1 < w {
                        let g = f[p + 1] + d[p + 1] - here;
                        s += g * g;
                    }
                    if y + 1 < h {
                        let g = f[p + w] + d[p + w] - here;
                        s += g * g;
                    }
                }
                out[p] = s;
            }
        }
        out
    }

    /// Robust energy of the linearised problem at increment `(du, dv)`.
    pub fn energy(&self, du: &[T], dv: &[T], params: &FlowParams) -> T {
        let eps = T::lit(params.epsilon_phi);
        let mut e = T::zero();
        for p in 0..self.len() {
            let r = self.linear_residual(du, dv, p);
            e += self.select[p] * phi(r * r, eps);
        }
        let mu = T::lit(params.mu);
        for s in self.flow_gradient_sq(du, dv) {
            e += mu * phi(s, eps);
        }
        e
    }

    /// IRLS reweighting about the increment `(du, dv)`.
    pub fn reweight(&self, du: &[T], dv: &[T], params: &FlowParams) -> LinearizedSystem<T> {
        let eps = T::lit(params.epsilon_phi);
        let mu = T::lit(params.mu);
        let n = self.len();
        let wd: Vec<T> = (0..n)
            .map(|p| {
                let r = self.linear_residual(du, dv, p);
                phi_prime(r * r, eps)
            })
            .collect();
        let ws: Vec<T> = self
            .flow_gradient_sq(du, dv)
            .into_iter()
            .map(|s| phi_prime(s, eps))
            .collect();
        let data_weight: Vec<T> = wd.iter().zip(&self.select).map(|(w, s)| *w * *s).collect();

        let mut sys = LinearizedSystem {
            width: self.width,
            height: self.height,
            ix: self.ix.clone(),
            iy: self.iy.clone(),
            select: self.select.clone(),
            wd,
            ws,
            data_weight,
            mu,
            rhs: vec![T::zero(); 2 * n],
        };
        let mut lu = vec![T::zero(); n];
        let mut lv = vec![T::zero(); n];
        sys.apply_smoothness(&self.u, &mut lu);
        sys.apply_smoothness(&self.v, &mut lv);
        for p in 0..n {
            let dw = sys.data_weight[p] * self.residual[p];
            sys.rhs[p] = -mu * lu[p] - dw * self.ix[p];
            sys.rhs[n + p] = -mu * lv[p] - dw * self.iy[p];
        }
        sys
    }
}

/// The 2×2 block normal equations for the increment `[du; dv]`:
///
/// ```text
/// [ YxᵀOᵀWdOYx + μL   YxᵀOᵀWdOYy      ] [du]   [ −μLu − YxᵀOᵀWdO(F_w ỹ_t − ỹ_r) ]
/// [ YyᵀOᵀWdOYx        YyᵀOᵀWdOYy + μL ] [dv] = [ −μLv − YyᵀOᵀWdO(F_w ỹ_t − ỹ_r) ]
/// ```
///
/// with `L = DxᵀWsDx + DyᵀWsDy`. Applied matrix-free.
#[derive(Clone, Debug)]
pub struct LinearizedSystem<T> {
    pub width: usize,
    pub height: usize,
    pub ix: Vec<T>,
    pub iy: Vec<T>,
    pub select: Vec<T>,
    /// `φ'(r²)` per pixel.
    pub wd: Vec<T>,
    /// `φ'(|∇u|² + |∇v|²)` per pixel.
    pub ws: Vec<T>,
    /// `OᵀWdO` diagonal, i.e. `select · wd`.
    pub data_weight: Vec<T>,
    pub mu: T,
    /// Stacked `[rhs_u; rhs_v]`.
    pub rhs: Vec<T>,
}

impl<T: Scalar> LinearizedSystem<T> {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// `out = L f` with forward differences weighted by `Ws`.
    pub fn apply_smoothness(&self, f: &[T], out: &mut [T]) {
        let (w, h) = (self.width, self.height);
        out.iter_mut().for_each(|o| *o = T::zero());
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if x + 1 < w {
                    let g = self.ws[p] * (f[p + 1] - f[p]);
                    out[p] -= g;
                    out[p + 1] += g;
                }
                if y + 1 < h {
                    let g = self.ws[p] * (f[p + w] - f[p]);
                    out[p] -= g;
                    out[p + w] += g;
                }
            }
        }
    }

    /// `out = A [du; dv]`.
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        let n = self.pixels();
        let (du, dv) = x.split_at(n);
        let (ou, ov) = out.split_at_mut(n);
        self.apply_smoothness(du, ou);
        self.apply_smoothness(dv, ov);
        for p in 0..n {
            let (a, b) = (self.ix[p], self.iy[p]);
            let d = self.data_weight[p];
            ou[p] = self.mu * ou[p] + d * (a * a * du[p] + a * b * dv[p]);
            ov[p] = self.mu * ov[p] + d * (a * b * du[p] + b * b * dv[p]);
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        let (w, h) = (self.width, self.height);
        let n = self.pixels();
        let mut ldiag = vec![T::zero(); n];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if x + 1 < w {
                    ldiag[p] += self.ws[p];
                    ldiag[p + 1] += self.ws[p];
                }
                if y + 1 < h {
                    ldiag[p] += self.ws[p];
                    ldiag[p + w] += self.ws[p];
                }
            }
        }
        let mut d = vec![T::zero(); 2 * n];
        for p in 0..n {
            let dw = self.data_weight[p];
            d[p] = self.mu * ldiag[p] + dw * self.ix[p] * self.ix[p];
            d[n + p] = self.mu * ldiag[p] + dw * self.iy[p] * self.iy[p];
        }
        d
    }
}

/// The increment and how the solver fared.
#[derive(Clone, Debug)]
pub struct Increment<T> {
    pub du: Vec<T>,
    pub dv: Vec<T>,
    pub iterations: usize,
    pub rel_residual: T,
    pub converged: bool,
}

/// CG on the block system, warm-started from `start` when given.
pub fn solve_increment<T: Scalar>(
    sys: &LinearizedSystem<T>,
    params: &FlowParams,
    start: Option<(&[T], &[T])>,
) -> Increment<T> {
    let n = sys.pixels();
    let x0 = match start {
        Some((du, dv)) => du.iter().chain(dv).copied().collect(),
        None => vec![T::zero(); 2 * n],
    };
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
    let CgOutcome {
        x,
        iterations,
        rel_residual,
        converged,
    } = conjugate_gradient(
        |a, o| sys.apply(a, o),
        Some(&inv_diag),
        &sys.rhs,
        x0,
        T::lit(params.cg_tol),
        params.cg_iters,
    );
    let (du, dv) = x.split_at(n);
    Increment {
        du: du.to_vec(),
        dv: dv.to_vec(),
        iterations,
        rel_residual,
        converged,
    }
}

/// Linearises at `w` and reweights at zero increment.
pub fn build_system<T: Scalar>(
    y_ref: &Image<T>,
    y_t: &Image<T>,
    w: &FlowField<T>,
    occluded: &BinaryMask,
    params: &FlowParams,
) -> LinearizedSystem<T> {
    let lin = Linearization::new(y_ref, y_t, w, occluded);
    let zero = vec![T::zero(); lin.len()];
    lin.reweight(&zero, &zero, params)
}
