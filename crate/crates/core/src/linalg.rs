//! Matrix-free conjugate gradient shared by the matting and flow solvers.

use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖` of the returned iterate.
    pub rel_residual: T,
    pub converged: bool,
}

/// Jacobi-preconditioned CG for a symmetric positive (semi-)definite operator.
///
/// `apply(x, out)` must write `A x` into `out`. `inv_diag`, when given, is the
/// elementwise inverse of `diag(A)`. On non-convergence the iterate with the
/// smallest recorded residual is returned and `converged` is false.
pub fn conjugate_gradient<T: Scalar>(
    apply: impl Fn(&[T], &mut [T]),
    inv_diag: Option<&[T]>,
    b: &[T],
    x0: Vec<T>,
    tol: T,
    max_iter: usize,
) -> CgOutcome<T> {
    let n = b.len();
    assert_eq!(x0.len(), n);
    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        return CgOutcome {
            x: vec![T::zero(); n],
            iterations: 0,
            rel_residual: T::zero(),
            converged: true,
        };
    }

    let precondition = |r: &[T], z: &mut [T]| match inv_diag {
        Some(d) => z
            .iter_mut()
            .zip(r)
            .zip(d)
            .for_each(|((z, r), d)| *z = *r * *d),
        None => z.copy_from_slice(r),
    };

    let mut x = x0;
    let mut ax = vec![T::zero(); n];
    apply(&x, &mut ax);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(b, a)| *b - *a).collect();
    let mut z = vec![T::zero(); n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];

    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut best = (res, x.clone());
    let mut iterations = 0;
    while res > tol && iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        iterations += 1;
        res = dot(&r, &r).sqrt() / b_norm;
        if res < best.0 {
            best.0 = res;
            best.1.copy_from_slice(&x);
        }
        if res <= tol {
            break;
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    if res <= tol {
        CgOutcome {
            x,
            iterations,
            rel_residual: res,
            converged: true,
        }
    } else {
        CgOutcome {
            x: best.1,
            iterations,
            rel_residual: best.0,
            converged: false,
        }
    }
}
