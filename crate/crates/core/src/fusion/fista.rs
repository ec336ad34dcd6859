use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DefenceError, Result};
use crate::fusion::DegradationOperator;
use crate::imgcore::Image;
use crate::scalar::{dot, norm2, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FistaParams {
    /// Weight of the l1 prior.
    pub lambda: f64,
    /// Stop once `‖x_k − x_{k−1}‖₂` drops to this; `1e-4·√N` when absent.
    pub eps_stop: Option<f64>,
    pub max_iters: usize,
    /// Power-iteration rounds for the Lipschitz estimate.
    pub power_iters: usize,
    /// `α = step_safety / L̂`.
    pub step_safety: f64,
    pub seed: u64,
}

impl Default for FistaParams {
    fn default() -> Self {
        FistaParams {
            lambda: 0.0005,
            eps_stop: None,
            max_iters: 500,
            power_iters: 50,
            step_safety: 0.95,
            seed: 0,
        }
    }
}

impl FistaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DefenceError::param(
                "lambda",
                format!("{} is negative", self.lambda),
            ));
        }
        if let Some(e) = self.eps_stop {
            if !(e > 0.0) {
                return Err(DefenceError::param("eps_stop", "must be positive"));
            }
        }
        if self.max_iters == 0 {
            return Err(DefenceError::param("max_iters", "must be at least 1"));
        }
        if self.power_iters < 5 {
            return Err(DefenceError::param("power_iters", "must be at least 5"));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(DefenceError::param("step_safety", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn eps_for(&self, pixels: usize) -> f64 {
        self.eps_stop.unwrap_or(1e-4 * (pixels as f64).sqrt())
    }
}

/// `min_x Σ_m ‖O_m F_m x − y_m‖² + λ‖x‖₁`.
#[derive(Clone, Debug)]
pub struct FistaProblem<T> {
    pub observations: Vec<Image<T>>,
    pub ops: Vec<DegradationOperator<T>>,
    pub lambda: T,
    pub alpha: T,
    pub eps_stop: T,
    pub max_iters: usize,
}

impl<T: Scalar> FistaProblem<T> {
    pub fn new(
        observations: Vec<Image<T>>,
        ops: Vec<DegradationOperator<T>>,
        lambda: T,
        alpha: T,
        eps_stop: T,
        max_iters: usize,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(DefenceError::Precondition("no observations".into()));
        }
        if observations.len() != ops.len() {
            return Err(DefenceError::Dimension(format!(
                "{} observations for {} operators",
                observations.len(),
                ops.len()
            )));
        }
        let dims = ops[0].dims();
        let channels = observations[0].channels();
        for (y, op) in observations.iter().zip(&ops) {
            if y.dims() != dims || op.dims() != dims || y.channels() != channels {
                return Err(DefenceError::Dimension("observation sizes disagree".into()));
            }
        }
        if !(lambda >= T::zero()) {
            return Err(DefenceError::param("lambda", "must be non-negative"));
        }
        if !(alpha > T::zero()) {
            return Err(DefenceError::param("alpha", "must be positive"));
        }
        Ok(FistaProblem {
            observations,
            ops,
            lambda,
            alpha,
            eps_stop,
            max_iters,
        })
    }

    /// Builds the problem with the step taken from a power-iteration estimate.
    pub fn with_params(
        observations: Vec<Image<T>>,
        ops: Vec<DegradationOperator<T>>,
        params: &FistaParams,
    ) -> Result<Self> {
        params.validate()?;
        let alpha = estimate_step(&ops, params.power_iters, params.seed, params.step_safety)?;
        let (w, h) = ops.first().map(|o| o.dims()).unwrap_or((0, 0));
        let c = observations.first().map(|o| o.channels()).unwrap_or(1);
        Self::new(
            observations,
            ops,
            T::lit(params.lambda),
            alpha,
            T::lit(params.eps_for(w * h * c)),
            params.max_iters,
        )
    }

    pub fn data_term(&self, z: &Image<T>) -> Result<T> {
        let mut f = T::zero();
        for (y, op) in self.observations.iter().zip(&self.ops) {
            let az = op.apply(z)?;
            let support = op.support();
            let c = z.channels();
            for (i, (a, b)) in az.data().iter().zip(y.data()).enumerate() {
                if support.data()[i / c] {
                    let r = *a - *b;
                    f += r * r;
                }
            }
        }
        Ok(f)
    }

    pub fn objective(&self, z: &Image<T>) -> Result<T> {
        let l1: T = z.data().iter().map(|v| v.abs()).sum();
        Ok(self.data_term(z)? + self.lambda * l1)
    }
}

/// `∇f(z) = 2 Σ_m F_mᵀ O_mᵀ (O_m F_m z − y_m)`.
pub fn data_gradient<T: Scalar>(z: &Image<T>, prob: &FistaProblem<T>) -> Result<Image<T>> {
    let mut g = Image::new(z.width(), z.height(), z.channels());
    let two = T::lit(2.0);
    for (y, op) in prob.observations.iter().zip(&prob.ops) {
        let mut r = op.apply(z)?;
        // Rows outside the support are zero in `A z`; the adjoint ignores them.
        r.data_mut()
            .iter_mut()
            .zip(y.data())
            .for_each(|(a, b)| *a -= *b);
        let back = op.adjoint(&r)?;
        g.data_mut()
            .iter_mut()
            .zip(back.data())
            .for_each(|(g, b)| *g += two * *b);
    }
    Ok(g)
}

#[inline]
pub fn soft_threshold<T: Scalar>(v: T, threshold: T) -> T {
    let m = v.abs() - threshold;
    if m > T::zero() {
        m * v.signum()
    } else {
        T::zero()
    }
}

/// Elementwise `max(|x| − threshold, 0)·sign(x)`.
pub fn prox_l1<T: Scalar>(x: &Image<T>, threshold: T) -> Image<T> {
    assert!(threshold >= T::zero(), "threshold must be non-negative");
    x.map(|v| soft_threshold(v, threshold))
}

/// `t_{k+1} = (1 + √(1 + 4t_k²)) / 2`.
#[inline]
pub fn next_momentum<T: Scalar>(t: T) -> T {
    let four = T::lit(4.0);
    (T::one() + (T::one() + four * t * t).sqrt()) / T::lit(2.0)
}

fn normal_apply<T: Scalar>(ops: &[DegradationOperator<T>], v: &Image<T>) -> Result<Image<T>> {
    let mut out = Image::new(v.width(), v.height(), v.channels());
    let two = T::lit(2.0);
    for op in ops {
        let back = op.adjoint(&op.apply(v)?)?;
        out.data_mut()
            .iter_mut()
            .zip(back.data())
            .for_each(|(o, b)| *o += two * *b);
    }
    Ok(out)
}

/// Largest eigenvalue of `2 Σ FᵀOᵀOF` by power iteration from a seeded
/// random start.
pub fn estimate_lipschitz<T: Scalar>(
    ops: &[DegradationOperator<T>],
    iters: usize,
    seed: u64,
) -> Result<T> {
    let first = ops
        .first()
        .ok_or_else(|| DefenceError::Precondition("no operators".into()))?;
    if iters < 5 {
        return Err(DefenceError::param("power_iters", "must be at least 5"));
    }
    let (w, h) = first.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Image::from_fn(w, h, |_, _| T::lit(rng.random_range(-1.0..1.0)));
    let n = norm2(v.data());
    v.data_mut().iter_mut().for_each(|a| *a /= n);
    let mut estimate = T::zero();
    for _ in 0..iters {
        let hv = normal_apply(ops, &v)?;
        let rq = dot(v.data(), hv.data());
        estimate = estimate.max(rq);
        let n = norm2(hv.data());
        if n == T::zero() {
            break;
        }
        v = hv;
        v.data_mut().iter_mut().for_each(|a| *a /= n);
    }
    if estimate <= T::zero() {
        return Err(DefenceError::NoData(
            "every pixel of every observation is masked".into(),
        ));
    }
    Ok(estimate)
}

/// `α = safety / L̂`.
pub fn estimate_step<T: Scalar>(
    ops: &[DegradationOperator<T>],
    iters: usize,
    seed: u64,
    safety: f64,
) -> Result<T> {
    Ok(T::lit(safety) / estimate_lipschitz(ops, iters, seed)?)
}

#[derive(Clone, Debug)]
pub struct FistaState<T> {
    pub x_prev: Image<T>,
    pub x_curr: Image<T>,
    pub z: Image<T>,
    pub t: T,
    pub k: usize,
}

impl<T: Scalar> FistaState<T> {
    /// `z_1 = x_0`, `t_1 = 1`.
    pub fn new(x0: &Image<T>) -> Self {
        FistaState {
            x_prev: x0.clone(),
            x_curr: x0.clone(),
            z: x0.clone(),
            t: T::one(),
            k: 1,
        }
    }

    /// One proximal-gradient step with extrapolation; returns `‖x_k − x_{k−1}‖₂`.
    pub fn step(&mut self, prob: &FistaProblem<T>) -> Result<T> {
        let g = data_gradient(&self.z, prob)?;
        let mut v = self.z.clone();
        v.data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(v, g)| *v -= prob.alpha * *g);
        let x_new = prox_l1(&v, prob.lambda * prob.alpha);
        let t_next = next_momentum(self.t);
        let beta = (self.t - T::one()) / t_next;
        let mut z = x_new.clone();
        let mut diff = T::zero();
        for ((z, a), b) in z
            .data_mut()
            .iter_mut()
            .zip(x_new.data())
            .zip(self.x_curr.data())
        {
            let d = *a - *b;
            diff += d * d;
            *z += beta * d;
        }
        self.x_prev = std::mem::replace(&mut self.x_curr, x_new);
        self.z = z;
        self.t = t_next;
        self.k += 1;
        Ok(diff.sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct FistaOutcome<T> {
    pub x: Image<T>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_start: T,
    pub objective_end: T,
}

/// Runs the accelerated proximal-gradient iteration from `x0` until the
/// iterate change falls to `eps_stop` or `max_iters` is reached.
pub fn fista_defence<T: Scalar>(prob: &FistaProblem<T>, x0: &Image<T>) -> Result<FistaOutcome<T>> {
    let (w, h) = prob.ops[0].dims();
    if x0.dims() != (w, h) || x0.channels() != prob.observations[0].channels() {
        return Err(DefenceError::Dimension(
            "initial image does not match the problem".into(),
        ));
    }
    let objective_start = prob.objective(x0)?;
    let mut state = FistaState::new(x0);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < prob.max_iters {
        let change = state.step(prob)?;
        iterations += 1;
        if change <= prob.eps_stop {
            converged = true;
            break;
        }
    }
    let objective_end = prob.objective(&state.x_curr)?;
    Ok(FistaOutcome {
        x: state.x_curr,
        iterations,
        converged,
        objective_start,
        objective_end,
    })
}
