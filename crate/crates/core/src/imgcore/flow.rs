use crate::error::{DefenceError, Result};
use crate::scalar::Scalar;

/// Dense displacement field `w = [u, v]` in pixels.
///
/// Convention: for a pair `(reference, target)` the flow satisfies
/// `reference(p) ≈ target(p + w(p))`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField<T> {
    width: usize,
    height: usize,
    u: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, T::zero(), T::zero())
    }

    pub fn uniform(width: usize, height: usize, u: T, v: T) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn from_vecs(width: usize, height: usize, u: Vec<T>, v: Vec<T>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(DefenceError::Dimension(format!(
                "flow components of length {}/{} for {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(DefenceError::Precondition(
                "non-finite flow component".into(),
            ));
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (T, T)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        FlowField {
            width,
            height,
            u,
            v,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn u(&self) -> &[T] {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &[T] {
        &self.v
    }

    #[inline]
    pub fn u_mut(&mut self) -> &mut [T] {
        &mut self.u
    }

    #[inline]
    pub fn v_mut(&mut self) -> &mut [T] {
        &mut self.v
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (T, T) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Adds an increment in place.
    pub fn add_assign(&mut self, du: &[T], dv: &[T]) {
        assert_eq!(du.len(), self.u.len());
        assert_eq!(dv.len(), self.v.len());
        for (a, d) in self.u.iter_mut().zip(du) {
            *a += *d;
        }
        for (a, d) in self.v.iter_mut().zip(dv) {
            *a += *d;
        }
    }

    pub fn negated(&self) -> FlowField<T> {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|x| -*x).collect(),
            v: self.v.iter().map(|x| -*x).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> FlowField<U> {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|x| U::lit(x.as_f64())).collect(),
            v: self.v.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.u
            .iter()
            .chain(&self.v)
            .fold(T::zero(), |m, x| m.max(x.abs()))
    }
}
