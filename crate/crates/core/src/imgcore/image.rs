use crate::error::{DefenceError, Result};
use crate::scalar::Scalar;

/// Row-major raster with 1 or 3 interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, T::zero())
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(DefenceError::param(
                "channels",
                format!("{channels} is not 1 or 3"),
            ));
        }
        if data.len() != width * height * channels {
            return Err(DefenceError::Dimension(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DefenceError::Precondition("non-finite intensity".into()));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image evaluated per pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            channels: 1,
            data,
        }
    }

    /// Stacks single-channel planes into one interleaved image.
    pub fn from_channels(planes: &[Image<T>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| DefenceError::Precondition("no channel planes".into()))?;
        if planes.len() != 1 && planes.len() != 3 {
            return Err(DefenceError::param(
                "channels",
                format!("{} planes", planes.len()),
            ));
        }
        for p in planes {
            if p.channels != 1 || !p.same_size(first) {
                return Err(DefenceError::Dimension("channel planes disagree".into()));
            }
        }
        let c = planes.len();
        let mut data = Vec::with_capacity(first.pixel_count() * c);
        for i in 0..first.pixel_count() {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        Ok(Image {
            width: first.width,
            height: first.height,
            channels: c,
            data,
        })
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
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn same_size(&self, other: &Image<T>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    /// Channel 0 at `(x, y)`; the usual accessor for grayscale rasters.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[(y * self.width + x) * self.channels]
    }

    /// Reads with coordinates clamped into the raster (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> T {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc, c)
    }

    pub fn channel(&self, c: usize) -> Image<T> {
        assert!(c < self.channels);
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn split_channels(&self) -> Vec<Image<T>> {
        (0..self.channels).map(|c| self.channel(c)).collect()
    }

    /// Luma with Rec. 601 weights; single-channel input is returned as is.
    pub fn to_gray(&self) -> Image<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Image<T> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn clamp01(&self) -> Image<T> {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.data.iter().copied().sum::<T>() / T::from_usize_lossy(self.data.len())
    }
}
