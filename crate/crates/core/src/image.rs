//! Dense single-channel rasters: grayscale images, disparity and depth maps.

use crate::error::{Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(ImageGray {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        ImageGray {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                pixels.push(f(u, v));
            }
        }
        ImageGray {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.pixels[v * self.width + u]
    }

    pub fn row(&self, v: usize) -> &[u8] {
        &self.pixels[v * self.width..(v + 1) * self.width]
    }
}

/// Marker stored for invalid disparities.
pub const INVALID_DISPARITY: f64 = -1.0;

/// Per-pixel disparity in pixels; negative values mark invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DisparityMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        DisparityMap {
            width,
            height,
            values: vec![INVALID_DISPARITY; width * height],
        }
    }

    /// Builds a map from raw values; NaN or negative entries become invalid.
    pub fn from_values(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        if width * height != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} disparity map needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        for d in &mut values {
            if !(d.is_finite() && *d >= 0.0) {
                *d = INVALID_DISPARITY;
            }
        }
        Ok(DisparityMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raw values with invalid pixels encoded as [`INVALID_DISPARITY`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let d = self.values[v * self.width + u];
        (d >= 0.0).then_some(d)
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: Option<f64>) {
        self.values[v * self.width + u] = match d {
            Some(d) if d.is_finite() && d >= 0.0 => d,
            _ => INVALID_DISPARITY,
        };
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|d| **d >= 0.0).count()
    }
}

/// Per-pixel camera-frame depth in meters; `0.0` marks invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// Builds a map from raw values; non-finite or nonpositive entries become invalid.
    pub fn from_values(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        if width * height != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} depth map needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        for z in &mut values {
            if !(z.is_finite() && *z > 0.0) {
                *z = 0.0;
            }
        }
        Ok(DepthMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raw values with invalid pixels encoded as `0.0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let z = self.values[v * self.width + u];
        (z > 0.0).then_some(z)
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, z: Option<f64>) {
        self.values[v * self.width + u] = match z {
            Some(z) if z.is_finite() && z > 0.0 => z,
            _ => 0.0,
        };
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|z| **z > 0.0).count()
    }
}
