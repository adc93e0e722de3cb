//! 8-bit three-channel rasters and the pixel primitives the perturbation
//! operators are built from: color conversion, separable convolution,
//! resampling and radial lens warping.

mod color;
mod filter;
pub mod io;
pub(crate) mod resize;
mod warp;

pub use color::{to_hsv, to_rgb};
pub use filter::{box_blur_horizontal, gaussian_blur, gaussian_kernel, kernel_size_for_sigma};
pub use resize::{resize, ResizeMode};
pub use warp::{radial_warp, CameraModel};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Rgb,
    /// OpenCV-style 8-bit HSV: H in half-degrees `[0, 179]`, S and V in `[0, 255]`.
    Hsv,
}

/// Largest legal hue value in an HSV image.
pub const HUE_MAX: u8 = 179;

/// Row-major, interleaved, three-channel 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    space: ColorSpace,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, space: ColorSpace, data: Vec<u8>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, "image dimensions must be nonzero, got {width}x{height}");
        ensure!(
            data.len() == width * height * 3,
            "data length {} does not match {width}x{height}x3",
            data.len()
        );
        if space == ColorSpace::Hsv {
            if let Some(h) = data.chunks_exact(3).map(|p| p[0]).find(|&h| h > HUE_MAX) {
                return Err(crate::Error::Contract(format!(
                    "HSV hue {h} outside [0, {HUE_MAX}]"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            space,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1);
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            space: ColorSpace::Rgb,
            data,
        }
    }

    /// Builds an image from per-pixel values in `[0, 255]`, rounding to nearest
    /// and clamping. This is the single quantization point for float pipelines.
    pub(crate) fn from_f64(width: usize, height: usize, space: ColorSpace, values: &[f64]) -> Self {
        debug_assert_eq!(values.len(), width * height * 3);
        let data = values.iter().map(|&v| quantize(v)).collect();
        Self {
            width,
            height,
            space,
            data,
        }
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, space: ColorSpace, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        Self {
            width,
            height,
            space,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub(crate) fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    /// Applies `f` to one channel plane in place.
    pub(crate) fn map_channel(&mut self, channel: usize, mut f: impl FnMut(u8) -> u8) {
        for px in self.data.chunks_exact_mut(3) {
            px[channel] = f(px[channel]);
        }
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
