//! Corruptions held out of training: simplified motion blur, zoom blur,
//! pixelation and fog.

use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::imgcore::{box_blur_horizontal, resize, ColorSpace, Image, ResizeMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnseenKind {
    MotionBlur,
    ZoomBlur,
    Pixelate,
    Fog,
}

impl UnseenKind {
    pub const ALL: [UnseenKind; 4] = [UnseenKind::MotionBlur, UnseenKind::ZoomBlur, UnseenKind::Pixelate, UnseenKind::Fog];

    pub fn name(self) -> &'static str {
        match self {
            UnseenKind::MotionBlur => "motion_blur",
            UnseenKind::ZoomBlur => "zoom_blur",
            UnseenKind::Pixelate => "pixelate",
            UnseenKind::Fog => "fog",
        }
    }

    /// The level-dependent parameter: box width, max zoom, block factor or haze weight.
    pub fn parameter(self, level: u8) -> Result<f64> {
        ensure!((1..=5).contains(&level), "unseen level must be 1..=5, got {level}");
        let i = usize::from(level) - 1;
        Ok(match self {
            UnseenKind::MotionBlur => [3.0, 7.0, 11.0, 15.0, 19.0][i],
            UnseenKind::ZoomBlur => [1.02, 1.04, 1.08, 1.12, 1.16][i],
            UnseenKind::Pixelate => [2.0, 3.0, 4.0, 6.0, 8.0][i],
            UnseenKind::Fog => [0.1, 0.2, 0.3, 0.4, 0.5][i],
        })
    }

    pub fn parameter_name(self) -> &'static str {
        match self {
            UnseenKind::MotionBlur => "width",
            UnseenKind::ZoomBlur => "max_zoom",
            UnseenKind::Pixelate => "factor",
            UnseenKind::Fog => "haze",
        }
    }
}

impl fmt::Display for UnseenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UnseenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "motion_blur" => Ok(UnseenKind::MotionBlur),
            "zoom_blur" => Ok(UnseenKind::ZoomBlur),
            "pixelate" => Ok(UnseenKind::Pixelate),
            "fog" => Ok(UnseenKind::Fog),
            "snow" | "frost" | "jpeg" | "jpeg_compression" => Err(Error::Unsupported(s.to_string())),
            _ => Err(Error::Parse(format!(
                "unknown unseen corruption {s:?}, expected motion_blur, zoom_blur, pixelate or fog"
            ))),
        }
    }
}

pub fn apply_unseen(img: &Image, kind: UnseenKind, level: u8) -> Result<Image> {
    let p = kind.parameter(level)?;
    match kind {
        UnseenKind::MotionBlur => box_blur_horizontal(img, p as usize),
        UnseenKind::ZoomBlur => zoom_blur(img, p),
        UnseenKind::Pixelate => pixelate(img, p as usize),
        UnseenKind::Fog => fog(img, p),
    }
}

/// Mean of five center-cropped upscalings with zoom factors spaced evenly in
/// `[1, max_zoom]`.
fn zoom_blur(img: &Image, max_zoom: f64) -> Result<Image> {
    const STEPS: usize = 5;
    let (w, h) = (img.width(), img.height());
    let mut acc = vec![0.0; w * h * 3];
    for s in 0..STEPS {
        let zoom = 1.0 + (max_zoom - 1.0) * s as f64 / (STEPS - 1) as f64;
        let zw = ((w as f64 * zoom).round() as usize).max(w);
        let zh = ((h as f64 * zoom).round() as usize).max(h);
        let scaled = crate::imgcore::resize::bilinear_f64(img, zw, zh);
        let (ox, oy) = ((zw - w) / 2, (zh - h) / 2);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    acc[(y * w + x) * 3 + c] += scaled[((y + oy) * zw + x + ox) * 3 + c];
                }
            }
        }
    }
    acc.iter_mut().for_each(|v| *v /= STEPS as f64);
    Ok(Image::from_f64(w, h, img.space(), &acc))
}

fn pixelate(img: &Image, factor: usize) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    let small = resize(img, (w / factor).max(1), (h / factor).max(1), ResizeMode::Nearest)?;
    resize(&small, w, h, ResizeMode::Nearest)
}

/// Blend toward white with a haze weight ramping from `0.5 t` at the bottom
/// row to `1.5 t` (capped at 1) at the top.
fn fog(img: &Image, t: f64) -> Result<Image> {
    ensure!(img.space() == ColorSpace::Rgb, "fog needs an RGB image");
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let from_top = if h > 1 { y as f64 / (h - 1) as f64 } else { 0.5 };
        let weight = (t * (1.5 - from_top)).min(1.0);
        for &v in &img.data()[y * w * 3..(y + 1) * w * 3] {
            out.push((1.0 - weight) * f64::from(v) + weight * 255.0);
        }
    }
    Ok(Image::from_f64(w, h, img.space(), &out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocky(block: usize, w: usize, h: usize) -> Image {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let b = ((x / block) * 31 + (y / block) * 67) % 256;
                data.extend_from_slice(&[b as u8, (255 - b) as u8, (b / 2) as u8]);
            }
        }
        Image::new(w, h, ColorSpace::Rgb, data).unwrap()
    }

    #[test]
    fn pixelate_fixed_point_on_blocks() {
        let img = blocky(2, 16, 8);
        assert_eq!(apply_unseen(&img, UnseenKind::Pixelate, 1).unwrap(), img);
        let img = blocky(8, 32, 16);
        assert_eq!(apply_unseen(&img, UnseenKind::Pixelate, 5).unwrap(), img);
    }

    #[test]
    fn pixelate_changes_detail() {
        let img = blocky(1, 16, 8);
        assert_ne!(apply_unseen(&img, UnseenKind::Pixelate, 2).unwrap(), img);
    }

    #[test]
    fn fog_white_fixed_point() {
        let img = Image::filled(10, 6, [255, 255, 255]);
        for level in 1..=5 {
            assert_eq!(apply_unseen(&img, UnseenKind::Fog, level).unwrap(), img);
        }
    }

    #[test]
    fn fog_ramps_toward_top() {
        let img = Image::filled(4, 11, [0, 0, 0]);
        let out = apply_unseen(&img, UnseenKind::Fog, 5).unwrap();
        // t = 0.5: bottom weight 0.25, top weight 0.75.
        assert_eq!(out.pixel(0, 10), [64, 64, 64]);
        assert_eq!(out.pixel(0, 0), [191, 191, 191]);
    }

    #[test]
    fn blurs_keep_constant_images() {
        let img = Image::filled(20, 10, [90, 10, 200]);
        for level in 1..=5 {
            assert_eq!(apply_unseen(&img, UnseenKind::MotionBlur, level).unwrap(), img);
            assert_eq!(apply_unseen(&img, UnseenKind::ZoomBlur, level).unwrap(), img);
        }
    }

    #[test]
    fn level_and_kind_errors() {
        let img = Image::filled(4, 4, [1, 2, 3]);
        assert!(apply_unseen(&img, UnseenKind::Fog, 0).is_err());
        assert!(apply_unseen(&img, UnseenKind::Fog, 6).is_err());
        assert!(matches!("snow".parse::<UnseenKind>(), Err(Error::Unsupported(_))));
        assert!(matches!("rain".parse::<UnseenKind>(), Err(Error::Parse(_))));
    }
}
