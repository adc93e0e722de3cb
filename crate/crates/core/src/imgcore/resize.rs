use super::Image;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    /// Top-left source pixel of each destination cell.
    Nearest,
    /// Half-pixel-centered bilinear, edges clamped.
    Bilinear,
}

pub fn resize(img: &Image, width: usize, height: usize, mode: ResizeMode) -> Result<Image> {
    ensure!(width >= 1 && height >= 1, "resize target must be at least 1x1, got {width}x{height}");
    if width == img.width() && height == img.height() {
        return Ok(img.clone());
    }
    Ok(match mode {
        ResizeMode::Nearest => nearest(img, width, height),
        ResizeMode::Bilinear => bilinear(img, width, height),
    })
}

fn nearest(img: &Image, width: usize, height: usize) -> Image {
    let (sw, sh) = (img.width(), img.height());
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let sy = y * sh / height;
        for x in 0..width {
            let sx = x * sw / width;
            data.extend_from_slice(&img.pixel(sx, sy));
        }
    }
    Image::from_raw_unchecked(width, height, img.space(), data)
}

/// Source taps `(i0, i1, frac)` for each destination index along one axis.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

fn bilinear(img: &Image, width: usize, height: usize) -> Image {
    Image::from_f64(width, height, img.space(), &bilinear_f64(img, width, height))
}

/// Bilinear resampling to `f64` planes without quantization, used by feature
/// extraction and zoom blur.
pub(crate) fn bilinear_f64(img: &Image, width: usize, height: usize) -> Vec<f64> {
    let xs = bilinear_taps(img.width(), width);
    let ys = bilinear_taps(img.height(), height);
    let sw = img.width();
    let src = img.data();
    let at = |x: usize, y: usize, c: usize| f64::from(src[(y * sw + x) * 3 + c]);
    let mut out = Vec::with_capacity(width * height * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
                let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::ColorSpace;

    fn checker() -> Image {
        Image::new(2, 2, ColorSpace::Rgb, vec![255, 255, 255, 0, 0, 0, 0, 0, 0, 255, 255, 255]).unwrap()
    }

    #[test]
    fn same_size_identity() {
        let img = checker();
        assert_eq!(resize(&img, 2, 2, ResizeMode::Nearest).unwrap(), img);
        assert_eq!(resize(&img, 2, 2, ResizeMode::Bilinear).unwrap(), img);
    }

    #[test]
    fn nearest_downsample_picks_top_left() {
        let out = resize(&checker(), 1, 1, ResizeMode::Nearest).unwrap();
        assert_eq!(out.pixel(0, 0), [255, 255, 255]);
    }

    #[test]
    fn single_pixel_upsample() {
        let img = Image::filled(1, 1, [9, 99, 199]);
        for mode in [ResizeMode::Nearest, ResizeMode::Bilinear] {
            let out = resize(&img, 4, 4, mode).unwrap();
            assert_eq!(out, Image::filled(4, 4, [9, 99, 199]));
        }
    }

    #[test]
    fn zero_target_rejected() {
        assert!(resize(&checker(), 0, 3, ResizeMode::Nearest).is_err());
    }

    #[test]
    fn bilinear_downsample_averages_pairs() {
        let img = Image::new(2, 1, ColorSpace::Rgb, vec![0, 0, 0, 100, 100, 100]).unwrap();
        let out = resize(&img, 1, 1, ResizeMode::Bilinear).unwrap();
        assert_eq!(out.pixel(0, 0), [50, 50, 50]);
    }
}
