use super::Image;
use crate::error::{ensure, Result};

/// Odd kernel size `k` for a Gaussian standard deviation, inverting
/// `sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8` and rounding to the nearest odd
/// integer (minimum 1).
pub fn kernel_size_for_sigma(sigma: f64) -> usize {
    if sigma <= 0.0 {
        return 1;
    }
    let half = ((sigma - 0.8) / 0.3 + 1.0).round();
    if half < 1.0 {
        1
    } else {
        2 * half as usize + 1
    }
}

/// Normalized 1-D Gaussian taps (length `kernel_size_for_sigma(sigma)`).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let size = kernel_size_for_sigma(sigma);
    if size == 1 {
        return vec![1.0];
    }
    let radius = (size / 2) as f64;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - radius;
            (-x * x / denom).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Mirror index into `[0, n)` without repeating the edge sample
/// (`dcb|abcd|cba`). Handles offsets larger than the signal.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Separable Gaussian blur with mirrored borders. Channels are filtered
/// independently in float and quantized once.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    ensure!(sigma >= 0.0 && sigma.is_finite(), "blur sigma must be >= 0, got {sigma}");
    let taps = gaussian_kernel(sigma);
    if taps.len() == 1 {
        return Ok(img.clone());
    }
    let values = img.to_f64();
    let horiz = convolve_rows(&values, img.width(), img.height(), &taps);
    let both = convolve_cols(&horiz, img.width(), img.height(), &taps);
    Ok(Image::from_f64(img.width(), img.height(), img.space(), &both))
}

/// Horizontal box filter of odd `width`; the motion-blur primitive.
pub fn box_blur_horizontal(img: &Image, width: usize) -> Result<Image> {
    ensure!(width % 2 == 1, "box width must be odd, got {width}");
    if width == 1 {
        return Ok(img.clone());
    }
    let taps = vec![1.0 / width as f64; width];
    let out = convolve_rows(&img.to_f64(), img.width(), img.height(), &taps);
    Ok(Image::from_f64(img.width(), img.height(), img.space(), &out))
}

fn convolve_rows(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        let row = &src[y * w * 3..(y + 1) * w * 3];
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (t, &tap) in taps.iter().enumerate() {
                let sx = reflect(x as isize + t as isize - radius, w);
                for c in 0..3 {
                    acc[c] += tap * row[sx * 3 + c];
                }
            }
            out[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for (t, &tap) in taps.iter().enumerate() {
            let sy = reflect(y as isize + t as isize - radius, h);
            let src_row = &src[sy * w * 3..(sy + 1) * w * 3];
            let dst_row = &mut out[y * w * 3..(y + 1) * w * 3];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += tap * s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::ColorSpace;

    #[test]
    fn published_sigma_kernel_pairs() {
        for (sigma, k) in [(1.4, 7), (2.9, 17), (5.9, 37), (10.4, 67), (16.4, 107)] {
            assert_eq!(kernel_size_for_sigma(sigma), k, "sigma {sigma}");
        }
        assert_eq!(kernel_size_for_sigma(0.0), 1);
    }

    #[test]
    fn kernel_normalized_and_nonnegative() {
        for sigma in [0.5, 1.4, 3.0, 16.4, 35.0] {
            let k = gaussian_kernel(sigma);
            assert!(k.iter().all(|&t| t >= 0.0));
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(k.len() % 2, 1);
        }
    }

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(-100, 1), 0);
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Image::filled(9, 5, [17, 200, 93]);
        for sigma in [0.0, 1.4, 16.4] {
            assert_eq!(gaussian_blur(&img, sigma).unwrap(), img);
        }
    }

    #[test]
    fn sigma_zero_is_identity() {
        let data: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let img = Image::new(4, 3, ColorSpace::Rgb, data).unwrap();
        assert_eq!(gaussian_blur(&img, 0.0).unwrap(), img);
        assert!(gaussian_blur(&img, -1.0).is_err());
    }

    #[test]
    fn impulse_spreads_symmetrically() {
        let mut img = Image::filled(15, 15, [0, 0, 0]);
        img.set_pixel(7, 7, [255, 255, 255]);
        let out = gaussian_blur(&img, 1.4).unwrap();
        assert_eq!(out.pixel(6, 7), out.pixel(8, 7));
        assert_eq!(out.pixel(7, 6), out.pixel(7, 8));
        assert!(out.pixel(7, 7)[0] < 255);
    }

    #[test]
    fn box_blur_constant_identity() {
        let img = Image::filled(10, 3, [40, 50, 60]);
        assert_eq!(box_blur_horizontal(&img, 7).unwrap(), img);
        assert!(box_blur_horizontal(&img, 4).is_err());
    }
}
