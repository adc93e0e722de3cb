use super::{ColorSpace, Image, HUE_MAX};
use crate::error::{ensure, Result};

/// RGB to 8-bit HSV with `H = hue_degrees / 2`.
pub fn to_hsv(img: &Image) -> Result<Image> {
    ensure!(img.space() == ColorSpace::Rgb, "to_hsv expects an RGB image");
    let mut out = Vec::with_capacity(img.data().len());
    for px in img.data().chunks_exact(3) {
        out.extend_from_slice(&rgb_to_hsv_pixel([px[0], px[1], px[2]]));
    }
    Ok(Image::from_raw_unchecked(img.width(), img.height(), ColorSpace::Hsv, out))
}

pub fn to_rgb(img: &Image) -> Result<Image> {
    ensure!(img.space() == ColorSpace::Hsv, "to_rgb expects an HSV image");
    let mut out = Vec::with_capacity(img.data().len());
    for px in img.data().chunks_exact(3) {
        ensure!(px[0] <= HUE_MAX, "HSV hue {} outside [0, {HUE_MAX}]", px[0]);
        out.extend_from_slice(&hsv_to_rgb_pixel([px[0], px[1], px[2]]));
    }
    Ok(Image::from_raw_unchecked(img.width(), img.height(), ColorSpace::Rgb, out))
}

pub(crate) fn rgb_to_hsv_pixel([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { 255.0 * delta / max } else { 0.0 };
    let hue_deg = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (g - b) / delta
    } else if max == g {
        120.0 + 60.0 * (b - r) / delta
    } else {
        240.0 + 60.0 * (r - g) / delta
    };
    let hue_deg = if hue_deg < 0.0 { hue_deg + 360.0 } else { hue_deg };
    let mut h = (hue_deg / 2.0).round();
    if h >= 180.0 {
        h -= 180.0;
    }
    [h as u8, s.round() as u8, max as u8]
}

pub(crate) fn hsv_to_rgb_pixel([h, s, v]: [u8; 3]) -> [u8; 3] {
    let v_f = f64::from(v);
    if s == 0 {
        return [v, v, v];
    }
    let s_f = f64::from(s) / 255.0;
    let hue = f64::from(h) * 2.0 / 60.0;
    let sector = hue.floor();
    let frac = hue - sector;
    let p = v_f * (1.0 - s_f);
    let q = v_f * (1.0 - s_f * frac);
    let t = v_f * (1.0 - s_f * (1.0 - frac));
    let (r, g, b) = match sector as u32 % 6 {
        0 => (v_f, t, p),
        1 => (q, v_f, p),
        2 => (p, v_f, t),
        3 => (p, q, v_f),
        4 => (t, p, v_f),
        _ => (v_f, p, q),
    };
    [super::quantize(r), super::quantize(g), super::quantize(b)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(img: &Image) -> [u8; 3] {
        img.pixel(0, 0)
    }

    fn rgb(p: [u8; 3]) -> Image {
        Image::filled(1, 1, p)
    }

    #[test]
    fn primaries() {
        assert_eq!(px(&to_hsv(&rgb([255, 0, 0])).unwrap()), [0, 255, 255]);
        assert_eq!(px(&to_hsv(&rgb([0, 255, 0])).unwrap()), [60, 255, 255]);
        assert_eq!(px(&to_hsv(&rgb([0, 0, 255])).unwrap()), [120, 255, 255]);
        assert_eq!(px(&to_hsv(&rgb([128, 128, 128])).unwrap()), [0, 0, 128]);
    }

    #[test]
    fn zero_saturation_is_gray() {
        for v in [0u8, 1, 77, 200, 255] {
            let hsv = Image::new(1, 1, ColorSpace::Hsv, vec![0, 0, v]).unwrap();
            assert_eq!(px(&to_rgb(&hsv).unwrap()), [v, v, v]);
        }
    }

    #[test]
    fn wrong_space_is_rejected() {
        let hsv = Image::new(1, 1, ColorSpace::Hsv, vec![10, 10, 10]).unwrap();
        assert!(to_hsv(&hsv).is_err());
        assert!(to_rgb(&rgb([1, 2, 3])).is_err());
    }

    #[test]
    fn hue_wraps_below_180() {
        // Hue just under 360 degrees rounds to 180 half-degrees and wraps to 0.
        let h = px(&to_hsv(&rgb([255, 0, 1])).unwrap())[0];
        assert!(h <= HUE_MAX);
    }

    /// Half-degree hue storage bounds the round-trip error: one degree of hue
    /// moves the middle channel by (max - min) / 60, plus one unit of rounding.
    fn roundtrip_bound(p: [u8; 3]) -> i32 {
        let max = *p.iter().max().unwrap() as f64;
        let min = *p.iter().min().unwrap() as f64;
        ((max - min) / 60.0).ceil() as i32 + 1
    }

    #[test]
    fn roundtrip_lattice() {
        let levels: Vec<u8> = (0..17).map(|i| (i * 255 / 16) as u8).collect();
        let mut worst = 0;
        let mut achromatic_exact = true;
        for &r in &levels {
            for &g in &levels {
                for &b in &levels {
                    let p = [r, g, b];
                    let back = px(&to_rgb(&to_hsv(&rgb(p)).unwrap()).unwrap());
                    for c in 0..3 {
                        let err = (i32::from(back[c]) - i32::from(p[c])).abs();
                        assert!(err <= roundtrip_bound(p), "{p:?} -> {back:?}");
                        worst = worst.max(err);
                    }
                    if r == g && g == b && back != p {
                        achromatic_exact = false;
                    }
                }
            }
        }
        assert!(achromatic_exact);
        assert!(worst <= 6, "worst round-trip error {worst}");
    }

    #[test]
    fn roundtrip_within_one_at_low_chroma() {
        // With max - min <= 60 a one-degree hue error moves a channel by at most 1.
        for r in (0..=255u16).step_by(5) {
            for d in [0u16, 7, 30, 60] {
                let g = (r + d).min(255);
                let b = r.saturating_sub(d / 2);
                let p = [r as u8, g as u8, b as u8];
                let back = px(&to_rgb(&to_hsv(&rgb(p)).unwrap()).unwrap());
                for c in 0..3 {
                    assert!((i32::from(back[c]) - i32::from(p[c])).abs() <= 2, "{p:?} -> {back:?}");
                }
            }
        }
    }
}
