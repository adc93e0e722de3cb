use super::Image;
use crate::error::{ensure, Result};

/// Pinhole camera with two-term radial distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal_length: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
}

impl CameraModel {
    /// Focal length 1000 px, principal point at `(width / 2, height / 2)`.
    pub fn centered(width: usize, height: usize, k1: f64, k2: f64) -> Self {
        Self {
            focal_length: 1000.0,
            cx: (width / 2) as f64,
            cy: (height / 2) as f64,
            k1,
            k2,
        }
    }

    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        ensure!(
            self.focal_length > 0.0 && self.focal_length.is_finite(),
            "focal length must be positive, got {}",
            self.focal_length
        );
        ensure!(
            self.cx >= 0.0 && self.cx < width as f64 && self.cy >= 0.0 && self.cy < height as f64,
            "principal point ({}, {}) outside {width}x{height}",
            self.cx,
            self.cy
        );
        ensure!(self.k1.is_finite() && self.k2.is_finite(), "distortion coefficients must be finite");
        Ok(())
    }

    /// Source pixel coordinate sampled for destination pixel `(u, v)`.
    #[inline]
    pub fn source_of(&self, u: f64, v: f64) -> (f64, f64) {
        let x = (u - self.cx) / self.focal_length;
        let y = (v - self.cy) / self.focal_length;
        let r2 = x * x + y * y;
        let scale = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        (self.cx + self.focal_length * x * scale, self.cy + self.focal_length * y * scale)
    }
}

/// Radially warps `img`; each output pixel bilinearly samples the distorted
/// source position, black outside the frame.
pub fn radial_warp(img: &Image, cam: &CameraModel) -> Result<Image> {
    cam.validate_for(img.width(), img.height())?;
    if cam.k1 == 0.0 && cam.k2 == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0; w * h * 3];
    for v in 0..h {
        for u in 0..w {
            let (sx, sy) = cam.source_of(u as f64, v as f64);
            if let Some(px) = sample_bilinear(img, sx, sy) {
                out[(v * w + u) * 3..(v * w + u) * 3 + 3].copy_from_slice(&px);
            }
        }
    }
    Ok(Image::from_f64(w, h, img.space(), &out))
}

/// Bilinear sample at continuous pixel coordinates; `None` outside `[0, w-1] x [0, h-1]`.
pub(crate) fn sample_bilinear(img: &Image, x: f64, y: f64) -> Option<[f64; 3]> {
    let (w, h) = (img.width(), img.height());
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let data = img.data();
    let at = |xx: usize, yy: usize, c: usize| f64::from(data[(yy * w + xx) * 3 + c]);
    let mut px = [0.0; 3];
    for (c, p) in px.iter_mut().enumerate() {
        let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
        let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
        *p = top * (1.0 - fy) + bottom * fy;
    }
    Some(px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::ColorSpace;

    fn gradient(w: usize, h: usize) -> Image {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&[(x * 255 / w) as u8, (y * 255 / h) as u8, ((x + y) % 256) as u8]);
            }
        }
        Image::new(w, h, ColorSpace::Rgb, data).unwrap()
    }

    /// Per-pixel reference written out longhand, independent of `source_of`
    /// and `sample_bilinear`.
    fn reference_warp(img: &Image, f: f64, cx: f64, cy: f64, k1: f64, k2: f64) -> Vec<u8> {
        let (w, h) = (img.width(), img.height());
        let mut out = vec![0u8; w * h * 3];
        for v in 0..h {
            for u in 0..w {
                let xn = (u as f64 - cx) / f;
                let yn = (v as f64 - cy) / f;
                let rr = xn * xn + yn * yn;
                let d = 1.0 + k1 * rr + k2 * rr * rr;
                let su = xn * d * f + cx;
                let sv = yn * d * f + cy;
                if su < 0.0 || sv < 0.0 || su > (w - 1) as f64 || sv > (h - 1) as f64 {
                    continue;
                }
                let (iu, iv) = (su.floor() as usize, sv.floor() as usize);
                let (au, av) = (su - iu as f64, sv - iv as f64);
                let iu1 = if iu + 1 < w { iu + 1 } else { iu };
                let iv1 = if iv + 1 < h { iv + 1 } else { iv };
                for c in 0..3 {
                    let p = |x: usize, y: usize| img.data()[(y * w + x) * 3 + c] as f64;
                    let val = p(iu, iv) * (1.0 - au) * (1.0 - av)
                        + p(iu1, iv) * au * (1.0 - av)
                        + p(iu, iv1) * (1.0 - au) * av
                        + p(iu1, iv1) * au * av;
                    out[(v * w + u) * 3 + c] = val.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        out
    }

    #[test]
    fn zero_distortion_is_identity() {
        let img = gradient(31, 17);
        let cam = CameraModel::centered(31, 17, 0.0, 0.0);
        assert_eq!(radial_warp(&img, &cam).unwrap(), img);
    }

    #[test]
    fn principal_point_is_fixed() {
        let img = gradient(40, 20);
        for k in [1.0, 500.0, 5e6] {
            let cam = CameraModel::centered(40, 20, k, k);
            let out = radial_warp(&img, &cam).unwrap();
            assert_eq!(out.pixel(20, 10), img.pixel(20, 10));
        }
    }

    #[test]
    fn matches_reference_implementation() {
        let img = gradient(64, 48);
        for (f, k1, k2) in [(1000.0, 1.0, 1.0), (1000.0, 500.0, 500.0), (40.0, 0.3, 0.1), (30.0, -0.2, 0.05)] {
            let cam = CameraModel { focal_length: f, cx: 32.0, cy: 24.0, k1, k2 };
            let out = radial_warp(&img, &cam).unwrap();
            let expected = reference_warp(&img, f, 32.0, 24.0, k1, k2);
            // Operation order differs from the implementation, so a value landing
            // on a .5 rounding tie may quantize one unit apart.
            let worst = out.data().iter().zip(&expected).map(|(a, b)| (*a as i32 - *b as i32).abs()).max();
            let mismatches = out.data().iter().zip(&expected).filter(|(a, b)| a != b).count();
            assert!(worst <= Some(1), "f={f} k1={k1} k2={k2}");
            assert!(mismatches * 1000 < expected.len(), "f={f} k1={k1} k2={k2}: {mismatches} mismatches");
        }
    }

    #[test]
    fn strong_distortion_fills_black() {
        let img = Image::filled(20, 20, [200, 200, 200]);
        let cam = CameraModel { focal_length: 10.0, cx: 10.0, cy: 10.0, k1: 5.0, k2: 5.0 };
        let out = radial_warp(&img, &cam).unwrap();
        assert_eq!(out.pixel(0, 0), [0, 0, 0]);
        assert_eq!(out.pixel(10, 10), [200, 200, 200]);
    }

    #[test]
    fn invalid_camera_rejected() {
        let img = gradient(8, 8);
        let mut cam = CameraModel::centered(8, 8, 1.0, 1.0);
        cam.focal_length = 0.0;
        assert!(radial_warp(&img, &cam).is_err());
        let mut cam = CameraModel::centered(8, 8, 1.0, 1.0);
        cam.cx = 8.0;
        assert!(radial_warp(&img, &cam).is_err());
    }
}
