//! PPM (binary P6, maxval 255) and 8-bit RGB PNG. The format is chosen by
//! file extension; anything other than `.ppm` is treated as PNG.

use std::fs;
use std::path::Path;

use super::{ColorSpace, Image};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ppm") => ImageFormat::Ppm,
            _ => ImageFormat::Png,
        }
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match ImageFormat::from_path(path) {
        ImageFormat::Ppm => decode_ppm(&bytes).map_err(|message| Error::Decode {
            path: path.to_path_buf(),
            message,
        }),
        ImageFormat::Png => decode_png(&bytes).map_err(|message| Error::Decode {
            path: path.to_path_buf(),
            message,
        }),
    }
}

/// Writes an RGB image; HSV images must be converted first.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    if img.space() != ColorSpace::Rgb {
        return Err(Error::Contract("only RGB images can be written".into()));
    }
    let bytes = match ImageFormat::from_path(path) {
        ImageFormat::Ppm => encode_ppm(img),
        ImageFormat::Png => encode_png(img).map_err(|message| Error::Decode {
            path: path.to_path_buf(),
            message,
        })?,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Whitespace and comments between header tokens.
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PPM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
    }
    if fields[0] != "P6" {
        return Err(format!("unsupported PPM magic {:?}", fields[0]));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PPM header field {s:?}"));
    let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval != 255 {
        return Err(format!("only 8-bit PPM is supported, maxval {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(format!("PPM raster truncated: need {need} bytes"));
    }
    Image::new(w, h, ColorSpace::Rgb, bytes[pos..pos + need].to_vec()).map_err(|e| e.to_string())
}

fn encode_png(img: &Image) -> std::result::Result<Vec<u8>, String> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .ok_or_else(|| "raster size mismatch".to_string())?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| e.to_string())?;
    Ok(out.into_inner())
}

fn decode_png(bytes: &[u8]) -> std::result::Result<Image, String> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| e.to_string())?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::new(w as usize, h as usize, ColorSpace::Rgb, rgb.into_raw()).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image {
        let data: Vec<u8> = (0..5 * 3 * 3).map(|i| (i * 37 % 256) as u8).collect();
        Image::new(5, 3, ColorSpace::Rgb, data).unwrap()
    }

    #[test]
    fn ppm_layout_is_exact() {
        let img = Image::new(1, 1, ColorSpace::Rgb, vec![1, 2, 3]).unwrap();
        assert_eq!(encode_ppm(&img), b"P6\n1 1\n255\n\x01\x02\x03".to_vec());
    }

    #[test]
    fn ppm_header_with_comment() {
        let bytes = b"P6 # made by hand\n2 1\n255\n\x00\x01\x02\x03\x04\x05";
        let img = decode_ppm(bytes).unwrap();
        assert_eq!(img.pixel(1, 0), [3, 4, 5]);
    }

    #[test]
    fn ppm_rejects_16bit_and_truncation() {
        assert!(decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\n\x00").is_err());
        assert!(decode_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
    }

    #[test]
    fn files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.ppm", "b.png"] {
            let path = dir.path().join("sub").join(name);
            write_image(&path, &sample()).unwrap();
            assert_eq!(read_image(&path).unwrap(), sample());
        }
    }

    #[test]
    fn hsv_write_rejected() {
        let hsv = crate::imgcore::to_hsv(&sample()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(write_image(&dir.path().join("x.png"), &hsv).is_err());
    }
}
