use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Result};
use crate::imgcore::{ColorSpace, Image, HUE_MAX};

/// Generator behind every noise-bearing operator. ChaCha8 has a fixed,
/// platform-independent output stream for a given 64-bit seed.
pub type NoiseRng = ChaCha8Rng;

/// Seed for the image at `index` within a dataset generated from `master`.
pub fn image_seed(master: u64, index: usize) -> u64 {
    master ^ index as u64
}

/// Additive white Gaussian noise, i.i.d. per channel value.
pub fn add_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    ensure!(sigma >= 0.0 && sigma.is_finite(), "noise sigma must be >= 0, got {sigma}");
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = NoiseRng::seed_from_u64(seed);
    let hue_cap = if img.space() == ColorSpace::Hsv { f64::from(HUE_MAX) } else { 255.0 };
    let values: Vec<f64> = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let noisy = f64::from(v) + sigma * z;
            if i % 3 == 0 {
                noisy.min(hue_cap)
            } else {
                noisy
            }
        })
        .collect();
    Ok(Image::from_f64(img.width(), img.height(), img.space(), &values))
}
