//! Procedural lane-following task: a road seen from the driver's seat,
//! displaced sideways by a lane offset, with the steering angle a fixed
//! function of that offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Samples;
use crate::error::{ensure, Result};
use crate::imgcore::{ColorSpace, Image};
use crate::learner::{Activation, ArchConfig, ConvStage, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Steering angle at full offset, in degrees.
    pub max_angle_deg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { count: 2000, width: 32, height: 16, max_angle_deg: 30.0, seed: 0 }
    }
}

/// Steering angle for a lane offset in `[-1, 1]` (positive = car right of
/// the lane center, steer left with a positive angle).
pub fn steering_angle(offset: f64, max_angle_deg: f64) -> f64 {
    max_angle_deg * offset
}

/// Nuisance factors varied per image independently of the label.
#[derive(Debug, Clone, Copy)]
struct Look {
    brightness: f64,
    grass: [f64; 3],
    road: f64,
    dash_phase: f64,
}

const HORIZON: f64 = 0.35;
const SUPERSAMPLE: usize = 4;

fn shade(u: f64, v: f64, offset: f64, look: &Look) -> [f64; 3] {
    if v < HORIZON {
        let t = v / HORIZON;
        return [150.0 + 40.0 * t, 190.0 + 30.0 * t, 235.0];
    }
    let d = (v - HORIZON) / (1.0 - HORIZON);
    let center = 0.5 - 0.35 * offset * d;
    let half = 0.08 + 0.42 * d;
    let line = 0.012 + 0.03 * d;
    let dx = (u - center).abs();
    if (dx - half).abs() < line {
        [235.0, 235.0, 235.0]
    } else if dx < half {
        let dashed = ((d * 6.0 + look.dash_phase).fract()) < 0.5;
        if dx < line * 0.6 && dashed {
            [230.0, 200.0, 40.0]
        } else {
            [look.road; 3]
        }
    } else {
        look.grass
    }
}

/// Renders one frame with anti-aliased edges.
fn render(offset: f64, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Image {
    let look = Look {
        brightness: rng.gen_range(0.85..1.15),
        grass: [rng.gen_range(50.0..90.0), rng.gen_range(110.0..160.0), rng.gen_range(40.0..70.0)],
        road: rng.gen_range(85.0..120.0),
        dash_phase: rng.gen_range(0.0..1.0),
    };
    let mut values = Vec::with_capacity(width * height * 3);
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let u = (x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64) / width as f64;
                    let v = (y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64) / height as f64;
                    let c = shade(u, v, offset, &look);
                    for i in 0..3 {
                        acc[i] += c[i];
                    }
                }
            }
            let grain = rng.gen_range(-6.0..6.0);
            for a in acc {
                values.push((a / n * look.brightness + grain).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(width, height, ColorSpace::Rgb, values).expect("rendered buffer has the right size")
}

/// `cfg.count` frames with offsets drawn uniformly from `[-1, 1]`. Frame `i`
/// depends only on `(cfg.seed, i)`.
pub fn generate(cfg: &SynthConfig) -> Result<Samples> {
    ensure!(cfg.count >= 1, "synthetic task needs at least one sample");
    ensure!(cfg.width >= 4 && cfg.height >= 4, "synthetic frames must be at least 4x4");
    ensure!(cfg.max_angle_deg.is_finite() && cfg.max_angle_deg > 0.0, "max angle must be positive");
    let (images, angles): (Vec<Image>, Vec<f64>) = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let offset = rng.gen_range(-1.0..=1.0);
            (render(offset, cfg.width, cfg.height, &mut rng), steering_angle(offset, cfg.max_angle_deg))
        })
        .unzip();
    Samples::new(images, angles)
}

/// Five-conv / three-dense network sized for the 32x16 synthetic frames.
pub fn synthetic_arch() -> ArchConfig {
    ArchConfig {
        input_width: 32,
        input_height: 16,
        conv: vec![
            ConvStage::new(6, 3, 2, 1),
            ConvStage::new(8, 3, 2, 1),
            ConvStage::new(8, 3, 1, 1),
            ConvStage::new(8, 3, 1, 1),
            ConvStage::new(8, 3, 1, 1),
        ],
        dense: vec![32, 16, 1],
        activation: Activation::Relu,
    }
}

/// Optimizer settings used for the synthetic task.
pub fn synthetic_train_config(seed: u64) -> TrainConfig {
    TrainConfig { learning_rate: 1e-3, batch_size: 32, epochs: 50, seed, ..TrainConfig::default() }
}
