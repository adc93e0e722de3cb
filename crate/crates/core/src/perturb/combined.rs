use super::channel::{channel_shift, Channel, Direction};
use super::noise::add_noise;
use crate::error::{ensure, Result};
use crate::imgcore::{gaussian_blur, radial_warp, to_hsv, to_rgb, CameraModel, Image};

/// Order in which [`apply_combined`] runs its stages; written to dataset metadata.
pub const STAGE_ORDER: &str = "chanR,chanG,chanB,chanH,chanS,chanV,blur,noise,distortion";

/// Several perturbations at once. Channel weights are signed: a negative
/// value shifts darker by its magnitude, a nonnegative one lighter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedSpec {
    /// Signed weights in `Channel::ALL` order (R, G, B, H, S, V).
    pub alphas: [f64; 6],
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub distort_k: f64,
}

impl CombinedSpec {
    pub const IDENTITY: CombinedSpec = CombinedSpec {
        alphas: [0.0; 6],
        blur_sigma: 0.0,
        noise_sigma: 0.0,
        distort_k: 0.0,
    };

    /// One of the six published combinations, `index` in `1..=6`.
    pub fn preset(index: u8) -> Result<CombinedSpec> {
        ensure!((1..=6).contains(&index), "combined preset must be 1..=6, got {index}");
        Ok(COMBINED_PRESETS[usize::from(index) - 1])
    }

    pub fn validate(&self) -> Result<()> {
        for (ch, a) in Channel::ALL.iter().zip(self.alphas) {
            ensure!((-1.0..=1.0).contains(&a), "{ch} alpha {a} outside [-1, 1]");
        }
        ensure!(self.blur_sigma >= 0.0, "blur sigma must be >= 0");
        ensure!(self.noise_sigma >= 0.0, "noise sigma must be >= 0");
        ensure!(self.distort_k >= 0.0, "distortion k must be >= 0");
        Ok(())
    }

    pub fn alpha(&self, channel: Channel) -> f64 {
        self.alphas[Channel::ALL.iter().position(|&c| c == channel).unwrap()]
    }
}

const fn comb(alphas: [f64; 6], blur_sigma: f64, noise_sigma: f64, distort_k: f64) -> CombinedSpec {
    CombinedSpec {
        alphas,
        blur_sigma,
        noise_sigma,
        distort_k,
    }
}

/// Comb1..Comb6. Blur values are used as Gaussian sigma.
// 0.4343 is a published weight, not log10(e).
#[allow(clippy::approx_constant)]
pub const COMBINED_PRESETS: [CombinedSpec; 6] = [
    comb([-0.1180, 0.4343, 0.1445, 0.3040, -0.2600, 0.1816], 3.0, 10.0, 17.0),
    comb([0.0420, -0.5085, 0.3695, -0.0570, -0.1978, -0.4526], 27.0, 7.0, 68.0),
    comb([0.1774, -0.1150, 0.1299, -0.0022, -0.2119, -0.0747], 1.0, 6.0, 86.0),
    comb([-0.2599, -0.0166, -0.2702, -0.4273, 0.0238, -0.2321], 5.0, 8.0, 8.0),
    comb([-0.2047, 0.0333, 0.3342, -0.4400, 0.2513, 0.0013], 35.0, 6.0, 1.0),
    comb([-0.6613, -0.0191, 0.3842, 0.3568, 0.5522, 0.0998], 21.0, 3.0, 37.0),
];

fn split_signed(alpha: f64) -> (Direction, f64) {
    if alpha < 0.0 {
        (Direction::Darker, -alpha)
    } else {
        (Direction::Lighter, alpha)
    }
}

/// Channel shifts (RGB, then HSV in a single round trip), blur, noise, distortion.
/// Zero-valued stages are skipped entirely.
pub fn apply_combined(img: &Image, spec: &CombinedSpec, seed: u64) -> Result<Image> {
    spec.validate()?;
    let mut out = img.clone();
    for ch in [Channel::R, Channel::G, Channel::B] {
        let a = spec.alpha(ch);
        if a != 0.0 {
            let (dir, mag) = split_signed(a);
            out = channel_shift(&out, ch, dir, mag)?;
        }
    }
    let hsv_stages: Vec<Channel> = [Channel::H, Channel::S, Channel::V]
        .into_iter()
        .filter(|&ch| spec.alpha(ch) != 0.0)
        .collect();
    if !hsv_stages.is_empty() {
        let mut hsv = to_hsv(&out)?;
        for ch in hsv_stages {
            let (dir, mag) = split_signed(spec.alpha(ch));
            hsv = channel_shift(&hsv, ch, dir, mag)?;
        }
        out = to_rgb(&hsv)?;
    }
    out = gaussian_blur(&out, spec.blur_sigma)?;
    out = add_noise(&out, spec.noise_sigma, seed)?;
    if spec.distort_k != 0.0 {
        let cam = CameraModel::centered(out.width(), out.height(), spec.distort_k, spec.distort_k);
        out = radial_warp(&out, &cam)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::ColorSpace;

    fn sample() -> Image {
        let mut data = Vec::new();
        for y in 0..24 {
            for x in 0..32 {
                data.extend_from_slice(&[(x * 8) as u8, (y * 10) as u8, ((x * y) % 256) as u8]);
            }
        }
        Image::new(32, 24, ColorSpace::Rgb, data).unwrap()
    }

    #[test]
    fn identity_spec() {
        assert_eq!(apply_combined(&sample(), &CombinedSpec::IDENTITY, 1).unwrap(), sample());
    }

    #[test]
    fn single_stage_matches_single_operator() {
        let img = sample();
        let blur = CombinedSpec { blur_sigma: 5.9, ..CombinedSpec::IDENTITY };
        assert_eq!(apply_combined(&img, &blur, 0).unwrap(), gaussian_blur(&img, 5.9).unwrap());

        let noise = CombinedSpec { noise_sigma: 20.0, ..CombinedSpec::IDENTITY };
        assert_eq!(apply_combined(&img, &noise, 5).unwrap(), add_noise(&img, 20.0, 5).unwrap());

        let dist = CombinedSpec { distort_k: 50.0, ..CombinedSpec::IDENTITY };
        let cam = CameraModel::centered(32, 24, 50.0, 50.0);
        assert_eq!(apply_combined(&img, &dist, 0).unwrap(), radial_warp(&img, &cam).unwrap());

        let mut alphas = [0.0; 6];
        alphas[1] = -0.4;
        let g = CombinedSpec { alphas, ..CombinedSpec::IDENTITY };
        assert_eq!(
            apply_combined(&img, &g, 0).unwrap(),
            channel_shift(&img, Channel::G, Direction::Darker, 0.4).unwrap()
        );

        let mut alphas = [0.0; 6];
        alphas[4] = 0.3;
        let s = CombinedSpec { alphas, ..CombinedSpec::IDENTITY };
        assert_eq!(
            apply_combined(&img, &s, 0).unwrap(),
            channel_shift(&img, Channel::S, Direction::Lighter, 0.3).unwrap()
        );
    }

    #[test]
    fn presets_match_table() {
        let c1 = CombinedSpec::preset(1).unwrap();
        assert_eq!(c1.alpha(Channel::R), -0.1180);
        assert_eq!((c1.blur_sigma, c1.noise_sigma, c1.distort_k), (3.0, 10.0, 17.0));
        let c6 = CombinedSpec::preset(6).unwrap();
        assert_eq!(c6.alpha(Channel::S), 0.5522);
        assert_eq!((c6.blur_sigma, c6.noise_sigma, c6.distort_k), (21.0, 3.0, 37.0));
        assert!(CombinedSpec::preset(0).is_err());
        assert!(CombinedSpec::preset(7).is_err());
        for i in 1..=6 {
            CombinedSpec::preset(i).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn presets_apply_deterministically() {
        for i in 1..=6 {
            let spec = CombinedSpec::preset(i).unwrap();
            let a = apply_combined(&sample(), &spec, 11).unwrap();
            assert_eq!(a, apply_combined(&sample(), &spec, 11).unwrap());
            assert_ne!(a, sample());
        }
    }

    #[test]
    fn invalid_rejected() {
        let bad = CombinedSpec { alphas: [1.5, 0.0, 0.0, 0.0, 0.0, 0.0], ..CombinedSpec::IDENTITY };
        assert!(apply_combined(&sample(), &bad, 0).is_err());
        let bad = CombinedSpec { noise_sigma: -1.0, ..CombinedSpec::IDENTITY };
        assert!(apply_combined(&sample(), &bad, 0).is_err());
    }
}
