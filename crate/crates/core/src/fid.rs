//! Fréchet distance between Gaussian fits of two image sets' feature
//! embeddings, used as a severity scale shared by all perturbation factors.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::imgcore::{resize::bilinear_f64, ColorSpace, Image};

/// One row per image, one column per feature.
pub type FeatureMatrix = DMatrix<f64>;

/// Diagonal regularization added to every fitted covariance.
pub const COVARIANCE_EPS: f64 = 1e-6;

/// Deterministic image embedding.
pub trait FeatureExtractor: Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, img: &Image) -> Vec<f64>;
}

/// Bilinear 8x8 thumbnail of each RGB plane scaled to `[0, 1]`, laid out
/// plane by plane (R then G then B): 192 values.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThumbnailExtractor;

impl ThumbnailExtractor {
    pub const SIDE: usize = 8;
}

impl FeatureExtractor for ThumbnailExtractor {
    fn id(&self) -> &str {
        "thumb8x8-rgb"
    }

    fn dim(&self) -> usize {
        Self::SIDE * Self::SIDE * 3
    }

    fn extract(&self, img: &Image) -> Vec<f64> {
        debug_assert_eq!(img.space(), ColorSpace::Rgb);
        let side = Self::SIDE;
        let small = bilinear_f64(img, side, side);
        let mut out = vec![0.0; side * side * 3];
        for (i, px) in small.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * side * side + i] = px[c] / 255.0;
            }
        }
        out
    }
}

/// Row-per-image feature matrix, rows in input order.
pub fn extract_features(images: &[Image], ex: &dyn FeatureExtractor) -> Result<DMatrix<f64>> {
    ensure!(!images.is_empty(), "feature extraction needs at least one image");
    let rows: Vec<Vec<f64>> = images.par_iter().map(|img| ex.extract(img)).collect();
    let d = ex.dim();
    ensure!(rows.iter().all(|r| r.len() == d), "extractor {} returned rows of the wrong length", ex.id());
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Sample mean and unbiased covariance plus `COVARIANCE_EPS * I`.
pub fn fit_gaussian(features: &DMatrix<f64>) -> Result<GaussianStats> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mu = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let mut sigma = centered.transpose() * &centered / (n as f64 - 1.0);
    sigma = (&sigma + sigma.transpose()) * 0.5;
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += COVARIANCE_EPS;
    }
    Ok(GaussianStats { mu, sigma, n })
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    ensure!(m.is_square(), "matrix must be square, got {}x{}", m.nrows(), m.ncols());
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    ensure!(asym <= 1e-10 * scale, "matrix is not symmetric (max asymmetry {asym:e})");
    Ok(())
}

fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigendecomposition produced non-finite values".into()));
    }
    Ok(eig)
}

/// Principal square root of a symmetric PSD matrix through its
/// eigendecomposition; negative eigenvalues are clamped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(m)?;
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let scaled = v * DMatrix::from_diagonal(&roots);
    let s = scaled * v.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// `tr((A B)^{1/2})` computed as `tr((B^{1/2} A B^{1/2})^{1/2})`, which is
/// symmetric PSD.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let root_b = sqrtm_psd(b)?;
    let inner = &root_b * a * &root_b;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = symmetric_eigen(&inner)?;
    Ok(eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2})`, clamped at zero. The cross
/// term is averaged over both product orders so the result is exactly
/// symmetric in its arguments.
pub fn frechet_distance(g1: &GaussianStats, g2: &GaussianStats) -> Result<f64> {
    ensure!(g1.dim() == g2.dim(), "dimension mismatch: {} vs {}", g1.dim(), g2.dim());
    ensure!(g1.sigma.nrows() == g1.dim() && g2.sigma.nrows() == g2.dim(), "covariance shape mismatch");
    let mean_term = (&g1.mu - &g2.mu).norm_squared();
    let cross = 0.5 * (trace_sqrt_product(&g1.sigma, &g2.sigma)? + trace_sqrt_product(&g2.sigma, &g1.sigma)?);
    let d = mean_term + g1.sigma.trace() + g2.sigma.trace() - 2.0 * cross;
    if !d.is_finite() {
        return Err(Error::Numeric("Fréchet distance is not finite".into()));
    }
    Ok(d.max(0.0))
}

/// FID together with the sample sizes and extractor that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FidReport {
    pub fid: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub extractor: String,
}

pub fn fid_from_features(a: &DMatrix<f64>, b: &DMatrix<f64>, extractor: &str) -> Result<FidReport> {
    let ga = fit_gaussian(a)?;
    let gb = fit_gaussian(b)?;
    let fid = frechet_distance(&ga, &gb)?;
    log::info!("fid={fid:.6} n_a={} n_b={} extractor={extractor}", ga.n, gb.n);
    Ok(FidReport {
        fid,
        n_a: ga.n,
        n_b: gb.n,
        extractor: extractor.to_string(),
    })
}

pub fn fid_between(a: &[Image], b: &[Image], ex: &dyn FeatureExtractor) -> Result<FidReport> {
    ensure!(a.len() >= 2 && b.len() >= 2, "FID needs at least two images per side");
    fid_from_features(&extract_features(a, ex)?, &extract_features(b, ex)?, ex.id())
}

/// Mean over image pairs and pixels of the Euclidean RGB difference.
pub fn mean_pixel_l2(a: &[Image], b: &[Image]) -> Result<f64> {
    ensure!(!a.is_empty() && a.len() == b.len(), "L2 distance needs equally sized, nonempty image sets");
    let mut total = 0.0;
    let mut pixels = 0usize;
    for (x, y) in a.iter().zip(b) {
        ensure!(x.width() == y.width() && x.height() == y.height(), "paired images differ in size");
        for (p, q) in x.data().chunks_exact(3).zip(y.data().chunks_exact(3)) {
            let d2: f64 = p.iter().zip(q).map(|(&u, &v)| (f64::from(u) - f64::from(v)).powi(2)).sum();
            total += d2.sqrt();
        }
        pixels += x.width() * x.height();
    }
    Ok(total / pixels as f64)
}

/// Magic bytes opening a feature file. Layout after the magic: `dim: u32`,
/// `count: u64`, then `count * dim` row-major `f64`, all little-endian.
pub const FEATURE_MAGIC: &[u8; 8] = b"RDFEAT01";

pub fn write_features(path: &Path, features: &DMatrix<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + features.len() * 8);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(features.ncols() as u32).to_le_bytes());
    buf.extend_from_slice(&(features.nrows() as u64).to_le_bytes());
    for row in features.row_iter() {
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Decode {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    if bytes.len() < 20 || &bytes[..8] != FEATURE_MAGIC {
        return Err(bad("not a feature file (bad magic)"));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() != 20 + dim * count * 8 {
        return Err(bad("feature payload length does not match header"));
    }
    let values: Vec<f64> = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(count, dim, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(mu: &[f64], sigma: DMatrix<f64>) -> GaussianStats {
        GaussianStats { mu: DVector::from_column_slice(mu), sigma, n: 10 }
    }

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    #[test]
    fn default_extractor_dims() {
        let ex = ThumbnailExtractor;
        assert_eq!(ex.extract(&Image::filled(37, 19, [1, 2, 3])).len(), 192);
        assert!(ex.extract(&Image::filled(64, 32, [0, 0, 0])).iter().all(|&v| v == 0.0));
        let white = ex.extract(&Image::filled(64, 32, [255, 0, 255]));
        assert!(white[..64].iter().all(|&v| v == 1.0));
        assert!(white[64..128].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_images_identical_rows() {
        let img = Image::filled(16, 16, [9, 80, 200]);
        let f = extract_features(&[img.clone(), img], &ThumbnailExtractor).unwrap();
        assert_eq!(f.row(0), f.row(1));
    }

    #[test]
    fn fit_examples() {
        let g = fit_gaussian(&DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 0.0])).unwrap();
        assert_eq!(g.mu.as_slice(), &[1.0, 0.0]);
        assert!((g.sigma[(0, 0)] - (2.0 + COVARIANCE_EPS)).abs() < 1e-15);
        assert!((g.sigma[(1, 1)] - COVARIANCE_EPS).abs() < 1e-15);
        assert_eq!(g.sigma[(0, 1)], 0.0);

        let same = fit_gaussian(&DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(same.sigma, DMatrix::identity(3, 3) * COVARIANCE_EPS);

        assert!(matches!(
            fit_gaussian(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
            Err(Error::InsufficientSamples { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn sqrtm_examples() {
        assert_eq!(sqrtm_psd(&DMatrix::identity(4, 4)).unwrap(), DMatrix::identity(4, 4));
        let s = sqrtm_psd(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-14 && (s[(1, 1)] - 3.0).abs() < 1e-14);
        assert!(s[(0, 1)].abs() < 1e-14);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(sqrtm_psd(&asym).is_err());
    }

    #[test]
    fn sqrtm_clamps_negative_eigenvalues() {
        // Eigenvalues 3 and -1.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let s = sqrtm_psd(&m).unwrap();
        let eig = SymmetricEigen::new(s.clone());
        assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn sqrtm_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 3, 17, 64] {
            let m = random_spd(d, &mut rng);
            let s = sqrtm_psd(&m).unwrap();
            let err = (&s * &s - &m).norm() / m.norm();
            assert!(err < 1e-8, "d={d} err={err:e}");
        }
    }

    #[test]
    fn univariate_closed_form() {
        let a = stats(&[0.0], DMatrix::from_element(1, 1, 1.0));
        let b = stats(&[1.0], DMatrix::from_element(1, 1, 4.0));
        assert!((frechet_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_matches_coordinatewise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 12;
        let mu1: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu2: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v1: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..5.0)).collect();
        let v2: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..5.0)).collect();
        let expected: f64 = (0..d)
            .map(|i| (mu1[i] - mu2[i]).powi(2) + (v1[i].sqrt() - v2[i].sqrt()).powi(2))
            .sum();
        let a = stats(&mu1, DMatrix::from_diagonal(&DVector::from_vec(v1)));
        let b = stats(&mu2, DMatrix::from_diagonal(&DVector::from_vec(v2)));
        assert!((frechet_distance(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn self_distance_zero_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 10, 40] {
            let a = stats(&vec![0.5; d], random_spd(d, &mut rng));
            let b = stats(&vec![-0.5; d], random_spd(d, &mut rng));
            assert!(frechet_distance(&a, &a).unwrap() < 1e-6);
            let ab = frechet_distance(&a, &b).unwrap();
            assert_eq!(ab, frechet_distance(&b, &a).unwrap());
            assert!(ab >= 0.0);
        }
        let small = stats(&[0.0], DMatrix::identity(1, 1));
        let big = stats(&[0.0, 0.0], DMatrix::identity(2, 2));
        assert!(frechet_distance(&small, &big).is_err());
    }

    #[test]
    fn feature_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let m = DMatrix::from_row_slice(3, 2, &[1.0, -2.5, 3.25, 0.0, f64::MIN_POSITIVE, 7.0]);
        write_features(&path, &m).unwrap();
        assert_eq!(read_features(&path).unwrap(), m);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], FEATURE_MAGIC);
        assert_eq!(bytes.len(), 20 + 6 * 8);
        std::fs::write(&path, b"garbage").unwrap();
        assert!(read_features(&path).is_err());
    }

    #[test]
    fn l2_diagnostic() {
        let a = vec![Image::filled(2, 2, [0, 0, 0])];
        let b = vec![Image::filled(2, 2, [3, 4, 0])];
        assert!((mean_pixel_l2(&a, &b).unwrap() - 5.0).abs() < 1e-12);
    }
}
