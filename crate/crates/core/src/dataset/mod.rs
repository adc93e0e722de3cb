//! Steering datasets on disk (manifest + images), in-memory sample sets,
//! seeded splits, and generation of perturbed copies and benchmark trees.

mod generate;

pub use generate::{
    dataset_seed, generate_benchmark, generate_perturbed, perturb_samples, BenchmarkConfig, BenchmarkIndex,
    INDEX_FILE, META_FILE,
};

use std::path::{Component, Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::imgcore::io::read_image;
use crate::imgcore::{resize, Image, ResizeMode};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: [&str; 2] = ["path", "steering_deg"];

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// Forward-slash path relative to the dataset root.
    pub path: String,
    pub steering_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<Entry>,
    /// Spec id that produced this dataset from its parent, if any.
    pub provenance: Option<String>,
}

/// Decoded images with their steering angles, index-aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub images: Vec<Image>,
    pub angles: Vec<f64>,
}

impl Samples {
    pub fn new(images: Vec<Image>, angles: Vec<f64>) -> Result<Self> {
        ensure!(
            images.len() == angles.len(),
            "{} images but {} angles",
            images.len(),
            angles.len()
        );
        Ok(Self { images, angles })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        Samples {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            angles: indices.iter().map(|&i| self.angles[i]).collect(),
        }
    }

    /// Concatenation of `parts`, in order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Samples>) -> Samples {
        let mut out = Samples::default();
        for p in parts {
            out.images.extend(p.images.iter().cloned());
            out.angles.extend_from_slice(&p.angles);
        }
        out
    }

    /// Bilinear resize of every image to `width x height`.
    pub fn resized(&self, width: usize, height: usize) -> Result<Samples> {
        let images = self
            .images
            .par_iter()
            .map(|img| resize(img, width, height, ResizeMode::Bilinear))
            .collect::<Result<Vec<_>>>()?;
        Ok(Samples { images, angles: self.angles.clone() })
    }
}

/// Nonnegative split weights and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub train_w: f64,
    pub val_w: f64,
    pub test_w: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_w: 20.0, val_w: 1.0, test_w: 2.0, seed: 0 }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.train_w, self.val_w, self.test_w];
        ensure!(w.iter().all(|x| x.is_finite() && *x >= 0.0), "split weights must be finite and >= 0");
        ensure!(w.iter().sum::<f64>() > 0.0, "split weights must not all be zero");
        Ok(())
    }

    /// Part sizes for `n` items: each part gets `floor(n * w / sum)`, and the
    /// leftover items go one each to the parts with the largest fractional
    /// remainders (earlier parts win ties).
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let w = [self.train_w, self.val_w, self.test_w];
        let total: f64 = w.iter().sum();
        let exact: Vec<f64> = w.iter().map(|x| n as f64 * x / total).collect();
        let mut sizes = [0usize; 3];
        for i in 0..3 {
            sizes[i] = (exact[i].floor() as usize).min(n);
        }
        let mut left = n.saturating_sub(sizes.iter().sum());
        let mut order: Vec<usize> = (0..3).filter(|&i| w[i] > 0.0).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        Ok(sizes)
    }

    /// Seeded permutation of `0..n` cut into contiguous train/val/test parts.
    pub fn indices(&self, n: usize) -> Result<[Vec<usize>; 3]> {
        let [a, b, _] = self.sizes(n)?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let test = idx.split_off(a + b);
        let val = idx.split_off(a);
        Ok([idx, val, test])
    }
}

/// Deterministic shuffle-then-partition of a dataset's entries.
pub fn split(ds: &Dataset, cfg: &SplitConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let [tr, va, te] = cfg.indices(ds.entries.len())?;
    let part = |idx: Vec<usize>| Dataset {
        root: ds.root.clone(),
        entries: idx.into_iter().map(|i| ds.entries[i].clone()).collect(),
        provenance: ds.provenance.clone(),
    };
    Ok((part(tr), part(va), part(te)))
}

/// Train/validation/test sample sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Samples,
    pub val: Samples,
    pub test: Samples,
}

impl Splits {
    pub fn from_samples(all: &Samples, cfg: &SplitConfig) -> Result<Splits> {
        let [tr, va, te] = cfg.indices(all.len())?;
        Ok(Splits { train: all.subset(&tr), val: all.subset(&va), test: all.subset(&te) })
    }
}

fn relative_is_safe(rel: &str) -> bool {
    let p = Path::new(rel);
    !rel.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.steering_deg).collect()
    }

    pub fn image_path(&self, entry: &Entry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Reads every image in manifest order.
    pub fn load_samples(&self) -> Result<Samples> {
        if self.entries.is_empty() {
            return Err(Error::EmptyDataset(self.root.clone()));
        }
        let images = self
            .entries
            .par_iter()
            .map(|e| read_image(&self.image_path(e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Samples { images, angles: self.angles() })
    }

    pub fn manifest_text(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Contract(format!("manifest encoding: {e}"));
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([e.path.as_str(), &e.steering_deg.to_string()]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(format!("manifest encoding: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
    }

    /// Writes `manifest.csv` into the dataset root.
    pub fn write_manifest(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, self.manifest_text()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Reads a `path,steering_deg` manifest. The dataset root is the manifest's
/// directory; every image path must be relative, stay under the root and
/// exist. Provenance is read from a sibling `meta.txt` when present.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let malformed = |line: u64, reason: String| Error::MalformedRow { path: path.to_path_buf(), line: line as usize, reason };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    match records.next() {
        None => return Err(Error::EmptyDataset(path.to_path_buf())),
        Some(Err(e)) => return Err(malformed(1, e.to_string())),
        Some(Ok(h)) => {
            if h.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
                return Err(malformed(1, format!("header must be `{}`", MANIFEST_HEADER.join(","))));
            }
        }
    }
    let mut entries = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(malformed(line, format!("expected 2 columns, found {}", rec.len())));
        }
        let angle: f64 = rec[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| malformed(line, format!("steering angle {:?} is not a finite number", &rec[1])))?;
        let rel = rec[0].replace('\\', "/");
        if !relative_is_safe(&rel) || !root.join(&rel).is_file() {
            return Err(Error::UnresolvablePath(root.join(&rel)));
        }
        entries.push(Entry { path: rel, steering_deg: angle });
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    let provenance = std::fs::read_to_string(root.join(META_FILE)).ok().and_then(|meta| {
        meta.lines()
            .find_map(|l| l.strip_prefix("spec_id=").map(str::to_string))
    });
    Ok(Dataset { root, entries, provenance })
}

/// Writes `samples` as PNGs under `root/images/` with a manifest.
pub fn write_samples(root: &Path, samples: &Samples) -> Result<Dataset> {
    let entries: Vec<Entry> = samples
        .angles
        .iter()
        .enumerate()
        .map(|(i, &a)| Entry { path: format!("images/{i:06}.png"), steering_deg: a })
        .collect();
    entries
        .par_iter()
        .zip(samples.images.par_iter())
        .try_for_each(|(e, img)| crate::imgcore::io::write_image(&root.join(&e.path), img))?;
    let ds = Dataset { root: root.to_path_buf(), entries, provenance: None };
    ds.write_manifest()?;
    Ok(ds)
}
