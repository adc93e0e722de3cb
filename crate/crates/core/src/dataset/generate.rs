use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{write_samples, Dataset, Samples};
use crate::error::{ensure, Error, Result};
use crate::perturb::{apply_spec, image_seed, PerturbSpec, UnseenKind, STAGE_ORDER};

pub const META_FILE: &str = "meta.txt";
pub const INDEX_FILE: &str = "index.csv";

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Seed for one generated dataset: the spec's explicit seed when it carries
/// one, otherwise the master seed mixed with a hash of the spec id so sibling
/// datasets draw independent noise. Image `i` then uses `seed ^ i`.
pub fn dataset_seed(spec: &PerturbSpec, master_seed: u64) -> u64 {
    spec.explicit_seed().unwrap_or_else(|| master_seed ^ fnv1a(&spec.to_string()))
}

/// Applies `spec` to every sample; labels are copied unchanged.
pub fn perturb_samples(samples: &Samples, spec: &PerturbSpec, master_seed: u64) -> Result<Samples> {
    spec.validate()?;
    let seed = dataset_seed(spec, master_seed);
    let images = samples
        .images
        .par_iter()
        .enumerate()
        .map(|(i, img)| apply_spec(img, spec, image_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Samples { images, angles: samples.angles.clone() })
}

fn meta_text(spec: &PerturbSpec, master_seed: u64, parent: &Dataset, entries: usize) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "spec_id={spec}");
    let _ = writeln!(s, "scenario={}", spec.scenario());
    for (k, v) in spec.resolved_params()? {
        let _ = writeln!(s, "param.{k}={v}");
    }
    let _ = writeln!(s, "master_seed={master_seed}");
    if spec.uses_seed() {
        let _ = writeln!(s, "dataset_seed={}", dataset_seed(spec, master_seed));
        let _ = writeln!(s, "image_seed=dataset_seed^image_index");
    }
    let _ = writeln!(s, "stage_order={STAGE_ORDER}");
    let _ = writeln!(s, "parent={}", parent.provenance.as_deref().unwrap_or("source"));
    let _ = writeln!(s, "entries={entries}");
    let _ = writeln!(s, "toolkit_version={}", env!("CARGO_PKG_VERSION"));
    Ok(s)
}

fn write_perturbed(parent: &Dataset, samples: &Samples, spec: &PerturbSpec, out_root: &Path, master_seed: u64) -> Result<Dataset> {
    let perturbed = perturb_samples(samples, spec, master_seed)?;
    let mut ds = write_samples(out_root, &perturbed)?;
    ds.provenance = Some(spec.to_string());
    let meta = out_root.join(META_FILE);
    std::fs::write(&meta, meta_text(spec, master_seed, parent, ds.len())?).map_err(|e| Error::io(&meta, e))?;
    Ok(ds)
}

/// Perturbs every image of `ds` into `out_root/images/`, writing
/// `manifest.csv` (same order and labels) and `meta.txt`.
pub fn generate_perturbed(ds: &Dataset, spec: &PerturbSpec, out_root: &Path, master_seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let samples = ds.load_samples()?;
    write_perturbed(ds, &samples, spec, out_root, master_seed)
}

/// Which perturbed datasets a benchmark tree contains.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub collection: String,
    /// Single-factor families (`blur`, `noise`, `dist`, `chan:V:darker`, ...)
    /// with the levels to emit.
    pub factors: BTreeMap<String, Vec<u8>>,
    /// Combined preset indices.
    pub combined: Vec<u8>,
    pub unseen: BTreeMap<UnseenKind, Vec<u8>>,
    pub master_seed: u64,
    /// Also emit an unperturbed `clean` copy.
    pub include_clean: bool,
}

impl BenchmarkConfig {
    pub fn empty(collection: &str) -> Self {
        Self {
            collection: collection.into(),
            factors: BTreeMap::new(),
            combined: Vec::new(),
            unseen: BTreeMap::new(),
            master_seed: 0,
            include_clean: true,
        }
    }

    /// Five levels of blur, noise and distortion, five levels in each
    /// direction for each of the six channels, the six combined presets and
    /// five levels of each unseen corruption.
    pub fn standard(collection: &str) -> Self {
        let levels = vec![1, 2, 3, 4, 5];
        let mut cfg = Self::empty(collection);
        for f in ["blur", "noise", "dist"] {
            cfg.factors.insert(f.into(), levels.clone());
        }
        for ch in crate::perturb::Channel::ALL {
            for dir in ["darker", "lighter"] {
                cfg.factors.insert(format!("chan:{ch}:{dir}"), levels.clone());
            }
        }
        cfg.combined = (1..=6).collect();
        for kind in UnseenKind::ALL {
            cfg.unseen.insert(kind, levels.clone());
        }
        cfg
    }

    /// Perturbed dataset specs in emission order (clean excluded).
    pub fn specs(&self) -> Result<Vec<PerturbSpec>> {
        let mut out = Vec::new();
        for (family, levels) in &self.factors {
            for l in levels {
                let spec: PerturbSpec = format!("{family}:L{l}").parse()?;
                ensure!(
                    spec.scenario() == crate::perturb::Scenario::Single,
                    "{family:?} is not a single-factor family"
                );
                out.push(spec);
            }
        }
        for &i in &self.combined {
            let spec = PerturbSpec::Combined(i);
            spec.validate()?;
            out.push(spec);
        }
        for (&kind, levels) in &self.unseen {
            for &level in levels {
                let spec = PerturbSpec::Unseen { kind, level };
                spec.validate()?;
                out.push(spec);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.collection.is_empty(), "benchmark collection name must not be empty");
        ensure!(
            !self.collection.contains(['/', '\\']) && self.collection != ".." && self.collection != ".",
            "collection name {:?} must be a single path component",
            self.collection
        );
        ensure!(!self.specs()?.is_empty(), "benchmark config requests no perturbed datasets");
        Ok(())
    }
}

/// Generated tree: `<out>/<collection>/<spec-id>/` per dataset plus an index.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkIndex {
    pub root: PathBuf,
    /// Spec ids in emission order, `clean` first when present.
    pub datasets: Vec<String>,
}

impl BenchmarkIndex {
    pub fn dataset_dir(&self, spec_id: &str) -> PathBuf {
        self.root.join(spec_id)
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        ensure!(lines.next() == Some("spec_id,scenario,entries"), "{} has an unexpected header", path.display());
        let datasets = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').next().unwrap_or_default().to_string())
            .collect();
        Ok(Self { root: root.to_path_buf(), datasets })
    }
}

/// Emits every dataset requested by `cfg` from `ds`. On failure, returns
/// the ids that were completed before the error.
pub fn generate_benchmark(ds: &Dataset, cfg: &BenchmarkConfig, out: &Path) -> Result<BenchmarkIndex> {
    cfg.validate()?;
    let mut specs = cfg.specs()?;
    if cfg.include_clean {
        specs.insert(0, PerturbSpec::Clean);
    }
    let root = out.join(&cfg.collection);
    let mut completed: Vec<String> = Vec::new();
    let mut index = String::from("spec_id,scenario,entries\n");
    let fail = |completed: &Vec<String>, e: Error| Error::Benchmark { completed: completed.clone(), source: Box::new(e) };
    let samples = ds.load_samples().map_err(|e| fail(&completed, e))?;
    for spec in &specs {
        let id = spec.to_string();
        log::info!("generating {}/{id}", cfg.collection);
        let made = write_perturbed(ds, &samples, spec, &root.join(&id), cfg.master_seed).map_err(|e| fail(&completed, e))?;
        let _ = writeln!(index, "{id},{},{}", spec.scenario(), made.len());
        completed.push(id);
    }
    let path = root.join(INDEX_FILE);
    std::fs::write(&path, index).map_err(|e| fail(&completed, Error::io(&path, e)))?;
    Ok(BenchmarkIndex { root, datasets: completed })
}
