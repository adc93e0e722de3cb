use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use robustdrive::dataset::{
    generate_benchmark, generate_perturbed, load_manifest, write_samples, BenchmarkConfig, BenchmarkIndex, Samples,
    SplitConfig, Splits,
};
use robustdrive::fid::{extract_features, fid_from_features, read_features, write_features, FeatureExtractor, ThumbnailExtractor, FEATURE_MAGIC};
use robustdrive::imgcore::io::{read_image, write_image};
use robustdrive::learner::{
    build_grids, evaluate_ma, evaluate_scenarios, init_model, load_checkpoint, minmax_train, save_checkpoint, train,
    ArchConfig, MinMaxConfig, ModelState, TrainConfig, TEST_SEED_SALT,
};
use robustdrive::metrics::{summary_table, EvalReport, ThresholdSet};
use robustdrive::perturb::{apply_spec, image_seed, PerturbSpec, UnseenKind};
use robustdrive::sensitivity::{canonical_sweep, curves_from_csv, estimate_sensitivity, render_svg, select_levels, sweep_factor, write_curves};
use robustdrive::synth::{synthetic_arch, SynthConfig};

use crate::config::{keys_help, parse_list, RunConfig};
use crate::{Cli, Command, ENV_OUT};

/// Resolves an output path against `ROBUSTDRIVE_OUT` when it is relative.
fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(ENV_OUT) {
        Some(root) if p.is_relative() && !root.is_empty() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| robustdrive::Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| robustdrive::Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

fn arch(cfg: &RunConfig) -> Result<ArchConfig> {
    Ok(match cfg.raw("model.arch") {
        "synthetic" => synthetic_arch(),
        "desk" => ArchConfig::desk(),
        "pilotnet" => ArchConfig::pilotnet(),
        other => bail!("unknown model.arch {other:?} (synthetic | desk | pilotnet)"),
    })
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: cfg.get("train.lr")?,
        batch_size: cfg.get("train.batch")?,
        epochs: cfg.get("train.epochs")?,
        seed: cfg.get("train.seed")?,
        ..TrainConfig::default()
    })
}

fn split_config(cfg: &RunConfig) -> Result<SplitConfig> {
    Ok(SplitConfig {
        train_w: cfg.get("split.train")?,
        val_w: cfg.get("split.val")?,
        test_w: cfg.get("split.test")?,
        seed: cfg.get("split.seed")?,
    })
}

fn extractor(id: &str) -> Result<Box<dyn FeatureExtractor>> {
    let ex = ThumbnailExtractor;
    if id != ex.id() {
        bail!("unknown feature extractor {id:?} (available: {})", ex.id());
    }
    Ok(Box::new(ex))
}

/// Loads a manifest's samples at the model's input size.
fn load_for(manifest: &Path, arch: &ArchConfig) -> Result<Samples> {
    let s = load_manifest(manifest)?.load_samples()?;
    if s.images.iter().all(|i| i.width() == arch.input_width && i.height() == arch.input_height) {
        Ok(s)
    } else {
        log::info!("resizing inputs to {}x{}", arch.input_width, arch.input_height);
        Ok(s.resized(arch.input_width, arch.input_height)?)
    }
}

fn initial_model(init: Option<&Path>, cfg: &RunConfig) -> Result<ModelState> {
    match init {
        Some(p) => Ok(load_checkpoint(p)?),
        None => Ok(init_model(&arch(cfg)?, cfg.get("model.seed")?)?),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.global.config {
        cfg.merge_file(p)?;
    }
    cfg.merge_overrides(&cli.global.set)?;
    log::debug!("resolved configuration:\n{}", cfg.dump());
    let taus = ThresholdSet::default();
    match cli.command {
        Command::Keys => {
            print!("{}", keys_help());
            Ok(())
        }
        Command::Perturb { input, spec, out, seed } => {
            let spec: PerturbSpec = spec.parse()?;
            let out = out_path(&out);
            if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                let ds = load_manifest(&input)?;
                let made = generate_perturbed(&ds, &spec, &out, seed)?;
                println!("wrote {} images to {}", made.len(), out.display());
            } else {
                let img = read_image(&input)?;
                let s = image_seed(robustdrive::dataset::dataset_seed(&spec, seed), 0);
                write_image(&out, &apply_spec(&img, &spec, s)?)?;
                let mut meta = format!("spec_id={spec}\nsource={}\n", input.display());
                for (k, v) in spec.resolved_params()? {
                    meta.push_str(&format!("param.{k}={v}\n"));
                }
                if spec.uses_seed() {
                    meta.push_str(&format!("image_seed={s}\n"));
                }
                write_text(&with_suffix(&out, ".meta.txt"), &meta)?;
                println!("wrote {}", out.display());
            }
            Ok(())
        }
        Command::Benchgen { base, out, seed, collection } => {
            if let Some(s) = seed {
                cfg.set("bench.seed", &s.to_string())?;
            }
            if let Some(c) = collection {
                cfg.set("bench.collection", &c)?;
            }
            let bench = bench_config(&cfg)?;
            bench.validate()?;
            let ds = load_manifest(&base)?;
            let index = generate_benchmark(&ds, &bench, &out_path(&out))?;
            let perturbed = index.datasets.iter().filter(|d| d.as_str() != "clean").count();
            println!("generated {perturbed} perturbed datasets ({} total) under {}", index.datasets.len(), index.root.display());
            Ok(())
        }
        Command::Fid { a, b, extractor: ex_id, export_a, export_b } => {
            let ex_id = ex_id.unwrap_or_else(|| cfg.raw("fid.extractor").to_string());
            let ex = extractor(&ex_id)?;
            let fa = features_of(&a, ex.as_ref())?;
            let fb = features_of(&b, ex.as_ref())?;
            if let Some(p) = export_a {
                write_features(&out_path(&p), &fa)?;
            }
            if let Some(p) = export_b {
                write_features(&out_path(&p), &fb)?;
            }
            let r = fid_from_features(&fa, &fb, &ex_id)?;
            println!("{}", r.fid);
            eprintln!("n_a={} n_b={} extractor={}", r.n_a, r.n_b, r.extractor);
            Ok(())
        }
        Command::Synth { out, count, seed } => {
            if let Some(c) = count {
                cfg.set("synth.count", &c.to_string())?;
            }
            if let Some(s) = seed {
                cfg.set("synth.seed", &s.to_string())?;
            }
            let sc = SynthConfig {
                count: cfg.get("synth.count")?,
                width: cfg.get("synth.width")?,
                height: cfg.get("synth.height")?,
                max_angle_deg: cfg.get("synth.max_angle")?,
                seed: cfg.get("synth.seed")?,
            };
            let out = out_path(&out);
            let samples = robustdrive::synth::generate(&sc)?;
            let ds = write_samples(&out, &samples)?;
            let meta = format!(
                "source=synthetic\ncount={}\nwidth={}\nheight={}\nmax_angle_deg={}\nseed={}\ntoolkit_version={}\n",
                sc.count,
                sc.width,
                sc.height,
                sc.max_angle_deg,
                sc.seed,
                env!("CARGO_PKG_VERSION")
            );
            write_text(&out.join(robustdrive::dataset::META_FILE), &meta)?;
            println!("wrote {} frames to {}", ds.len(), out.display());
            Ok(())
        }
        Command::Train { data, out, log, init } => {
            let mut model = initial_model(init.as_deref(), &cfg)?;
            let splits = Splits::from_samples(&load_for(&data, &model.arch)?, &split_config(&cfg)?)?;
            let tc = train_config(&cfg)?;
            let tlog = train(&mut model, &splits.train, &tc)?;
            let out = out_path(&out);
            save_checkpoint(&model, &out)?;
            write_text(&log.map_or_else(|| with_suffix(&out, ".log.csv"), |p| out_path(&p)), &tlog.to_csv())?;
            report_splits(&model, &splits, &taus)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Minmax { data, out, log, init, snapshots } => {
            let model = initial_model(init.as_deref(), &cfg)?;
            let splits = Splits::from_samples(&load_for(&data, &model.arch)?, &split_config(&cfg)?)?;
            let families: Vec<String> = parse_list(cfg.raw("minmax.factors"))?;
            let levels: Vec<u8> = cfg.list("minmax.levels")?;
            let grids = build_grids(&splits, &families, &levels, cfg.get("minmax.seed")?)?;
            let mc = MinMaxConfig {
                iterations: cfg.get("minmax.T")?,
                epochs_per_iteration: cfg.get("minmax.k")?,
                stop_gap: cfg.optional("minmax.stop_gap")?,
                train: train_config(&cfg)?,
                taus: taus.clone(),
                keep_snapshots: snapshots.is_some(),
            };
            let (model, mlog) = minmax_train(model, &splits, &grids, &mc)?;
            let out = out_path(&out);
            save_checkpoint(&model, &out)?;
            write_text(&log.map_or_else(|| with_suffix(&out, ".minmax.csv"), |p| out_path(&p)), &mlog.to_csv())?;
            if let Some(dir) = snapshots {
                let dir = out_path(&dir);
                for rec in &mlog.iterations {
                    let mut snap = model.clone();
                    snap.params = rec.snapshot.clone().context("snapshot missing from iteration log")?;
                    save_checkpoint(&snap, &dir.join(format!("iter_{}.bin", rec.iteration)))?;
                }
            }
            for rec in &mlog.iterations {
                println!(
                    "iteration {}: clean val MA {:.4}, gap {:.4}, selected {}{}",
                    rec.iteration,
                    rec.clean_val_ma,
                    rec.gap,
                    rec.selections.iter().enumerate().map(|(f, &j)| mlog.spec_ids[f][j].as_str()).collect::<Vec<_>>().join(" "),
                    if rec.stopped { " (stopped)" } else { "" }
                );
            }
            report_splits(&model, &splits, &taus)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Eval { model, bench, out, baseline_report, baseline_model } => {
            let m = load_checkpoint(&model)?;
            let index = BenchmarkIndex::read(&bench)?;
            let baseline = match (baseline_report, baseline_model) {
                (Some(p), _) => Some(EvalReport::read(&p)?),
                (None, Some(p)) => Some(evaluate_scenarios(&load_checkpoint(&p)?, &index, None, &taus)?.report),
                (None, None) => None,
            };
            let ev = evaluate_scenarios(&m, &index, baseline.as_ref(), &taus)?;
            let out = out_path(&out);
            write_text(&out, &ev.report.to_csv())?;
            for (id, why) in &ev.missing {
                eprintln!("missing dataset {id}: {why}");
            }
            print!("{}", summary_table(&ev.summaries));
            println!("wrote {} rows to {}", ev.report.rows.len(), out.display());
            Ok(())
        }
        Command::Sweep { model, data, factor, specs, out, svg, select } => {
            let m = load_checkpoint(&model)?;
            let splits = Splits::from_samples(&load_for(&data, &m.arch)?, &split_config(&cfg)?)?;
            let specs: Vec<PerturbSpec> = if specs.is_empty() {
                canonical_sweep(&factor)?
            } else {
                specs.iter().map(|s| s.parse()).collect::<robustdrive::Result<_>>()?
            };
            if let Some(bad) = specs.iter().find(|s| s.family() != factor && s.scenario() != robustdrive::perturb::Scenario::Clean) {
                bail!("spec {bad} does not belong to factor {factor:?}");
            }
            let ex = extractor(cfg.raw("fid.extractor"))?;
            let seed: u64 = cfg.get("sweep.seed")?;
            let mut curve = sweep_factor(&m, &splits.test, &specs, ex.as_ref(), &taus, seed ^ TEST_SEED_SALT)?;
            curve.factor = factor;
            let out = out_path(&out);
            write_curves(&out, std::slice::from_ref(&curve))?;
            if let Some(p) = svg {
                write_text(&out_path(&p), &render_svg(std::slice::from_ref(&curve)))?;
            }
            println!("clean MA {:.4}", curve.baseline_ma);
            for s in &curve.samples {
                println!("{:<28} fid {:>12.6} MA {:.4}", s.spec_id, s.fid, s.ma);
            }
            match estimate_sensitivity(&curve) {
                Ok(slopes) => {
                    for (mid, d) in slopes {
                        println!("dMA/dFID at FID {mid:.6}: {d:.6}");
                    }
                }
                Err(e) => log::warn!("no sensitivity estimate: {e}"),
            }
            if let Some(n) = select {
                let picked = select_levels(&curve, n)?;
                println!("selected: {}", picked.iter().map(|s| s.spec_id.as_str()).collect::<Vec<_>>().join(" "));
            }
            Ok(())
        }
        Command::Plot { curves, out } => {
            let mut all = Vec::new();
            for p in &curves {
                let text = std::fs::read_to_string(p).map_err(|e| robustdrive::Error::Io { path: p.clone(), source: e })?;
                all.extend(curves_from_csv(&text)?);
            }
            let out = out_path(&out);
            write_text(&out, &render_svg(&all))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn report_splits(model: &ModelState, splits: &Splits, taus: &ThresholdSet) -> Result<()> {
    for (name, s) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if !s.is_empty() {
            println!("{name} MA {:.4}", evaluate_ma(model, s, taus)?);
        }
    }
    Ok(())
}

fn features_of(path: &Path, ex: &dyn FeatureExtractor) -> Result<robustdrive::fid::FeatureMatrix> {
    let mut magic = [0u8; 8];
    let is_features = std::fs::File::open(path)
        .and_then(|mut f| std::io::Read::read_exact(&mut f, &mut magic))
        .map(|_| &magic == FEATURE_MAGIC)
        .unwrap_or(false);
    if is_features {
        return Ok(read_features(path)?);
    }
    let samples = load_manifest(path)?.load_samples()?;
    Ok(extract_features(&samples.images, ex)?)
}

fn bench_config(cfg: &RunConfig) -> Result<BenchmarkConfig> {
    let collection = cfg.raw("bench.collection");
    let mut b = match cfg.raw("bench.grid") {
        "standard" => BenchmarkConfig::standard(collection),
        "none" => BenchmarkConfig::empty(collection),
        other => bail!("unknown bench.grid {other:?} (standard | none)"),
    };
    b.master_seed = cfg.get("bench.seed")?;
    b.include_clean = cfg.get("bench.clean")?;
    match cfg.raw("bench.combined") {
        "grid" => {}
        "none" | "" => b.combined.clear(),
        _ => b.combined = cfg.list("bench.combined")?,
    }
    for (family, levels) in cfg.with_prefix("bench.factor.") {
        let levels: Vec<u8> = parse_list(&levels)?;
        if levels.is_empty() {
            b.factors.remove(&family);
        } else {
            b.factors.insert(family, levels);
        }
    }
    for (kind, levels) in cfg.with_prefix("bench.unseen.") {
        let kind: UnseenKind = kind.parse()?;
        let levels: Vec<u8> = parse_list(&levels)?;
        if levels.is_empty() {
            b.unseen.remove(&kind);
        } else {
            b.unseen.insert(kind, levels);
        }
    }
    Ok(b)
}
