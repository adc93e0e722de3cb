//! Dataset-level min-max training: each iteration picks, per factor, the
//! perturbed candidate the current model handles worst on validation data,
//! merges those training sets with the clean one, and trains for k epochs.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::{evaluate_ma, train, ModelState, TrainConfig};
use crate::dataset::{perturb_samples, Samples, Splits};
use crate::error::{ensure, Result};
use crate::metrics::ThresholdSet;
use crate::perturb::PerturbSpec;

/// One perturbed copy of the base train and validation splits.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCandidate {
    pub spec_id: String,
    pub train: Samples,
    pub val: Samples,
}

/// The discretized candidates of one factor, in level order.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGrid {
    pub factor: String,
    pub candidates: Vec<GridCandidate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxConfig {
    /// Maximum number of select-then-train iterations (T).
    pub iterations: usize,
    /// Epochs per iteration (k).
    pub epochs_per_iteration: usize,
    /// Stop before training once `clean val MA - min selected val MA` drops
    /// below this value (MA fraction).
    pub stop_gap: Option<f64>,
    /// Optimizer settings; `epochs` is ignored in favour of k.
    pub train: TrainConfig,
    pub taus: ThresholdSet,
    /// Keep a copy of the parameters each selection was made with.
    pub keep_snapshots: bool,
}

impl Default for MinMaxConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            epochs_per_iteration: 10,
            stop_gap: None,
            train: TrainConfig::default(),
            taus: ThresholdSet::default(),
            keep_snapshots: false,
        }
    }
}

impl MinMaxConfig {
    pub fn validate(&self, grids: &[FactorGrid]) -> Result<()> {
        ensure!(self.iterations >= 1, "min-max needs at least one iteration");
        ensure!(self.epochs_per_iteration >= 1, "min-max needs at least one epoch per iteration");
        ensure!(!grids.is_empty(), "min-max needs at least one factor grid");
        for g in grids {
            ensure!(!g.candidates.is_empty(), "factor {:?} has no candidate datasets", g.factor);
            for c in &g.candidates {
                ensure!(!c.val.is_empty(), "candidate {:?} has an empty validation split", c.spec_id);
            }
        }
        self.train.validate()
    }

    /// Training settings for iteration `t`: k epochs and a shuffle seed
    /// distinct per iteration.
    pub fn iteration_train_config(&self, t: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs_per_iteration,
            seed: self.train.seed ^ (t as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub clean_val_ma: f64,
    /// Validation MA of every candidate, per factor, at the pre-training parameters.
    pub candidate_ma: Vec<Vec<f64>>,
    /// Selected candidate index per factor.
    pub selections: Vec<usize>,
    pub gap: f64,
    /// Mean loss per epoch; empty when the iteration stopped early.
    pub epoch_losses: Vec<f64>,
    pub stopped: bool,
    pub snapshot: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinMaxLog {
    pub factors: Vec<String>,
    pub spec_ids: Vec<Vec<String>>,
    pub iterations: Vec<IterationRecord>,
}

impl MinMaxLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,factor,candidate,spec_id,val_ma,selected,clean_val_ma,gap,final_epoch_loss\n");
        for rec in &self.iterations {
            let loss = rec.epoch_losses.last().map_or(String::new(), |l| l.to_string());
            for (f, mas) in rec.candidate_ma.iter().enumerate() {
                for (j, ma) in mas.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{}",
                        rec.iteration,
                        self.factors[f],
                        j,
                        self.spec_ids[f][j],
                        ma,
                        u8::from(rec.selections[f] == j),
                        rec.clean_val_ma,
                        rec.gap,
                        loss
                    );
                }
            }
        }
        s
    }
}

/// Salts mixed into the master seed so the train, validation and test copies
/// of a perturbation draw independent noise.
pub const TRAIN_SEED_SALT: u64 = 0;
pub const VAL_SEED_SALT: u64 = 0x7661_6c00;
pub const TEST_SEED_SALT: u64 = 0x7465_7374;

/// Candidate grids for `families` (e.g. `blur`, `chan:V:darker`) at `levels`,
/// perturbing the base train and validation splits.
pub fn build_grids(base: &Splits, families: &[String], levels: &[u8], master_seed: u64) -> Result<Vec<FactorGrid>> {
    ensure!(!families.is_empty() && !levels.is_empty(), "grids need at least one factor and one level");
    families
        .iter()
        .map(|family| {
            let candidates = levels
                .iter()
                .map(|l| {
                    let spec: PerturbSpec = format!("{family}:L{l}").parse()?;
                    Ok(GridCandidate {
                        spec_id: spec.to_string(),
                        train: perturb_samples(&base.train, &spec, master_seed ^ TRAIN_SEED_SALT)?,
                        val: perturb_samples(&base.val, &spec, master_seed ^ VAL_SEED_SALT)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FactorGrid { factor: family.clone(), candidates })
        })
        .collect()
}

/// Index of the smallest value; the lowest index wins exact ties.
pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Runs up to `cfg.iterations` rounds of worst-case selection and training.
/// Each round's training set is rebuilt from scratch as the selected
/// candidates' training splits followed by the clean training split.
pub fn minmax_train(mut model: ModelState, base: &Splits, grids: &[FactorGrid], cfg: &MinMaxConfig) -> Result<(ModelState, MinMaxLog)> {
    cfg.validate(grids)?;
    ensure!(!base.train.is_empty() && !base.val.is_empty(), "base dataset needs train and validation splits");
    let mut log = MinMaxLog {
        factors: grids.iter().map(|g| g.factor.clone()).collect(),
        spec_ids: grids.iter().map(|g| g.candidates.iter().map(|c| c.spec_id.clone()).collect()).collect(),
        iterations: Vec::new(),
    };
    for t in 0..cfg.iterations {
        let clean_val_ma = evaluate_ma(&model, &base.val, &cfg.taus)?;
        let candidate_ma = grids
            .par_iter()
            .map(|g| g.candidates.iter().map(|c| evaluate_ma(&model, &c.val, &cfg.taus)).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        let selections: Vec<usize> = candidate_ma.iter().map(|m| argmin_first(m)).collect();
        let worst = candidate_ma
            .iter()
            .zip(&selections)
            .map(|(m, &j)| m[j])
            .fold(f64::INFINITY, f64::min);
        let gap = clean_val_ma - worst;
        let snapshot = cfg.keep_snapshots.then(|| model.params.clone());
        let stopped = cfg.stop_gap.is_some_and(|th| gap < th);
        let mut rec = IterationRecord { iteration: t, clean_val_ma, candidate_ma, selections, gap, epoch_losses: Vec::new(), stopped, snapshot };
        log::info!(
            "min-max iteration {t}: clean val MA {:.4}, gap {:.4}, selections {:?}",
            clean_val_ma,
            gap,
            rec.selections
        );
        if stopped {
            log.iterations.push(rec);
            break;
        }
        let union = Samples::concat(
            grids
                .iter()
                .zip(&rec.selections)
                .map(|(g, &j)| &g.candidates[j].train)
                .chain(std::iter::once(&base.train)),
        );
        rec.epoch_losses = train(&mut model, &union, &cfg.iteration_train_config(t))?.epoch_losses;
        log.iterations.push(rec);
    }
    Ok((model, log))
}

/// The merge-everything baseline: trains on the clean training split plus
/// every candidate's training split.
pub fn naive_augmentation_train(model: &mut ModelState, base: &Splits, grids: &[FactorGrid], cfg: &TrainConfig) -> Result<super::TrainLog> {
    let union = Samples::concat(
        grids
            .iter()
            .flat_map(|g| g.candidates.iter().map(|c| &c.train))
            .chain(std::iter::once(&base.train)),
    );
    train(model, &union, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Image;
    use crate::learner::{init_model, Activation, ArchConfig, ConvStage};

    #[test]
    fn argmin_ties_go_low() {
        assert_eq!(argmin_first(&[0.5, 0.2, 0.2, 0.9]), 1);
        assert_eq!(argmin_first(&[0.3]), 0);
        assert_eq!(argmin_first(&[0.3, 0.3]), 0);
    }

    fn arch() -> ArchConfig {
        ArchConfig {
            input_width: 6,
            input_height: 4,
            conv: vec![ConvStage::new(2, 3, 2, 1)],
            dense: vec![4, 1],
            activation: Activation::Tanh,
        }
    }

    fn samples(n: usize, shift: u8) -> Samples {
        let images = (0..n).map(|i| Image::filled(6, 4, [(i * 20) as u8 + shift, 40, 90])).collect();
        let angles = (0..n).map(|i| i as f64 - 2.0).collect();
        Samples::new(images, angles).unwrap()
    }

    #[test]
    fn config_errors() {
        let base = Splits { train: samples(4, 0), val: samples(2, 0), test: samples(2, 0) };
        let m = init_model(&arch(), 0).unwrap();
        let cfg = MinMaxConfig { iterations: 1, epochs_per_iteration: 1, ..MinMaxConfig::default() };
        assert!(minmax_train(m.clone(), &base, &[], &cfg).is_err());
        let empty = FactorGrid { factor: "blur".into(), candidates: vec![] };
        assert!(minmax_train(m.clone(), &base, &[empty], &cfg).is_err());
        let g = FactorGrid {
            factor: "blur".into(),
            candidates: vec![GridCandidate { spec_id: "clean".into(), train: samples(4, 0), val: samples(2, 0) }],
        };
        let bad = MinMaxConfig { iterations: 0, ..cfg.clone() };
        assert!(minmax_train(m, &base, &[g], &bad).is_err());
    }

    #[test]
    fn identity_grids_reduce_to_duplicated_plain_training() {
        let base = Splits { train: samples(5, 0), val: samples(3, 1), test: samples(2, 0) };
        let ident = |f: &str| FactorGrid {
            factor: f.into(),
            candidates: vec![GridCandidate { spec_id: "clean".into(), train: base.train.clone(), val: base.val.clone() }],
        };
        let cfg = MinMaxConfig {
            iterations: 3,
            epochs_per_iteration: 2,
            train: TrainConfig { batch_size: 4, learning_rate: 1e-2, ..TrainConfig::default() },
            ..MinMaxConfig::default()
        };
        let m0 = init_model(&arch(), 3).unwrap();
        let (m, log) = minmax_train(m0.clone(), &base, &[ident("a"), ident("b")], &cfg).unwrap();
        assert_eq!(log.iterations.len(), 3);
        assert!(log.iterations.iter().all(|r| r.selections == vec![0, 0]));
        // Equivalent plain training on R three times over.
        let mut plain = m0;
        let union = Samples::concat([&base.train, &base.train, &base.train]);
        for t in 0..3 {
            train(&mut plain, &union, &cfg.iteration_train_config(t)).unwrap();
        }
        assert_eq!(plain.params, m.params);
        assert!(log.to_csv().lines().count() == 1 + 3 * 2);
    }

    #[test]
    fn stop_gap_halts_before_training() {
        let base = Splits { train: samples(5, 0), val: samples(3, 0), test: samples(2, 0) };
        let g = FactorGrid {
            factor: "x".into(),
            candidates: vec![GridCandidate { spec_id: "clean".into(), train: base.train.clone(), val: base.val.clone() }],
        };
        let cfg = MinMaxConfig { iterations: 4, epochs_per_iteration: 1, stop_gap: Some(1e-9), ..MinMaxConfig::default() };
        let m0 = init_model(&arch(), 1).unwrap();
        let (m, log) = minmax_train(m0.clone(), &base, &[g], &cfg).unwrap();
        // Identical candidate and clean val sets give gap 0 < threshold.
        assert_eq!(log.iterations.len(), 1);
        assert!(log.iterations[0].stopped);
        assert_eq!(m, m0);
    }
}
