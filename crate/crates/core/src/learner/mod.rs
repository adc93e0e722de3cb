//! Steering regressor: five-conv / three-dense network, reverse-mode
//! gradients, Adam, plain training and the min-max dataset-selection trainer.

mod checkpoint;
mod minmax;
pub(crate) mod net;
mod scenarios;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use minmax::{
    build_grids, minmax_train, naive_augmentation_train, FactorGrid, GridCandidate, IterationRecord, MinMaxConfig,
    MinMaxLog, TEST_SEED_SALT, TRAIN_SEED_SALT, VAL_SEED_SALT,
};
pub use scenarios::{evaluate_scenarios, evaluate_sets, ScenarioEvaluation};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Samples;
use crate::error::{ensure, Error, Result};
use crate::imgcore::Image;
use crate::metrics::{mean_accuracy, ThresholdSet};
use net::{Plan, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvStage {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Zero padding on every side.
    pub padding: usize,
}

impl ConvStage {
    pub const fn new(filters: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self { filters, kernel, stride, padding }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub input_width: usize,
    pub input_height: usize,
    pub conv: Vec<ConvStage>,
    /// Dense layer widths; the last must be 1.
    pub dense: Vec<usize>,
    pub activation: Activation,
}

impl ArchConfig {
    /// Desk-scale network on 64x32 inputs: 8-5x5/2, 12-5x5/2, then three
    /// 16-3x3/1 stages, dense 64-16-1.
    pub fn desk() -> Self {
        Self {
            input_width: 64,
            input_height: 32,
            conv: vec![
                ConvStage::new(8, 5, 2, 2),
                ConvStage::new(12, 5, 2, 2),
                ConvStage::new(16, 3, 1, 1),
                ConvStage::new(16, 3, 1, 1),
                ConvStage::new(16, 3, 1, 1),
            ],
            dense: vec![64, 16, 1],
            activation: Activation::Relu,
        }
    }

    /// The five-conv / three-dense layout at full size on 200x66 inputs.
    pub fn pilotnet() -> Self {
        Self {
            input_width: 200,
            input_height: 66,
            conv: vec![
                ConvStage::new(24, 5, 2, 0),
                ConvStage::new(36, 5, 2, 0),
                ConvStage::new(48, 5, 2, 0),
                ConvStage::new(64, 3, 1, 0),
                ConvStage::new(64, 3, 1, 0),
            ],
            dense: vec![100, 50, 10, 1],
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.input_width >= 1 && self.input_height >= 1, "input size must be nonzero");
        ensure!(!self.conv.is_empty(), "architecture needs at least one conv stage");
        ensure!(!self.dense.is_empty(), "architecture needs at least one dense stage");
        ensure!(self.dense.last() == Some(&1), "final dense width must be 1 (steering degrees)");
        ensure!(self.dense.iter().all(|&w| w >= 1), "dense widths must be positive");
        for (i, st) in self.conv.iter().enumerate() {
            ensure!(
                st.filters >= 1 && st.kernel >= 1 && st.stride >= 1,
                "conv stage {} needs positive filters, kernel and stride",
                i + 1
            );
        }
        Ok(())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(Plan::new(self)?.n_params)
    }
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub arch: ArchConfig,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.learning_rate > 0.0, "learning rate must be positive");
        ensure!(self.batch_size >= 1, "batch size must be at least 1");
        ensure!((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2), "Adam betas must be in [0, 1)");
        ensure!(self.epsilon > 0.0, "Adam epsilon must be positive");
        Ok(())
    }
}

/// Fan-in scaled uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)` for ReLU,
/// `sqrt(3 / fan_in)` for tanh), zero biases.
pub fn init_model(arch: &ArchConfig, seed: u64) -> Result<ModelState> {
    let plan = Plan::new(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; plan.n_params];
    let gain = match arch.activation {
        Activation::Relu => 6.0,
        Activation::Tanh => 3.0,
    };
    for (off, len, fan_in) in plan.weight_blocks() {
        let bound = (gain / fan_in as f64).sqrt();
        for p in &mut params[off..off + len] {
            *p = rng.gen_range(-bound..bound);
        }
    }
    Ok(ModelState {
        arch: arch.clone(),
        adam: AdamState::new(plan.n_params),
        params,
        init_seed: seed,
    })
}

fn encode_batch(plan: &Plan, images: &[&Image]) -> Result<Vec<f64>> {
    let mut buf = vec![0.0; images.len() * plan.input_len];
    for (img, chunk) in images.iter().zip(buf.chunks_exact_mut(plan.input_len)) {
        plan.encode(img, chunk)?;
    }
    Ok(buf)
}

/// Evaluation batch size; bounds memory only, results do not depend on it.
const EVAL_BATCH: usize = 256;

/// Predicted steering angles in degrees, one per image, in input order.
pub fn forward(model: &ModelState, images: &[Image]) -> Result<Vec<f64>> {
    let plan = Plan::new(&model.arch)?;
    ensure!(model.params.len() == plan.n_params, "parameter count does not match the architecture");
    let mut preds = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let refs: Vec<&Image> = chunk.iter().collect();
        let x = encode_batch(&plan, &refs)?;
        preds.extend(plan.forward(&model.params, &x, refs.len(), None));
    }
    Ok(preds)
}

fn mse_and_grad(plan: &Plan, params: &[f64], images: &[&Image], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure!(!images.is_empty(), "loss needs a nonempty batch");
    ensure!(images.len() == targets.len(), "batch has {} images but {} targets", images.len(), targets.len());
    let x = encode_batch(plan, images)?;
    let mut tape = Tape::default();
    let preds = plan.forward(params, &x, images.len(), Some(&mut tape));
    let n = images.len() as f64;
    let loss = preds.iter().zip(targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / n;
    let d_out: Vec<f64> = preds.iter().zip(targets).map(|(p, y)| 2.0 * (p - y) / n).collect();
    let mut grad = vec![0.0; plan.n_params];
    plan.backward(params, &tape, &d_out, &mut grad);
    Ok((loss, grad))
}

/// Mean squared error in degrees² and its gradient with respect to the parameters.
pub fn loss_and_grad(model: &ModelState, images: &[Image], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let plan = Plan::new(&model.arch)?;
    let refs: Vec<&Image> = images.iter().collect();
    mse_and_grad(&plan, &model.params, &refs, targets)
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut ModelState, grad: &[f64], cfg: &TrainConfig) -> Result<()> {
    let n = model.params.len();
    ensure!(grad.len() == n, "gradient length {} does not match {} parameters", grad.len(), n);
    ensure!(model.adam.m.len() == n && model.adam.v.len() == n, "optimizer moments are not shaped like the parameters");
    let st = &mut model.adam;
    st.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(st.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(st.t as i32);
    for (((p, m), v), &g) in model.params.iter_mut().zip(&mut st.m).zip(&mut st.v).zip(grad) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

/// Minibatch Adam over `data` for `cfg.epochs` epochs, reshuffling each epoch
/// with a generator seeded from `cfg.seed` and the epoch index.
pub fn train(model: &mut ModelState, data: &Samples, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if cfg.epochs > 0 && data.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".into()));
    }
    let plan = Plan::new(&model.arch)?;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size) {
            let images: Vec<&Image> = idx.iter().map(|&i| &data.images[i]).collect();
            let targets: Vec<f64> = idx.iter().map(|&i| data.angles[i]).collect();
            let (loss, grad) = mse_and_grad(&plan, &model.params, &images, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss diverged at epoch {}", epoch + 1)));
            }
            adam_step(model, &grad, cfg)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {} loss {mean:.4}", epoch + 1);
        log.epoch_losses.push(mean);
    }
    Ok(log)
}

/// Mean accuracy of the model's predictions on `data`.
pub fn evaluate_ma(model: &ModelState, data: &Samples, taus: &ThresholdSet) -> Result<f64> {
    ensure!(!data.is_empty(), "cannot evaluate on an empty dataset");
    let preds = forward(model, &data.images)?;
    mean_accuracy(&preds, &data.angles, taus)
}
