use std::path::Path;

use super::{evaluate_ma, ModelState};
use crate::dataset::{load_manifest, BenchmarkIndex, Samples, MANIFEST_FILE};
use crate::error::Result;
use crate::metrics::{EvalReport, ScenarioSummary, ThresholdSet};
use crate::perturb::PerturbSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvaluation {
    pub report: EvalReport,
    pub summaries: Vec<ScenarioSummary>,
    /// Datasets listed in the index that could not be loaded, with the reason.
    pub missing: Vec<(String, String)>,
}

/// MA of `model` on named in-memory sets; names must be spec ids.
pub fn evaluate_sets(model: &ModelState, sets: &[(String, &Samples)], taus: &ThresholdSet) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for (id, samples) in sets {
        let spec: PerturbSpec = id.parse()?;
        let ma = evaluate_ma(model, samples, taus)?;
        report.push(id.clone(), spec.scenario(), ma);
    }
    Ok(report)
}

fn load_for(model: &ModelState, dir: &Path) -> Result<Samples> {
    let samples = load_manifest(&dir.join(MANIFEST_FILE))?.load_samples()?;
    let (w, h) = (model.arch.input_width, model.arch.input_height);
    if samples.images.iter().all(|i| i.width() == w && i.height() == h) {
        Ok(samples)
    } else {
        samples.resized(w, h)
    }
}

/// Evaluates every dataset of a benchmark tree, grouping rows into scenarios
/// by spec-id prefix. Datasets that fail to load are listed and skipped.
pub fn evaluate_scenarios(
    model: &ModelState,
    index: &BenchmarkIndex,
    baseline: Option<&EvalReport>,
    taus: &ThresholdSet,
) -> Result<ScenarioEvaluation> {
    let mut report = EvalReport::default();
    let mut missing = Vec::new();
    for id in &index.datasets {
        let spec: PerturbSpec = id.parse()?;
        match load_for(model, &index.dataset_dir(id)) {
            Ok(samples) => {
                let ma = evaluate_ma(model, &samples, taus)?;
                log::info!("{id}: MA {ma:.4}");
                report.push(id.clone(), spec.scenario(), ma);
            }
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                missing.push((id.clone(), e.to_string()));
            }
        }
    }
    let summaries = report.summarize(baseline)?;
    Ok(ScenarioEvaluation { report, summaries, missing })
}
