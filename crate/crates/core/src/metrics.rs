//! Threshold accuracy, mean accuracy (MA), MA improvement summaries and mean
//! corruption error (mCE) for steering regression.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::perturb::{PerturbSpec, Scenario};

/// Steering-error thresholds in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    taus: Vec<f64>,
}

impl ThresholdSet {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        ensure!(!taus.is_empty(), "threshold set must not be empty");
        ensure!(taus.iter().all(|&t| t > 0.0 && t.is_finite()), "thresholds must be positive");
        ensure!(taus.windows(2).all(|w| w[0] < w[1]), "thresholds must be strictly increasing");
        Ok(Self { taus })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }
}

impl Default for ThresholdSet {
    fn default() -> Self {
        Self {
            taus: vec![1.5, 3.0, 7.5, 15.0, 30.0, 75.0],
        }
    }
}

fn check_pairs(preds: &[f64], gts: &[f64]) -> Result<()> {
    ensure!(!preds.is_empty(), "accuracy needs at least one prediction");
    ensure!(
        preds.len() == gts.len(),
        "prediction/ground-truth length mismatch: {} vs {}",
        preds.len(),
        gts.len()
    );
    Ok(())
}

/// Fraction of predictions with `|pred - gt| < tau` (strict).
pub fn accuracy_at(preds: &[f64], gts: &[f64], tau: f64) -> Result<f64> {
    check_pairs(preds, gts)?;
    ensure!(tau > 0.0, "threshold must be positive, got {tau}");
    let hits = preds.iter().zip(gts).filter(|(p, g)| (*p - *g).abs() < tau).count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn mean_accuracy(preds: &[f64], gts: &[f64], taus: &ThresholdSet) -> Result<f64> {
    check_pairs(preds, gts)?;
    let mut errs: Vec<f64> = preds.iter().zip(gts).map(|(p, g)| (p - g).abs()).collect();
    errs.sort_by(f64::total_cmp);
    // One sort, then count strictly-below entries per threshold.
    let n = errs.len() as f64;
    let sum: f64 = taus
        .taus()
        .iter()
        .map(|&tau| errs.partition_point(|&e| e < tau) as f64 / n)
        .sum();
    Ok(sum / taus.taus().len() as f64)
}

/// Maximum and average MA improvement of `method` over `baseline`, in
/// percentage points. Both maps hold MA fractions in `[0, 1]`.
pub fn improvement_summary(method: &BTreeMap<String, f64>, baseline: &BTreeMap<String, f64>) -> Result<(f64, f64)> {
    ensure!(!method.is_empty(), "improvement summary needs at least one dataset");
    ensure!(
        method.keys().eq(baseline.keys()),
        "method and baseline cover different datasets"
    );
    let deltas: Vec<f64> = method.iter().map(|(k, m)| 100.0 * (m - baseline[k])).collect();
    let max = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    Ok((max, mean))
}

/// MA values grouped as factor -> level -> MA.
pub type FactorLevels = BTreeMap<String, BTreeMap<u8, f64>>;

/// Mean corruption error with error = 1 - MA, normalized per factor by the
/// baseline's summed error and scaled to 100.
pub fn mce(method: &FactorLevels, baseline: &FactorLevels) -> Result<f64> {
    ensure!(!method.is_empty(), "mCE needs at least one factor");
    ensure!(method.keys().eq(baseline.keys()), "method and baseline cover different factors");
    let mut total = 0.0;
    for (factor, levels) in method {
        let base = &baseline[factor];
        ensure!(levels.keys().eq(base.keys()), "level sets differ for factor {factor}");
        let method_err: f64 = levels.values().map(|ma| 1.0 - ma).sum();
        let base_err: f64 = base.values().map(|ma| 1.0 - ma).sum();
        if base_err == 0.0 {
            return Err(Error::ZeroBaselineError(factor.clone()));
        }
        total += 100.0 * method_err / base_err;
    }
    Ok(total / method.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub spec_id: String,
    pub scenario: Scenario,
    pub ma: f64,
}

/// MA per evaluated dataset, in evaluation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

/// Improvement and corruption-error summary of one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub datasets: usize,
    pub mean_ma: f64,
    pub mmai: Option<f64>,
    pub amai: Option<f64>,
    /// Not defined for the clean scenario.
    pub mce: Option<f64>,
}

pub const REPORT_HEADER: &str = "spec_id,scenario,ma";

impl EvalReport {
    pub fn push(&mut self, spec_id: impl Into<String>, scenario: Scenario, ma: f64) {
        self.rows.push(ReportRow {
            spec_id: spec_id.into(),
            scenario,
            ma,
        });
    }

    pub fn ma_map(&self, scenario: Option<Scenario>) -> BTreeMap<String, f64> {
        self.rows
            .iter()
            .filter(|r| scenario.is_none_or(|s| r.scenario == s))
            .map(|r| (r.spec_id.clone(), r.ma))
            .collect()
    }

    /// Groups a scenario's rows by perturbation family and level. Rows whose
    /// spec id carries no level (combined presets) become single-level families.
    pub fn factor_levels(&self, scenario: Scenario) -> Result<FactorLevels> {
        let mut out = FactorLevels::new();
        for row in self.rows.iter().filter(|r| r.scenario == scenario) {
            let spec: PerturbSpec = row.spec_id.parse()?;
            let level = spec.level_index().unwrap_or(0);
            out.entry(spec.family()).or_default().insert(level, row.ma);
        }
        Ok(out)
    }

    /// Per-scenario summaries against a baseline report covering the same datasets.
    pub fn summarize(&self, baseline: Option<&EvalReport>) -> Result<Vec<ScenarioSummary>> {
        let mut out = Vec::new();
        for scenario in Scenario::ALL {
            let mas = self.ma_map(Some(scenario));
            if mas.is_empty() {
                continue;
            }
            let mean_ma = mas.values().sum::<f64>() / mas.len() as f64;
            let (mut mmai, mut amai, mut mce_val) = (None, None, None);
            if let Some(base) = baseline {
                let base_mas = base.ma_map(Some(scenario));
                let (max, mean) = improvement_summary(&mas, &base_mas)?;
                mmai = Some(max);
                amai = Some(mean);
                if scenario != Scenario::Clean {
                    mce_val = Some(mce(&self.factor_levels(scenario)?, &base.factor_levels(scenario)?)?);
                }
            }
            out.push(ScenarioSummary {
                scenario,
                datasets: mas.len(),
                mean_ma,
                mmai,
                amai,
                mce: mce_val,
            });
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.spec_id, r.scenario, r.ma);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        ensure!(lines.next().map(str::trim) == Some(REPORT_HEADER), "report must start with `{REPORT_HEADER}`");
        let mut report = EvalReport::default();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("report line {}: {line:?}", i + 2));
            if cols.len() != 3 {
                return Err(bad());
            }
            let ma: f64 = cols[2].trim().parse().map_err(|_| bad())?;
            report.push(cols[0].trim(), cols[1].trim().parse()?, ma);
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Fixed-width text table of scenario summaries.
pub fn summary_table(summaries: &[ScenarioSummary]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    let mut s = format!("{:<10} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "scenario", "datasets", "MA(%)", "MMAI", "AMAI", "mCE");
    for r in summaries {
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>8.2} {:>8} {:>8} {:>8}",
            r.scenario.name(),
            r.datasets,
            100.0 * r.mean_ma,
            opt(r.mmai),
            opt(r.amai),
            opt(r.mce)
        );
    }
    s
}
