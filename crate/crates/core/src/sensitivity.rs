//! MA-versus-FID curves per perturbation factor, their slopes, and the
//! FID-spaced level selection used to discretize a factor's range.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{Map, Value};

use crate::dataset::{perturb_samples, Samples};
use crate::error::{ensure, Error, Result};
use crate::fid::{fid_between, FeatureExtractor};
use crate::learner::{evaluate_ma, ModelState};
use crate::metrics::ThresholdSet;
use crate::perturb::PerturbSpec;

pub const CURVE_HEADER: &str = "factor,param_json,fid,ma";

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    /// Spec id that produced the perturbed set.
    pub spec_id: String,
    pub params: BTreeMap<String, f64>,
    pub fid: f64,
    pub ma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCurve {
    pub factor: String,
    /// Sorted by FID ascending.
    pub samples: Vec<CurveSample>,
    /// MA on the unperturbed set.
    pub baseline_ma: f64,
}

/// The five canonical levels of a single-factor family (`blur`, `chan:V:darker`, ...).
pub fn canonical_sweep(family: &str) -> Result<Vec<PerturbSpec>> {
    (1..=5).map(|l| format!("{family}:L{l}").parse()).collect()
}

/// Perturbs `test` with every spec, then records the FID between the clean
/// and perturbed sets and the model's MA on the perturbed set.
pub fn sweep_factor(
    model: &ModelState,
    test: &Samples,
    specs: &[PerturbSpec],
    extractor: &dyn FeatureExtractor,
    taus: &ThresholdSet,
    master_seed: u64,
) -> Result<SensitivityCurve> {
    ensure!(!specs.is_empty(), "sweep needs at least one parameter setting");
    let factor = specs[0].family();
    let baseline_ma = evaluate_ma(model, test, taus)?;
    let mut samples = Vec::with_capacity(specs.len());
    for spec in specs {
        let perturbed = perturb_samples(test, spec, master_seed)?;
        let fid = fid_between(&test.images, &perturbed.images, extractor)?.fid;
        let ma = evaluate_ma(model, &perturbed, taus)?;
        log::info!("{spec}: fid {fid:.4} ma {ma:.4}");
        samples.push(CurveSample {
            spec_id: spec.to_string(),
            params: spec.resolved_params()?.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            fid,
            ma,
        });
    }
    samples.sort_by(|a, b| a.fid.total_cmp(&b.fid));
    Ok(SensitivityCurve { factor, samples, baseline_ma })
}

/// Forward differences `(FID midpoint, dMA/dFID)` between consecutive samples.
/// Samples repeating the previous FID are skipped.
pub fn estimate_sensitivity(curve: &SensitivityCurve) -> Result<Vec<(f64, f64)>> {
    let mut usable: Vec<&CurveSample> = Vec::new();
    for s in &curve.samples {
        if usable.last().is_some_and(|p| p.fid == s.fid) {
            log::warn!("{}: duplicate FID {} at {}, skipped", curve.factor, s.fid, s.spec_id);
            continue;
        }
        usable.push(s);
    }
    if usable.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: usable.len() });
    }
    Ok(usable
        .windows(2)
        .map(|w| ((w[0].fid + w[1].fid) / 2.0, (w[1].ma - w[0].ma) / (w[1].fid - w[0].fid)))
        .collect())
}

/// Picks `n` samples whose FIDs are nearest to `n` evenly spaced targets
/// from the minimum to the maximum FID (the midpoint when `n = 1`). A sample
/// already taken yields to the next-nearest unused one; distance ties go to
/// the lower FID. The result is sorted by FID.
pub fn select_levels(curve: &SensitivityCurve, n: usize) -> Result<Vec<CurveSample>> {
    let m = curve.samples.len();
    ensure!(n >= 1, "must select at least one level");
    if n > m {
        return Err(Error::InsufficientSamples { needed: n, got: m });
    }
    let lo = curve.samples[0].fid;
    let hi = curve.samples[m - 1].fid;
    let targets: Vec<f64> = if n == 1 {
        vec![(lo + hi) / 2.0]
    } else {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let mut used = vec![false; m];
    for t in targets {
        let pick = (0..m)
            .filter(|&i| !used[i])
            .min_by(|&a, &b| (curve.samples[a].fid - t).abs().total_cmp(&(curve.samples[b].fid - t).abs()))
            .expect("n <= sample count leaves an unused sample");
        used[pick] = true;
    }
    Ok((0..m).filter(|&i| used[i]).map(|i| curve.samples[i].clone()).collect())
}

fn param_json(s: &CurveSample) -> String {
    let mut obj = Map::new();
    obj.insert("spec".into(), Value::String(s.spec_id.clone()));
    for (k, v) in &s.params {
        obj.insert(k.clone(), serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number));
    }
    Value::Object(obj).to_string()
}

impl SensitivityCurve {
    pub fn to_csv(&self) -> Result<String> {
        curves_to_csv(std::slice::from_ref(self))
    }
}

/// One row per sample of every curve.
pub fn curves_to_csv(curves: &[SensitivityCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Contract(format!("curve encoding: {e}"));
    w.write_record(CURVE_HEADER.split(',')).map_err(err)?;
    for c in curves {
        for s in &c.samples {
            w.write_record([c.factor.clone(), param_json(s), s.fid.to_string(), s.ma.to_string()])
                .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(format!("curve encoding: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
}

/// Parses curve rows back, grouping by factor in order of first appearance.
/// The baseline MA is not stored in the CSV and comes back as NaN.
pub fn curves_from_csv(text: &str) -> Result<Vec<SensitivityCurve>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse(format!("curve header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    ensure!(header.join(",") == CURVE_HEADER, "curve CSV must start with `{CURVE_HEADER}`");
    let mut curves: Vec<SensitivityCurve> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let bad = |why: String| Error::Parse(format!("curve row {}: {why}", i + 2));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let obj: Map<String, Value> = serde_json::from_str(&rec[1]).map_err(|e| bad(e.to_string()))?;
        let mut spec_id = String::new();
        let mut params = BTreeMap::new();
        for (k, v) in obj {
            match (k.as_str(), v) {
                ("spec", Value::String(s)) => spec_id = s,
                (_, Value::Number(n)) => {
                    params.insert(k, n.as_f64().ok_or_else(|| bad("non-finite parameter".into()))?);
                }
                (_, other) => return Err(bad(format!("unexpected value {other} for {k}"))),
            }
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        let sample = CurveSample { spec_id, params, fid: num(&rec[2])?, ma: num(&rec[3])? };
        match curves.iter_mut().find(|c| c.factor == rec[0]) {
            Some(c) => c.samples.push(sample),
            None => curves.push(SensitivityCurve { factor: rec[0].to_string(), samples: vec![sample], baseline_ma: f64::NAN }),
        }
    }
    for c in &mut curves {
        c.samples.sort_by(|a, b| a.fid.total_cmp(&b.fid));
    }
    Ok(curves)
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// MA (percent) against FID, one polyline per curve, as a standalone SVG.
pub fn render_svg(curves: &[SensitivityCurve]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let max_fid = curves
        .iter()
        .flat_map(|c| c.samples.iter().map(|s| s.fid))
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let x = |fid: f64| left + pw * fid / max_fid;
    let y = |ma: f64| top + ph * (1.0 - ma.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=5 {
        let ma = i as f64 / 5.0;
        let fid = max_fid * i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.0}</text>"#, left - 6.0, y(ma) + 4.0, 100.0 * ma);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#, x(fid), top + ph + 16.0, fid);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">FID</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">MA (%)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c.samples.iter().map(|p| format!("{:.2},{:.2}", x(p.fid), y(p.ma))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        for p in &c.samples {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x(p.fid), y(p.ma));
        }
        let ly = top + 14.0 * i as f64 + 8.0;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/>"#, left + pw + 12.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, left + pw + 30.0, ly, xml_escape(&c.factor));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn write_curves(path: &Path, curves: &[SensitivityCurve]) -> Result<()> {
    std::fs::write(path, curves_to_csv(curves)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> SensitivityCurve {
        SensitivityCurve {
            factor: "blur".into(),
            samples: points
                .iter()
                .enumerate()
                .map(|(i, &(fid, ma))| CurveSample {
                    spec_id: format!("blur:sigma={i}"),
                    params: BTreeMap::from([("sigma".to_string(), i as f64)]),
                    fid,
                    ma,
                })
                .collect(),
            baseline_ma: 0.9,
        }
    }

    #[test]
    fn slopes() {
        let s = estimate_sensitivity(&curve(&[(0.0, 0.88), (50.0, 0.78)])).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].0, 25.0);
        assert!((s[0].1 - (-0.002)).abs() < 1e-15);
        let flat = estimate_sensitivity(&curve(&[(0.0, 0.5), (1.0, 0.5), (3.0, 0.5)])).unwrap();
        assert!(flat.iter().all(|&(_, d)| d == 0.0));
        assert!(matches!(estimate_sensitivity(&curve(&[(0.0, 0.5)])), Err(Error::InsufficientSamples { .. })));
        // A repeated FID is skipped: 4 samples, 3 usable, 2 slopes.
        let dup = estimate_sensitivity(&curve(&[(0.0, 0.9), (2.0, 0.8), (2.0, 0.7), (4.0, 0.6)])).unwrap();
        assert_eq!(dup.len(), 2);
        assert!((dup[1].1 - (-0.1)).abs() < 1e-12);
        assert!(estimate_sensitivity(&curve(&[(1.0, 0.9), (1.0, 0.8)])).is_err());
    }

    /// Longhand restatement of the nearest-unused-target rule.
    fn oracle(fids: &[f64], n: usize) -> Vec<usize> {
        let (lo, hi) = (fids[0], fids[fids.len() - 1]);
        let mut taken: Vec<usize> = Vec::new();
        for i in 0..n {
            let t = if n == 1 { (lo + hi) / 2.0 } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            let mut best: Option<usize> = None;
            for (j, f) in fids.iter().enumerate() {
                if taken.contains(&j) {
                    continue;
                }
                if best.is_none_or(|b| (f - t).abs() < (fids[b] - t).abs()) {
                    best = Some(j);
                }
            }
            taken.push(best.unwrap());
        }
        taken.sort_unstable();
        taken
    }

    #[test]
    fn select_levels_rules() {
        let even: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, 1.0 - i as f64 / 20.0)).collect();
        let c = curve(&even);
        let pick = |n| -> Vec<usize> {
            select_levels(&c, n).unwrap().iter().map(|s| s.fid as usize).collect()
        };
        assert_eq!(pick(10), (1..=10).collect::<Vec<_>>());
        // Targets 1, 3.25, 5.5, 7.75, 10: the 5.5 tie goes to the lower FID.
        assert_eq!(pick(5), vec![1, 3, 5, 8, 10]);
        let fids: Vec<f64> = even.iter().map(|p| p.0).collect();
        assert_eq!(pick(5), oracle(&fids, 5).iter().map(|i| i + 1).collect::<Vec<_>>());
        assert_eq!(pick(1), vec![5]);
        assert!(select_levels(&c, 11).is_err());
        assert!(select_levels(&c, 0).is_err());

        // Clustered FIDs force next-nearest resolution.
        let clustered = curve(&[(0.0, 0.9), (0.1, 0.8), (0.2, 0.7), (9.0, 0.1), (10.0, 0.0)]);
        let got: Vec<f64> = select_levels(&clustered, 4).unwrap().iter().map(|s| s.fid).collect();
        let want: Vec<f64> = oracle(&[0.0, 0.1, 0.2, 9.0, 10.0], 4).iter().map(|&i| [0.0, 0.1, 0.2, 9.0, 10.0][i]).collect();
        assert_eq!(got, want);
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn csv_roundtrip_and_svg() {
        let mut a = curve(&[(0.0, 0.9), (0.5, 0.7)]);
        a.samples[1].params.insert("kernel_size".into(), 9.0);
        let mut b = curve(&[(0.2, 0.6)]);
        b.factor = "noise".into();
        let text = curves_to_csv(&[a.clone(), b.clone()]).unwrap();
        assert!(text.starts_with("factor,param_json,fid,ma\n"));
        assert_eq!(text.lines().count(), 4);
        let back = curves_from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].samples, a.samples);
        assert_eq!(back[1].samples, b.samples);
        let svg = render_svg(&back);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(curves_from_csv("a,b\n").is_err());
    }
}
