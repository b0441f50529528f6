//! Threshold sweeps and biometric error rates.
//!
//! A sample is accepted when its score is `>= T`. Candidate thresholds are the distinct
//! observed scores plus `+inf` (reject everything).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    /// Scores of genuine-user samples.
    pub positive: Vec<f64>,
    /// Scores of other users' samples.
    pub negative: Vec<f64>,
}

impl ScoreSet {
    pub fn new(positive: Vec<f64>, negative: Vec<f64>) -> Self {
        Self { positive, negative }
    }

    fn validate(&self) -> Result<()> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(Error::InsufficientData(format!(
                "need both classes, got {} positive / {} negative scores",
                self.positive.len(),
                self.negative.len()
            )));
        }
        if self.positive.iter().chain(&self.negative).any(|s| s.is_nan()) {
            return Err(Error::NonFinite("NaN score".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Ascending; the final entry is `+inf`, serialised as `null`.
    #[serde(with = "inf_as_null")]
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub far_at_zero: f64,
    pub eer_low: f64,
    pub eer_high: f64,
    pub auroc: f64,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| if x.is_finite() { Some(*x) } else { None }).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// FAR/FRR at every candidate threshold plus the summary metrics.
pub fn sweep(scores: &ScoreSet) -> Result<EvalReport> {
    scores.validate()?;
    let pos = sorted(&scores.positive);
    let neg = sorted(&scores.negative);
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut far = Vec::with_capacity(thresholds.len());
    let mut frr = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        far.push((neg.len() - neg.partition_point(|&s| s < t)) as f64 / nn);
        frr.push(pos.partition_point(|&s| s < t) as f64 / np);
    }
    let mut report = EvalReport {
        thresholds,
        far,
        frr,
        far_at_zero: 0.0,
        eer_low: 0.0,
        eer_high: 0.0,
        auroc: auroc(scores)?,
    };
    report.far_at_zero = far_at_zero_frr(&report);
    let (lo, hi) = eer_interval(&report);
    report.eer_low = lo;
    report.eer_high = hi;
    Ok(report)
}

/// FAR at the largest threshold that still rejects no genuine sample.
pub fn far_at_zero_frr(report: &EvalReport) -> f64 {
    let idx = report.frr.iter().rposition(|&r| r == 0.0).unwrap_or(0);
    report.far[idx]
}

/// EER bracket for step-shaped FAR/FRR curves.
///
/// If FAR and FRR coincide at a threshold, the bracket collapses to that value. Otherwise
/// take the largest threshold whose FAR still exceeds its FRR (the minimum such FAR) and
/// report that threshold's FRR and FAR as `(low, high)`.
pub fn eer_interval(report: &EvalReport) -> (f64, f64) {
    if let Some(i) = (0..report.far.len()).find(|&i| report.far[i] == report.frr[i]) {
        return (report.far[i], report.far[i]);
    }
    match (0..report.far.len()).rev().find(|&i| report.far[i] > report.frr[i]) {
        Some(i) => (report.frr[i].min(report.far[i]), report.frr[i].max(report.far[i])),
        None => (0.0, 0.0),
    }
}

/// Probability that a random positive outscores a random negative, ties counting half.
pub fn auroc(scores: &ScoreSet) -> Result<f64> {
    scores.validate()?;
    let neg = sorted(&scores.negative);
    let mut total = 0.0;
    for &p in &scores.positive {
        let below = neg.partition_point(|&s| s < p);
        let tied = neg.partition_point(|&s| s <= p) - below;
        total += below as f64 + 0.5 * tied as f64;
    }
    Ok(total / (scores.positive.len() as f64 * neg.len() as f64))
}

/// Trapezoidal area under the (FAR, 1 - FRR) curve traced by a sweep.
pub fn roc_area(report: &EvalReport) -> f64 {
    // thresholds ascend, so the curve runs from (FAR high, TPR high) down to (0, 0)
    let mut area = 0.0;
    for i in 1..report.far.len() {
        let (x0, x1) = (report.far[i], report.far[i - 1]);
        let (y0, y1) = (1.0 - report.frr[i], 1.0 - report.frr[i - 1]);
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    // the lowest threshold accepts every positive; extend flat to FAR = 1
    let top = report.far[0];
    area + (1.0 - top) * (1.0 - report.frr[0])
}

impl EvalReport {
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["threshold", "far", "frr"])?;
        for i in 0..self.thresholds.len() {
            let t = if self.thresholds[i].is_finite() { format!("{:?}", self.thresholds[i]) } else { "inf".into() };
            wtr.write_record([t, format!("{:?}", self.far[i]), format!("{:?}", self.frr[i])])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Unweighted mean of per-user summary metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub far_at_zero: f64,
    pub eer_low: f64,
    pub eer_high: f64,
    pub auroc: f64,
}

impl From<&EvalReport> for MetricSummary {
    fn from(r: &EvalReport) -> Self {
        Self { far_at_zero: r.far_at_zero, eer_low: r.eer_low, eer_high: r.eer_high, auroc: r.auroc }
    }
}

pub fn mean_summary(items: &[MetricSummary]) -> Option<MetricSummary> {
    if items.is_empty() {
        return None;
    }
    let n = items.len() as f64;
    let sum = |f: fn(&MetricSummary) -> f64| items.iter().map(f).sum::<f64>() / n;
    Some(MetricSummary {
        far_at_zero: sum(|m| m.far_at_zero),
        eer_low: sum(|m| m.eer_low),
        eer_high: sum(|m| m.eer_high),
        auroc: sum(|m| m.auroc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(p: &[f64], n: &[f64]) -> EvalReport {
        sweep(&ScoreSet::new(p.to_vec(), n.to_vec())).unwrap()
    }

    fn at(r: &EvalReport, t: f64) -> (f64, f64) {
        let i = r.thresholds.iter().position(|&x| x == t).unwrap();
        (r.far[i], r.frr[i])
    }

    #[test]
    fn separable_pair() {
        let r = report(&[0.9], &[0.1]);
        assert_eq!(at(&r, 0.9), (0.0, 0.0));
        assert_eq!(r.far_at_zero, 0.0);
        assert_eq!((r.eer_low, r.eer_high), (0.0, 0.0));
        assert_eq!(r.auroc, 1.0);
    }

    #[test]
    fn four_score_example() {
        let r = report(&[0.9, 0.5], &[0.6, 0.3]);
        assert_eq!(at(&r, 0.5), (0.5, 0.0));
        assert_eq!(r.far_at_zero, 0.5);
        assert_eq!(r.far[0], 1.0);
        assert_eq!(r.frr[0], 0.0);
        assert_eq!(*r.far.last().unwrap(), 0.0);
        assert_eq!(*r.frr.last().unwrap(), 1.0);
    }

    #[test]
    fn exact_crossover_collapses() {
        let r = report(&[0.6, 0.4], &[0.5, 0.3]);
        assert_eq!(at(&r, 0.5), (0.5, 0.5));
        assert_eq!((r.eer_low, r.eer_high), (0.5, 0.5));
    }

    #[test]
    fn reversed_classes() {
        let r = report(&[0.1, 0.2], &[0.8, 0.9]);
        assert_eq!(r.far_at_zero, 1.0);
        assert_eq!(r.auroc, 0.0);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(report(&[0.8, 0.2], &[0.6, 0.4]).auroc, 0.5);
        assert_eq!(report(&[0.5, 0.5], &[0.5, 0.5]).auroc, 0.5);
    }

    #[test]
    fn plateau_gives_wide_interval() {
        // forest-like scores in steps of 0.1 with a long tie plateau
        let pos = [0.3, 0.3, 0.3, 0.7, 0.8, 0.9, 0.9];
        let neg = [0.0, 0.1, 0.3, 0.3, 0.3, 0.3, 0.2];
        let r = report(&pos, &neg);
        assert!(r.eer_low < r.eer_high, "{:?}", (r.eer_low, r.eer_high));
        // hand trace: at T = 0.3 FAR = 4/7, FRR = 0; at T = 0.7 FAR = 0, FRR = 3/7
        assert_eq!((r.eer_low, r.eer_high), (0.0, 4.0 / 7.0));
    }

    #[test]
    fn empty_class_errors() {
        assert!(sweep(&ScoreSet::new(vec![], vec![0.1])).is_err());
        assert!(auroc(&ScoreSet::new(vec![0.1], vec![])).is_err());
    }

    #[test]
    fn trapezoid_matches_mann_whitney() {
        let r = report(&[0.1, 0.4, 0.4, 0.9], &[0.4, 0.2, 0.0]);
        assert!((roc_area(&r) - r.auroc).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_keeps_infinity() {
        let r = report(&[0.9, 0.5], &[0.6, 0.3]);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("null"));
        let back: EvalReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
