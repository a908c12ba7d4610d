//! ROC analysis of labeled membership scores.
//!
//! Scores may be any [`Scalar`]; rates, areas and histogram edges are always
//! reported as `f64`. Tied scores form a single ROC step and count half a
//! win in the AUROC (Mann-Whitney convention).

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::records::Label;
use crate::scalar::Scalar;

pub const DEFAULT_HISTOGRAM_BINS: usize = 30;
pub const DEFAULT_FPR_LEVEL: f64 = 0.05;

/// One labeled sample with its score under each method.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSample<T> {
    pub sample_id: String,
    pub label: Label,
    pub scores: BTreeMap<String, T>,
}

/// Scores of one method grouped by tie, highest score first.
#[derive(Clone, Debug)]
struct TieGroups {
    /// (members, nonmembers) sharing one score value.
    groups: Vec<(u64, u64)>,
    n_member: u64,
    n_nonmember: u64,
}

fn collect<T: Scalar>(scored: &[ScoredSample<T>], method: &str) -> Vec<(T, bool)> {
    scored
        .iter()
        .filter_map(|s| s.scores.get(method).map(|&v| (v, s.label.is_member())))
        .collect()
}

fn tie_groups<T: Scalar>(
    mut points: Vec<(T, bool)>,
    method: &str,
) -> Result<TieGroups, MetricsError> {
    let n_member = points.iter().filter(|p| p.1).count();
    let n_nonmember = points.len() - n_member;
    if n_member == 0 || n_nonmember == 0 {
        return Err(MetricsError::SingleClass {
            method: method.to_string(),
            n_member,
            n_nonmember,
        });
    }
    points.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut current: Option<T> = None;
    for (score, member) in points {
        if current != Some(score) {
            groups.push((0, 0));
            current = Some(score);
        }
        let g = groups.last_mut().unwrap();
        if member {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    Ok(TieGroups {
        groups,
        n_member: n_member as u64,
        n_nonmember: n_nonmember as u64,
    })
}

impl TieGroups {
    fn auroc(&self) -> f64 {
        // Walk from the highest score down: every member in a group beats
        // all nonmembers in later groups and ties those in its own group.
        let mut remaining_nonmembers = self.n_nonmember as u128;
        let mut doubled: u128 = 0;
        for &(m, n) in &self.groups {
            remaining_nonmembers -= n as u128;
            doubled += 2 * m as u128 * remaining_nonmembers + m as u128 * n as u128;
        }
        doubled as f64 / (2 * self.n_member as u128 * self.n_nonmember as u128) as f64
    }

    fn roc(&self) -> Vec<(f64, f64)> {
        let (nm, nn) = (self.n_member as f64, self.n_nonmember as f64);
        let mut points = Vec::with_capacity(self.groups.len() + 2);
        points.push((0.0, 0.0));
        let (mut tp, mut fp) = (0u64, 0u64);
        for &(m, n) in &self.groups {
            tp += m;
            fp += n;
            points.push((fp as f64 / nn, tp as f64 / nm));
        }
        if points.last() != Some(&(1.0, 1.0)) {
            points.push((1.0, 1.0));
        }
        points
    }
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Probability that a random member outscores a random nonmember, ties
/// counting one half.
pub fn auroc<T: Scalar>(scored: &[ScoredSample<T>], method: &str) -> Result<f64, MetricsError> {
    Ok(tie_groups(collect(scored, method), method)?.auroc())
}

/// ROC points `(fpr, tpr)` from the strictest threshold down, one per
/// distinct score, starting at `(0, 0)` and ending at `(1, 1)`.
pub fn roc_curve<T: Scalar>(
    scored: &[ScoredSample<T>],
    method: &str,
) -> Result<Vec<(f64, f64)>, MetricsError> {
    Ok(tie_groups(collect(scored, method), method)?.roc())
}

/// Best TPR among achievable ROC points whose FPR does not exceed
/// `fpr_level`. No interpolation between points.
pub fn tpr_at_fpr<T: Scalar>(
    scored: &[ScoredSample<T>],
    method: &str,
    fpr_level: f64,
) -> Result<f64, MetricsError> {
    let roc = roc_curve(scored, method)?;
    Ok(best_tpr(&roc, fpr_level))
}

fn best_tpr(roc: &[(f64, f64)], fpr_level: f64) -> f64 {
    roc.iter()
        .filter(|p| p.0 <= fpr_level)
        .map(|p| p.1)
        .fold(0.0, f64::max)
}

/// Equal-width histogram with edges shared by both classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` edges spanning the observed score range.
    pub edges: Vec<f64>,
    pub member_counts: Vec<u64>,
    pub nonmember_counts: Vec<u64>,
}

pub fn histogram<T: Scalar>(
    scored: &[ScoredSample<T>],
    method: &str,
    n_bins: usize,
) -> Result<Histogram, MetricsError> {
    if n_bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let points: Vec<(f64, bool)> = collect(scored, method)
        .into_iter()
        .map(|(v, m)| (v.widen(), m))
        .collect();
    if points.is_empty() {
        return Err(MetricsError::Empty);
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut member_counts = vec![0u64; n_bins];
    let mut nonmember_counts = vec![0u64; n_bins];
    for (v, member) in points {
        let bin = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(n_bins - 1)
        } else {
            0
        };
        if member {
            member_counts[bin] += 1;
        } else {
            nonmember_counts[bin] += 1;
        }
    }
    Ok(Histogram {
        edges,
        member_counts,
        nonmember_counts,
    })
}

/// Smallest observed nonmember score `λ` such that predicting "member" for
/// `score > λ` keeps the empirical FPR at or below `target_fpr`. Returns
/// negative infinity when every sample may be flagged.
pub fn calibrate_threshold<T: Scalar>(
    scored: &[ScoredSample<T>],
    method: &str,
    target_fpr: f64,
) -> Result<T, MetricsError> {
    let points = collect(scored, method);
    let groups = tie_groups(points.clone(), method)?;
    let nn = groups.n_nonmember as f64;
    if target_fpr >= 1.0 {
        return Ok(T::neg_infinity());
    }
    let mut nonmember: Vec<T> = points.into_iter().filter(|p| !p.1).map(|p| p.0).collect();
    nonmember.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    // Scanning candidates from the highest down, the number strictly above
    // the candidate grows; keep the last one within budget.
    let mut best = nonmember[0];
    let mut above = 0usize;
    let mut i = 0;
    while i < nonmember.len() {
        let candidate = nonmember[i];
        if (above as f64) / nn <= target_fpr {
            best = candidate;
        } else {
            break;
        }
        while i < nonmember.len() && nonmember[i] == candidate {
            i += 1;
        }
        above = i;
    }
    Ok(best)
}

/// Metrics for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub auroc: f64,
    pub tpr_at_fpr: Vec<TprAtFpr>,
    pub roc_points: Vec<(f64, f64)>,
    pub histogram: Histogram,
    pub n_member: usize,
    pub n_nonmember: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TprAtFpr {
    pub fpr: f64,
    pub tpr: f64,
}

impl MethodReport {
    pub fn tpr_at(&self, fpr: f64) -> Option<f64> {
        self.tpr_at_fpr.iter().find(|p| p.fpr == fpr).map(|p| p.tpr)
    }
}

/// Builds the full report for one method in a single pass over the scores.
pub fn method_report<T: Scalar>(
    scored: &[ScoredSample<T>],
    method: &str,
    fpr_levels: &[f64],
    n_bins: usize,
) -> Result<MethodReport, MetricsError> {
    let groups = tie_groups(collect(scored, method), method)?;
    let roc_points = groups.roc();
    Ok(MethodReport {
        method: method.to_string(),
        auroc: groups.auroc(),
        tpr_at_fpr: fpr_levels
            .iter()
            .map(|&fpr| TprAtFpr {
                fpr,
                tpr: best_tpr(&roc_points, fpr),
            })
            .collect(),
        roc_points,
        histogram: histogram(scored, method, n_bins)?,
        n_member: groups.n_member as usize,
        n_nonmember: groups.n_nonmember as usize,
    })
}

/// Per-method metrics for one corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn get(&self, method: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV, one row per method and metric: `method,metric,value`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "metric", "value"])?;
        for m in &self.methods {
            w.write_record([m.method.as_str(), "auroc", &m.auroc.to_string()])?;
            for p in &m.tpr_at_fpr {
                w.write_record([
                    m.method.as_str(),
                    &format!("tpr_at_fpr_{}", p.fpr),
                    &p.tpr.to_string(),
                ])?;
            }
            w.write_record([m.method.as_str(), "n_member", &m.n_member.to_string()])?;
            w.write_record([m.method.as_str(), "n_nonmember", &m.n_nonmember.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
