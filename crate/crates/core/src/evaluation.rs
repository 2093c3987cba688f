//! Scoring recovered points against the original cloud.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vec3, PointCloud};
use crate::neighborhood::SubjectKey;
use crate::obfuscation::Scheme;
use crate::recovery::{RecoveredCloud, Status};
use crate::scalar::Real;
use crate::sidecar::SceneSidecar;

/// An error threshold, either a length or a fraction of the scene diameter
/// (written with a `%` suffix, e.g. `1%`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(into = "String")]
pub enum ThresholdSpec {
    Absolute(f64),
    /// Percent of the scene diameter.
    DiameterPercent(f64),
}

impl ThresholdSpec {
    pub fn resolve(&self, diameter: f64) -> f64 {
        match *self {
            ThresholdSpec::Absolute(v) => v,
            ThresholdSpec::DiameterPercent(p) => p / 100.0 * diameter,
        }
    }
}

impl fmt::Display for ThresholdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSpec::Absolute(v) => write!(f, "{v}"),
            ThresholdSpec::DiameterPercent(v) => write!(f, "{v}%"),
        }
    }
}

impl FromStr for ThresholdSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (num, relative) = match s.strip_suffix('%') {
            Some(n) => (n, true),
            None => (s, false),
        };
        let v: f64 = num
            .parse()
            .map_err(|_| Error::invalid(format!("invalid threshold '{s}'")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("threshold must be positive, got '{s}'")));
        }
        Ok(if relative {
            ThresholdSpec::DiameterPercent(v)
        } else {
            ThresholdSpec::Absolute(v)
        })
    }
}

/// Accepts `"1%"`, `"0.1"` or a bare number.
impl<'de> Deserialize<'de> for ThresholdSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => v.to_string().parse(),
            Raw::Str(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

impl From<ThresholdSpec> for String {
    fn from(t: ThresholdSpec) -> String {
        t.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdPreset {
    /// 5, 10 and 25 px.
    Pixels,
    /// 10 and 25 cm, in meters.
    Indoor,
    /// 25 and 50 cm, in meters.
    Outdoor,
}

pub fn default_thresholds(preset: ThresholdPreset) -> Vec<ThresholdSpec> {
    let v: &[f64] = match preset {
        ThresholdPreset::Pixels => &[5.0, 10.0, 25.0],
        ThresholdPreset::Indoor => &[0.10, 0.25],
        ThresholdPreset::Outdoor => &[0.25, 0.50],
    };
    v.iter().map(|&x| ThresholdSpec::Absolute(x)).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scene: String,
    pub scheme: Option<Scheme>,
    pub inlier_ratio: Option<f64>,
    pub k: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub subject: SubjectKey,
    pub source_id: u64,
    pub error: f64,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub meta: RunMeta,
    /// Resolved thresholds, ascending.
    pub thresholds: Vec<f64>,
    pub labels: Vec<ThresholdSpec>,
    pub fraction_within: Vec<f64>,
    pub mean_error: f64,
    pub median_error: f64,
    /// Points not recovered with status ok.
    pub failures: usize,
    pub per_point: Vec<PointError>,
}

impl AccuracyReport {
    /// Fraction for the threshold with this label.
    pub fn fraction(&self, label: &ThresholdSpec) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.fraction_within[i])
    }
}

/// Fraction of ok points with error at most each threshold; degenerate and
/// failed points count as misses.
pub fn fractions_from_errors(per_point: &[PointError], thresholds: &[f64]) -> Vec<f64> {
    let n = per_point.len();
    thresholds
        .iter()
        .map(|&t| {
            if n == 0 {
                return 0.0;
            }
            let hits = per_point
                .iter()
                .filter(|p| p.status == Status::Ok && p.error <= t)
                .count();
            hits as f64 / n as f64
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-point Euclidean error against the source point of each subject.
/// `sidecar` maps subjects to source ids; without it each item id is taken
/// as its source id, which only holds for one-to-one schemes.
pub fn geometric_accuracy<T: Real>(
    recovered: &RecoveredCloud<T>,
    truth: &PointCloud<T>,
    sidecar: Option<&SceneSidecar<T>>,
    thresholds: &[ThresholdSpec],
    meta: RunMeta,
) -> Result<AccuracyReport> {
    if recovered.is_empty() {
        return Err(Error::invalid("no recovered points to evaluate"));
    }
    if sidecar.is_none() && (recovered.scheme.is_paired_lines() || recovered.scheme == Scheme::Cp) {
        return Err(Error::MissingSidecar(recovered.scheme.to_string()));
    }
    let sources = sidecar.map(SceneSidecar::source_map);
    let truth_pos: HashMap<u64, _> = truth.points.iter().map(|p| (p.id, p.coords)).collect();
    let mut per_point = Vec::with_capacity(recovered.len());
    for p in &recovered.points {
        let source_id = match &sources {
            Some(map) => *map
                .get(&(p.subject.item_id, p.subject.slot))
                .ok_or(Error::UnknownId(p.subject.item_id))?,
            None if p.subject.slot == 0 => p.subject.item_id,
            None => return Err(Error::UnknownId(p.subject.item_id)),
        };
        let q = truth_pos.get(&source_id).ok_or(Error::UnknownId(source_id))?;
        per_point.push(PointError {
            subject: p.subject,
            source_id,
            error: vec3::dist(&p.point, q).as_f64(),
            status: p.status,
        });
    }
    let diameter = truth.diameter().as_f64();
    let mut resolved: Vec<(f64, ThresholdSpec)> = thresholds.iter().map(|t| (t.resolve(diameter), *t)).collect();
    resolved.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values: Vec<f64> = resolved.iter().map(|r| r.0).collect();
    let errors: Vec<f64> = per_point.iter().map(|p| p.error).collect();
    Ok(AccuracyReport {
        meta,
        fraction_within: fractions_from_errors(&per_point, &values),
        thresholds: values,
        labels: resolved.into_iter().map(|r| r.1).collect(),
        mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
        median_error: median(errors),
        failures: per_point.iter().filter(|p| p.status != Status::Ok).count(),
        per_point,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub scene: String,
    pub scheme: Scheme,
    pub inlier_ratio: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub seed: u64,
    pub labels: Vec<ThresholdSpec>,
    pub fraction_within: Vec<f64>,
    pub mean_error: f64,
    pub median_error: f64,
    pub failures: usize,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub key: CellKey,
    pub labels: Vec<ThresholdSpec>,
    /// Mean over the seeds that completed.
    pub mean_fraction: Vec<f64>,
    pub mean_error: f64,
    pub completed: usize,
    pub runs: Vec<CellRun>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<CellSummary>,
}

/// Mean that does not depend on the order of `values`.
fn stable_mean(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn summarize(key: CellKey, runs: Vec<CellRun>) -> CellSummary {
    let ok: Vec<&CellRun> = runs.iter().filter(|r| r.error.is_none()).collect();
    let labels = ok.first().map(|r| r.labels.clone()).unwrap_or_default();
    let mean_fraction = (0..labels.len())
        .map(|i| stable_mean(&mut ok.iter().map(|r| r.fraction_within[i]).collect::<Vec<_>>()))
        .collect();
    let mean_error = stable_mean(&mut ok.iter().map(|r| r.mean_error).collect::<Vec<_>>());
    CellSummary {
        key,
        labels,
        mean_fraction,
        mean_error,
        completed: ok.len(),
        runs,
    }
}

/// Runs every cell for every seed (in parallel), recording failures instead
/// of aborting. Seeds are deduplicated and sorted, so their order does not
/// affect the table.
pub fn sweep<F>(cells: &[CellKey], seeds: &[u64], run: F) -> SweepTable
where
    F: Fn(&CellKey, u64) -> Result<AccuracyReport> + Sync,
{
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<CellRun> = jobs
        .par_iter()
        .map(|&(c, seed)| match run(&cells[c], seed) {
            Ok(r) => CellRun {
                seed,
                labels: r.labels,
                fraction_within: r.fraction_within,
                mean_error: r.mean_error,
                median_error: r.median_error,
                failures: r.failures,
                error: None,
            },
            Err(e) => CellRun {
                seed,
                labels: Vec::new(),
                fraction_within: Vec::new(),
                mean_error: f64::NAN,
                median_error: f64::NAN,
                failures: 0,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut results = results.into_iter();
    let cells = cells
        .iter()
        .map(|key| summarize(key.clone(), results.by_ref().take(seeds.len()).collect()))
        .collect();
    SweepTable { cells }
}

impl SweepTable {
    pub const CSV_HEADER: &'static str = "scene,scheme,In,K,seed,threshold,fraction";

    /// One row per cell, seed and threshold, then the seed means with seed
    /// column `mean`. Failed runs have an empty fraction.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let prefix = format!("{},{},{},{}", c.key.scene, c.key.scheme, c.key.inlier_ratio, c.key.k);
            for r in &c.runs {
                if r.error.is_some() {
                    out.push_str(&format!("{prefix},{},,\n", r.seed));
                    continue;
                }
                for (label, f) in r.labels.iter().zip(&r.fraction_within) {
                    out.push_str(&format!("{prefix},{},{label},{f}\n", r.seed));
                }
            }
            for (label, f) in c.labels.iter().zip(&c.mean_fraction) {
                out.push_str(&format!("{prefix},mean,{label},{f}\n"));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
