use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{header_line, push_tokens, read_file, read_header, write_file, FORMAT_VERSION};
use crate::error::Result;
use crate::evaluation::{AccuracyReport, PointError, RunMeta, ThresholdSpec};
use crate::neighborhood::SubjectKey;
use crate::recovery::Status;

pub(crate) const FORMAT: &str = "report";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    n: usize,
    meta: RunMeta,
    thresholds: Vec<f64>,
    labels: Vec<ThresholdSpec>,
    fraction_within: Vec<f64>,
    mean_error: f64,
    median_error: f64,
    failures: usize,
}

/// Record: `item slot source_id status error`.
pub fn format_report(report: &AccuracyReport) -> Result<String> {
    let mut out = header_line(&Header {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        n: report.per_point.len(),
        meta: report.meta.clone(),
        thresholds: report.thresholds.clone(),
        labels: report.labels.clone(),
        fraction_within: report.fraction_within.clone(),
        mean_error: report.mean_error,
        median_error: report.median_error,
        failures: report.failures,
    })?;
    for p in &report.per_point {
        out.push_str(&p.subject.item_id.to_string());
        push_tokens(&mut out, [p.subject.slot]);
        push_tokens(&mut out, [p.source_id]);
        out.push(' ');
        out.push_str(match p.status {
            Status::Ok => "ok",
            Status::Degenerate => "degenerate",
            Status::Failed => "failed",
        });
        push_tokens(&mut out, [p.error]);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_report(text: &str) -> Result<AccuracyReport> {
    let (h, mut lines): (Header, _) = read_header(text, FORMAT)?;
    let mut per_point = Vec::with_capacity(h.n);
    for _ in 0..h.n {
        let at = lines.next_line("per-point error")?;
        let mut tok = at.tokens();
        let item_id = tok.parse("subject item id")?;
        let slot = tok.parse("subject slot")?;
        let source_id = tok.parse("source id")?;
        let status = match tok.next_str("status")? {
            "ok" => Status::Ok,
            "degenerate" => Status::Degenerate,
            "failed" => Status::Failed,
            other => return Err(at.error(format!("invalid status '{other}'"))),
        };
        let error = tok.parse("error")?;
        tok.finish()?;
        per_point.push(PointError {
            subject: SubjectKey::new(item_id, slot),
            source_id,
            error,
            status,
        });
    }
    lines.expect_end()?;
    Ok(AccuracyReport {
        meta: h.meta,
        thresholds: h.thresholds,
        labels: h.labels,
        fraction_within: h.fraction_within,
        mean_error: h.mean_error,
        median_error: h.median_error,
        failures: h.failures,
        per_point,
    })
}

pub fn write_report(path: &Path, report: &AccuracyReport) -> Result<()> {
    write_file(path, &format_report(report)?)
}

pub fn read_report(path: &Path) -> Result<AccuracyReport> {
    parse_report(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{fractions_from_errors, geometric_accuracy};
    use crate::geometry::Dim;
    use crate::neighborhood::oracle_neighborhoods;
    use crate::obfuscation::{obfuscate, ObfuscationOptions, Scheme};
    use crate::recovery::{recover_cloud, RecoveryConfig};
    use crate::synthetic::{generate_synthetic, SceneKind, SyntheticParams};

    #[test]
    fn round_trip_and_recount() {
        let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::UniformBox, 200, Dim::Three, 5))
            .unwrap()
            .cloud;
        let o = obfuscate(&c, Scheme::Ppl, 1, &ObfuscationOptions::default()).unwrap();
        let nbrs = oracle_neighborhoods(&c, &o.cloud, Some(&o.sidecar), 10).unwrap();
        let rec = recover_cloud(&o.cloud, &nbrs, &RecoveryConfig::for_scene(Dim::Three, c.diameter())).unwrap();
        let thresholds = ["1%".parse().unwrap(), "0.1".parse().unwrap(), "5%".parse().unwrap()];
        let meta = RunMeta {
            scene: "uniform_box".into(),
            scheme: Some(Scheme::Ppl),
            inlier_ratio: Some(1.0),
            k: 10,
            seed: 5,
        };
        let report = geometric_accuracy(&rec, &c, Some(&o.sidecar), &thresholds, meta).unwrap();
        let text = format_report(&report).unwrap();
        let back = parse_report(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(format_report(&back).unwrap(), text);
        assert_eq!(
            fractions_from_errors(&back.per_point, &back.thresholds),
            report.fraction_within
        );
    }
}
