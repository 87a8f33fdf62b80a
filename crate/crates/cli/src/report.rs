//! Report JSON and per-point CSV.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use iclslope::analysis::{sorted_points, Diagnostics};
use iclslope::{Classification, FitResult, Orientation, Origin, ScoredPoint};
use serde::{Deserialize, Serialize};

/// JSON schema for [`Report`], shipped with the binary.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

pub const REPORT_FILE: &str = "report.json";
pub const POINTS_FILE: &str = "points.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub slope: f64,
    pub intercept: f64,
    pub pearson: f64,
    pub n_points: usize,
    pub classification: Classification,
    pub threshold: f64,
    pub mean_p_d_q: f64,
    pub mean_p_x_q: f64,
    pub subset: String,
    pub orientation: Orientation,
    pub origin: Origin,
    pub shots: usize,
}

impl Report {
    pub fn new(fit: &FitResult, diag: &Diagnostics, subset: &str, origin: Origin, shots: usize) -> Self {
        Report {
            slope: fit.slope,
            intercept: fit.intercept,
            pearson: fit.pearson,
            n_points: fit.n_points,
            classification: fit.classification,
            threshold: fit.threshold,
            mean_p_d_q: diag.mean_p_d_q,
            mean_p_x_q: diag.mean_p_x_q,
            subset: subset.to_string(),
            orientation: fit.orientation,
            origin,
            shots,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub instance_id: String,
    pub demo_id: String,
    pub s: f64,
    pub t: f64,
    pub p_x_q: f64,
    pub p_x_qd: f64,
    pub p_d_q: f64,
    pub p_d_qx: f64,
    pub correct_1shot: Option<bool>,
}

impl From<&ScoredPoint> for PointRow {
    fn from(p: &ScoredPoint) -> Self {
        PointRow {
            instance_id: p.instance_id.clone(),
            demo_id: p.demo_id.clone(),
            s: p.s,
            t: p.t,
            p_x_q: p.profile.p_x_q.value(),
            p_x_qd: p.profile.p_x_qd.value(),
            p_d_q: p.profile.p_d_q.value(),
            p_d_qx: p.profile.p_d_qx.value(),
            correct_1shot: p.correctness_1shot,
        }
    }
}

/// CSV of the points in (instance_id, demo_id) order.
pub fn points_csv(points: &[ScoredPoint]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for p in sorted_points(points) {
        writer.serialize(PointRow::from(p))?;
    }
    Ok(String::from_utf8(writer.into_inner()?)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("{}: cannot create directory", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("{}: cannot write", path.display()))
}

/// Writes `report.json` and `points.csv` into `out_dir`.
pub fn write_outputs(out_dir: &Path, report: &Report, points: &[ScoredPoint]) -> Result<(PathBuf, PathBuf)> {
    let csv = points_csv(points)?;
    let report_path = out_dir.join(REPORT_FILE);
    let points_path = out_dir.join(POINTS_FILE);
    write_text(&report_path, &report.to_json())?;
    write_text(&points_path, &csv)?;
    Ok((report_path, points_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use iclslope::{LikelihoodProfile, NormalizedLikelihood};

    fn point(inst: &str, demo: &str, correct: Option<bool>) -> ScoredPoint {
        let p = |v| NormalizedLikelihood::from_probability(v).unwrap();
        ScoredPoint::from_profile(
            inst,
            demo,
            LikelihoodProfile { p_x_q: p(0.25), p_x_qd: p(0.5), p_d_q: p(0.125), p_d_qx: p(0.375) },
            correct,
        )
    }

    #[test]
    fn csv_is_sorted_with_header() {
        let csv = points_csv(&[point("b", "d1", None), point("a", "d2", Some(true))]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "instance_id,demo_id,s,t,p_x_q,p_x_qd,p_d_q,p_d_qx,correct_1shot");
        assert_eq!(lines[1], "a,d2,0.25,0.25,0.25,0.5,0.125,0.375,true");
        assert_eq!(lines[2], "b,d1,0.25,0.25,0.25,0.5,0.125,0.375,");
    }

    #[test]
    fn schema_is_valid_json() {
        let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
        assert_eq!(schema["type"], "object");
    }
}
