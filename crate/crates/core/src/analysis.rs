//! The LCS pipeline: score instances into points, fit the least-squares line
//! of learning gain against contextual relevance, classify, and summarize.
//!
//! The metric is also known as the Learning-to-Relevance Ratio; this crate
//! calls it LCS throughout.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::backend::{score, LanguageModel, ScoringRequest, TemplateSpec};
use crate::error::{Error, Result};
use crate::parallel;
use crate::types::{Demonstration, LikelihoodProfile, NormalizedLikelihood, ScoredPoint, TaskInstance};

/// Slopes at or below this value are classified ineffective.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Effective,
    Ineffective,
}

/// Which variable is regressed on which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Learning gain (y) on contextual relevance (x); slope estimates p(D|Q)/p(X|Q).
    #[default]
    GainOnRelevance,
    /// Contextual relevance on learning gain: Σ(t−t̄)(s−s̄) / Σ(t−t̄)².
    RelevanceOnGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub pearson: f64,
    pub n_points: usize,
    pub classification: Classification,
    pub threshold: f64,
    pub orientation: Orientation,
}

/// Ineffective iff `slope <= threshold`.
pub fn classify(slope: f64, threshold: f64) -> Classification {
    if slope > threshold {
        Classification::Effective
    } else {
        Classification::Ineffective
    }
}

fn point_order(a: &ScoredPoint, b: &ScoredPoint) -> Ordering {
    a.instance_id
        .cmp(&b.instance_id)
        .then_with(|| a.demo_id.cmp(&b.demo_id))
        .then_with(|| a.s.total_cmp(&b.s))
        .then_with(|| a.t.total_cmp(&b.t))
}

/// Points in the canonical summation order.
pub fn sorted_points(points: &[ScoredPoint]) -> Vec<&ScoredPoint> {
    let mut sorted: Vec<&ScoredPoint> = points.iter().collect();
    sorted.sort_by(|a, b| point_order(a, b));
    sorted
}

/// Least-squares fit with the default orientation and threshold.
pub fn fit_lcs(points: &[ScoredPoint]) -> Result<FitResult> {
    fit_lcs_with(points, DEFAULT_THRESHOLD, Orientation::GainOnRelevance)
}

/// Least-squares fit over `points`, summed left to right in
/// (instance_id, demo_id) order so results do not depend on input order.
///
/// Pearson is reported as 0 when the dependent variable is constant.
pub fn fit_lcs_with(points: &[ScoredPoint], threshold: f64, orientation: Orientation) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 points, got {}", points.len())));
    }
    let sorted = sorted_points(points);
    let n = sorted.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = match orientation {
        Orientation::GainOnRelevance => sorted.iter().map(|p| (p.s, p.t)).unzip(),
        Orientation::RelevanceOnGain => sorted.iter().map(|p| (p.t, p.s)).unzip(),
    };
    let mean_x = xs.iter().fold(0.0, |acc, v| acc + v) / n;
    let mean_y = ys.iter().fold(0.0, |acc, v| acc + v) / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        let which = match orientation {
            Orientation::GainOnRelevance => "contextual relevance (s)",
            Orientation::RelevanceOnGain => "learning gain (t)",
        };
        return Err(Error::DegenerateFit(format!("zero variance in {which}")));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let pearson = if syy > 0.0 { (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0) } else { 0.0 };
    Ok(FitResult {
        slope,
        intercept,
        pearson,
        n_points: points.len(),
        classification: classify(slope, threshold),
        threshold,
        orientation,
    })
}

/// Points the model answered incorrectly under 1-shot ICL, in input order.
pub fn filter_bad_cases(points: &[ScoredPoint]) -> Result<Vec<ScoredPoint>> {
    let mut out = Vec::new();
    for p in points {
        match p.correctness_1shot {
            Some(false) => out.push(p.clone()),
            Some(true) => {}
            None => {
                return Err(Error::MissingCorrectness {
                    instance_id: p.instance_id.clone(),
                    demo_id: p.demo_id.clone(),
                })
            }
        }
    }
    Ok(out)
}

/// Averaged capability factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Mean p̂(D|Q): contextual alignment capability.
    pub mean_p_d_q: f64,
    /// Mean p̂(X|Q): output calibration capability.
    pub mean_p_x_q: f64,
    pub n: usize,
}

pub fn diagnostics(points: &[ScoredPoint]) -> Result<Diagnostics> {
    if points.is_empty() {
        return Err(Error::Empty("diagnostic points"));
    }
    let sorted = sorted_points(points);
    let n = sorted.len() as f64;
    let mean_p_d_q = sorted.iter().fold(0.0, |acc, p| acc + p.profile.p_d_q.value()) / n;
    let mean_p_x_q = sorted.iter().fold(0.0, |acc, p| acc + p.profile.p_x_q.value()) / n;
    Ok(Diagnostics { mean_p_d_q, mean_p_x_q, n: sorted.len() })
}

fn normalize_answer(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn as_number(text: &str) -> Option<f64> {
    let cleaned: String = text.chars().filter(|c| *c != ',').collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Exact match after trimming, case folding and whitespace collapsing;
/// answers that both parse as numbers compare numerically.
pub fn exact_match(prediction: &str, reference: &str) -> bool {
    let p = normalize_answer(prediction);
    let r = normalize_answer(reference);
    if p == r {
        return true;
    }
    match (as_number(&p), as_number(&r)) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

/// Placement of the extra conditioning text relative to the question when
/// scoring p̂(X|Q;D) and p̂(D|Q;X).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditionOrder {
    /// Question, then the demonstration (or output).
    #[default]
    QuestionFirst,
    /// Demonstration (or output), then the question.
    QuestionLast,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoringSetup {
    pub template: TemplateSpec,
    pub order: ConditionOrder,
}

impl ScoringSetup {
    pub fn new(template: TemplateSpec) -> Self {
        ScoringSetup { template, order: ConditionOrder::QuestionFirst }
    }

    fn condition(&self, question: &str, extra: &str) -> String {
        match self.order {
            ConditionOrder::QuestionFirst => self.template.join(question, extra),
            ConditionOrder::QuestionLast => self.template.join(extra, question),
        }
    }
}

fn with_identity(err: Error, instance: &str, demo: Option<&str>) -> Error {
    let who = match demo {
        Some(d) => format!("instance {instance:?} / demo {d:?}"),
        None => format!("instance {instance:?}"),
    };
    match err {
        Error::Scoring { context, source } => Error::Scoring { context: format!("{who}: {context}"), source },
        Error::Empty(what) => Error::InvalidArgument(format!("{who}: {what} must not be empty")),
        other => other,
    }
}

/// One point per demonstration. p̂(X|Q) is scored once per instance and
/// shared by all of its points.
pub fn score_instance<M: LanguageModel + ?Sized>(
    instance: &TaskInstance,
    demos: &[Demonstration],
    backend: &M,
    setup: &ScoringSetup,
) -> Result<Vec<ScoredPoint>> {
    if demos.is_empty() {
        return Err(Error::InvalidArgument(format!("instance {:?} has no demonstrations", instance.id)));
    }
    let template = &setup.template;
    let question = &instance.question;
    let output = instance.output_text(&template.separator);
    let p_x_q = score(&ScoringRequest::new(question.as_str(), output.as_str(), template), backend)
        .map_err(|e| with_identity(e, &instance.id, None))?;

    parallel::try_map(demos, |demo| {
        let demo_text = demo.text(&template.separator);
        let one = |condition: String, target: &str| -> Result<NormalizedLikelihood> {
            score(&ScoringRequest::new(condition, target, template), backend)
                .map_err(|e| with_identity(e, &instance.id, Some(&demo.id)))
        };
        let profile = LikelihoodProfile {
            p_x_q,
            p_x_qd: one(setup.condition(question, &demo_text), &output)?,
            p_d_q: one(question.clone(), &demo_text)?,
            p_d_qx: one(setup.condition(question, &output), &demo_text)?,
        };
        Ok(ScoredPoint::from_profile(
            instance.id.clone(),
            demo.id.clone(),
            profile,
            instance.correctness_1shot,
        ))
    })
}

/// [`score_instance`] over many instances; a k-shot instance contributes k
/// points. Any failure aborts the whole batch.
pub fn score_instances<M: LanguageModel + ?Sized>(
    work: &[(TaskInstance, Vec<Demonstration>)],
    backend: &M,
    setup: &ScoringSetup,
) -> Result<Vec<ScoredPoint>> {
    let per_instance =
        parallel::try_map(work, |(instance, demos)| score_instance(instance, demos, backend, setup))?;
    Ok(per_instance.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(i: usize, s: f64, t: f64) -> ScoredPoint {
        let one = NormalizedLikelihood::from_probability(0.5).unwrap();
        let mut p = ScoredPoint::from_profile(
            format!("i{i:03}"),
            "d",
            LikelihoodProfile { p_x_q: one, p_x_qd: one, p_d_q: one, p_d_qx: one },
            None,
        );
        p.s = s;
        p.t = t;
        p
    }

    fn pts(v: &[(f64, f64)]) -> Vec<ScoredPoint> {
        v.iter().enumerate().map(|(i, (s, t))| pt(i, *s, *t)).collect()
    }

    #[test]
    fn fit_examples() {
        let f = fit_lcs(&pts(&[(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)])).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.intercept.abs() < 1e-12);
        assert!((f.pearson - 1.0).abs() < 1e-12);
        let flat = fit_lcs(&pts(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)])).unwrap();
        assert!(flat.slope.abs() < 1e-12 && (flat.intercept - 1.0).abs() < 1e-12);
        let f = fit_lcs(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)])).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12);
        assert!((f.intercept + 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fits() {
        assert!(matches!(fit_lcs(&pts(&[(0.0, 0.0)])), Err(Error::DegenerateFit(_))));
        let err = fit_lcs(&pts(&[(1.0, 0.0), (1.0, 2.0)])).unwrap_err();
        assert!(err.to_string().contains("zero variance in contextual relevance"));
    }

    #[test]
    fn reversed_orientation_inverts_axes() {
        let p = pts(&[(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)]);
        let f = fit_lcs_with(&p, 0.2, Orientation::RelevanceOnGain).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        let flat_t = pts(&[(0.0, 1.0), (1.0, 1.0)]);
        assert!(fit_lcs_with(&flat_t, 0.2, Orientation::RelevanceOnGain).is_err());
    }

    #[test]
    fn classify_readings() {
        assert_eq!(classify(0.07, 0.2), Classification::Ineffective);
        assert_eq!(classify(0.94, 0.2), Classification::Effective);
        assert_eq!(classify(1.06, 0.2), Classification::Effective);
        assert_eq!(classify(0.2, 0.2), Classification::Ineffective);
    }

    #[test]
    fn bad_case_filter() {
        let mut v = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        for p in &mut v {
            p.correctness_1shot = Some(true);
        }
        assert!(filter_bad_cases(&v).unwrap().is_empty());
        v[1].correctness_1shot = Some(false);
        let bad = filter_bad_cases(&v).unwrap();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].instance_id, "i001");
        v[2].correctness_1shot = None;
        assert!(matches!(filter_bad_cases(&v), Err(Error::MissingCorrectness { .. })));
    }

    #[test]
    fn slope_above_one_is_allowed() {
        let f = fit_lcs(&pts(&[(0.0, 0.0), (1.0, 1.06), (2.0, 2.12)])).unwrap();
        assert!((f.slope - 1.06).abs() < 1e-12);
        assert_eq!(f.classification, Classification::Effective);
    }

    #[test]
    fn diagnostics_means() {
        assert!(diagnostics(&[]).is_err());
        let mut a = pt(0, 0.0, 0.0);
        a.profile.p_d_q = NormalizedLikelihood::from_probability(0.2).unwrap();
        let mut b = pt(1, 0.0, 0.0);
        b.profile.p_d_q = NormalizedLikelihood::from_probability(0.4).unwrap();
        let single = diagnostics(std::slice::from_ref(&a)).unwrap();
        assert!((single.mean_p_d_q - 0.2).abs() < 1e-15);
        assert!((single.mean_p_x_q - 0.5).abs() < 1e-15);
        let d = diagnostics(&[a, b]).unwrap();
        assert!((d.mean_p_d_q - 0.3).abs() < 1e-15);
    }

    #[test]
    fn exact_match_table() {
        let table = [
            ("42", "42", true),
            (" 7.0", "7", true),
            ("7", "8", false),
            ("Paris", " paris ", true),
            ("New   York", "new york", true),
            ("1,000", "1000", true),
            ("0.50", ".5", true),
            ("-3", "-3.000", true),
            ("seven", "7", false),
            ("", "0", false),
        ];
        for (pred, gold, expected) in table {
            assert_eq!(exact_match(pred, gold), expected, "{pred:?} vs {gold:?}");
        }
    }

    proptest! {
        #[test]
        fn fit_invariances(
            raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..30),
            shift in -0.5f64..0.5,
            scale in 0.1f64..10.0,
            seed in any::<u64>(),
        ) {
            let base = pts(&raw);
            let Ok(f) = fit_lcs(&base) else { return Ok(()) };
            prop_assume!(f.pearson.abs() > 1e-6);
            prop_assert!((-1.0..=1.0).contains(&f.pearson));

            let mut shuffled = base.clone();
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(fit_lcs(&shuffled).unwrap(), f.clone());

            let shifted: Vec<_> = base.iter().map(|p| { let mut q = p.clone(); q.t += shift; q }).collect();
            let g = fit_lcs(&shifted).unwrap();
            prop_assert!((g.slope - f.slope).abs() < 1e-12);
            prop_assert!((g.pearson - f.pearson).abs() < 1e-12);
            prop_assert!((g.intercept - (f.intercept + shift)).abs() < 1e-12);

            let scaled: Vec<_> = base.iter().map(|p| { let mut q = p.clone(); q.s *= scale; q }).collect();
            let h = fit_lcs(&scaled).unwrap();
            prop_assert!((h.slope - f.slope / scale).abs() < 1e-9 * (1.0 + f.slope.abs()));
            prop_assert!((h.pearson - f.pearson).abs() < 1e-12);
        }
    }
}
