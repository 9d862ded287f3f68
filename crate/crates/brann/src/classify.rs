//! Tool-condition classification: predicted flank wear against a wear
//! threshold, plus per-class accuracy reporting.

use crate::{Error, Result};

/// Flank-wear limit above which a tool counts as broken.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConditionThreshold {
    pub vb_max_mm: f64,
}

impl ConditionThreshold {
    pub fn new(vb_max_mm: f64) -> Result<Self> {
        if !vb_max_mm.is_finite() || vb_max_mm <= 0.0 {
            return Err(Error::invalid(format!(
                "threshold must be positive and finite, got {vb_max_mm}"
            )));
        }
        Ok(ConditionThreshold { vb_max_mm })
    }

    /// Maximum flank-wear criterion: 0.6 mm.
    pub fn maximum_wear() -> Self {
        ConditionThreshold { vb_max_mm: 0.6 }
    }

    /// ISO 3685 average flank-wear criterion: 0.3 mm.
    pub fn iso_average_wear() -> Self {
        ConditionThreshold { vb_max_mm: 0.3 }
    }
}

impl Default for ConditionThreshold {
    fn default() -> Self {
        ConditionThreshold::maximum_wear()
    }
}

/// Two-valued tool condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionLabel {
    Broken,
    Unbroken,
}

impl ConditionLabel {
    pub fn name(&self) -> &'static str {
        match self {
            ConditionLabel::Broken => "broken",
            ConditionLabel::Unbroken => "unbroken",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "broken" => Ok(ConditionLabel::Broken),
            "unbroken" => Ok(ConditionLabel::Unbroken),
            other => Err(Error::invalid(format!(
                "unknown condition label `{other}` (expected broken or unbroken)"
            ))),
        }
    }
}

/// A classification, possibly tagged with an extrapolation warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classified {
    pub label: ConditionLabel,
    pub warning: Option<&'static str>,
}

/// Broken iff the predicted wear strictly exceeds the threshold; a
/// prediction exactly at the threshold is unbroken. Negative predictions
/// (the model extrapolating below zero wear) are classified but tagged.
pub fn classify_condition(vb_pred_mm: f64, threshold: &ConditionThreshold) -> Result<Classified> {
    if !vb_pred_mm.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite wear prediction {vb_pred_mm}"
        )));
    }
    let label = if vb_pred_mm > threshold.vb_max_mm {
        ConditionLabel::Broken
    } else {
        ConditionLabel::Unbroken
    };
    let warning = (vb_pred_mm < 0.0).then_some("negative wear prediction (model extrapolation)");
    Ok(Classified { label, warning })
}

/// Accuracy over each true class and overall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassificationReport {
    pub n: usize,
    pub correct: usize,
    pub broken_total: usize,
    pub broken_correct: usize,
    pub unbroken_total: usize,
    pub unbroken_correct: usize,
}

impl ClassificationReport {
    pub fn overall_accuracy(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }

    /// Accuracy over samples whose true class is broken; None when there
    /// are none.
    pub fn broken_accuracy(&self) -> Option<f64> {
        (self.broken_total > 0).then(|| self.broken_correct as f64 / self.broken_total as f64)
    }

    pub fn unbroken_accuracy(&self) -> Option<f64> {
        (self.unbroken_total > 0)
            .then(|| self.unbroken_correct as f64 / self.unbroken_total as f64)
    }
}

/// Count agreement between predicted and true labels.
pub fn classification_report(
    pred: &[ConditionLabel],
    truth: &[ConditionLabel],
) -> Result<ClassificationReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "classification_report: {} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("classification_report: no samples"));
    }
    let mut report = ClassificationReport {
        n: pred.len(),
        correct: 0,
        broken_total: 0,
        broken_correct: 0,
        unbroken_total: 0,
        unbroken_correct: 0,
    };
    for (&p, &t) in pred.iter().zip(truth) {
        let hit = p == t;
        report.correct += hit as usize;
        match t {
            ConditionLabel::Broken => {
                report.broken_total += 1;
                report.broken_correct += hit as usize;
            }
            ConditionLabel::Unbroken => {
                report.unbroken_total += 1;
                report.unbroken_correct += hit as usize;
            }
        }
    }
    Ok(report)
}

/// Header of the per-sample classification CSV.
pub const CLASSIFICATION_HEADER: &str = "sample,vb_pred_mm,label_pred,label_true,correct";

/// Render per-sample rows as CSV; samples are numbered from 1.
pub fn classification_csv(rows: &[(f64, ConditionLabel, ConditionLabel)]) -> String {
    let mut out = String::from(CLASSIFICATION_HEADER);
    out.push('\n');
    for (i, (vb, pred, truth)) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            vb,
            pred.name(),
            truth.name(),
            (pred == truth) as u8
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use ConditionLabel::{Broken, Unbroken};

    #[test]
    fn boundary_rules() {
        let t = ConditionThreshold::maximum_wear();
        assert_eq!(classify_condition(0.7, &t).unwrap().label, Broken);
        assert_eq!(classify_condition(0.6, &t).unwrap().label, Unbroken);
        assert_eq!(classify_condition(0.59, &t).unwrap().label, Unbroken);
    }

    #[test]
    fn presets_and_validation() {
        assert_eq!(ConditionThreshold::maximum_wear().vb_max_mm, 0.6);
        assert_eq!(ConditionThreshold::iso_average_wear().vb_max_mm, 0.3);
        assert_eq!(ConditionThreshold::default(), ConditionThreshold::maximum_wear());
        assert!(ConditionThreshold::new(0.0).is_err());
        assert!(ConditionThreshold::new(f64::NAN).is_err());
        assert!(ConditionThreshold::new(0.25).is_ok());
    }

    #[test]
    fn negative_predictions_are_tagged_but_classified() {
        let t = ConditionThreshold::maximum_wear();
        let c = classify_condition(-0.05, &t).unwrap();
        assert_eq!(c.label, Unbroken);
        assert!(c.warning.is_some());
        assert!(classify_condition(f64::INFINITY, &t).is_err());
    }

    #[test]
    fn classification_is_monotone_in_prediction() {
        let t = ConditionThreshold::maximum_wear();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..200 {
            let a = rng.random_range(-0.2..1.2);
            let b = rng.random_range(-0.2..1.2);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let low = classify_condition(lo, &t).unwrap().label;
            let high = classify_condition(hi, &t).unwrap().label;
            assert!(!(low == Broken && high == Unbroken));
        }
    }

    #[test]
    fn fixture_accuracies_match_hand_arithmetic() {
        // 4 broken samples, 3 classified correctly; 11 unbroken, 8 correct.
        let truth: Vec<ConditionLabel> = std::iter::repeat_n(Broken, 4)
            .chain(std::iter::repeat_n(Unbroken, 11))
            .collect();
        let pred: Vec<ConditionLabel> = std::iter::repeat_n(Broken, 3)
            .chain([Unbroken])
            .chain(std::iter::repeat_n(Unbroken, 8))
            .chain(std::iter::repeat_n(Broken, 3))
            .collect();
        let report = classification_report(&pred, &truth).unwrap();
        assert!((report.broken_accuracy().unwrap() * 100.0 - 75.0).abs() < 0.01);
        assert!((report.unbroken_accuracy().unwrap() * 100.0 - 72.73).abs() < 0.01);
        assert!((report.overall_accuracy() * 100.0 - 73.33).abs() < 0.01);
        assert_eq!(report.n, 15);
        assert_eq!(report.correct, 11);
    }

    #[test]
    fn overall_is_count_weighted_mean_of_per_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let sample = |rng: &mut ChaCha8Rng| {
            if rng.random_range(0.0..1.0) < 0.5 {
                Broken
            } else {
                Unbroken
            }
        };
        for _ in 0..50 {
            let n = rng.random_range(2..40);
            let truth: Vec<_> = (0..n).map(|_| sample(&mut rng)).collect();
            let pred: Vec<_> = (0..n).map(|_| sample(&mut rng)).collect();
            let r = classification_report(&pred, &truth).unwrap();
            let weighted = r.broken_accuracy().unwrap_or(0.0) * r.broken_total as f64
                + r.unbroken_accuracy().unwrap_or(0.0) * r.unbroken_total as f64;
            assert!((weighted / r.n as f64 - r.overall_accuracy()).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.overall_accuracy()));
        }
    }

    #[test]
    fn report_input_validation() {
        assert!(classification_report(&[Broken], &[]).is_err());
        assert!(classification_report(&[], &[]).is_err());
    }

    #[test]
    fn label_names_round_trip() {
        for label in [Broken, Unbroken] {
            assert_eq!(ConditionLabel::parse(label.name()).unwrap(), label);
        }
        assert!(ConditionLabel::parse("dull").is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![(0.7, Broken, Broken), (0.5, Unbroken, Broken)];
        let csv = classification_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("sample,vb_pred_mm,label_pred,label_true,correct"));
        assert_eq!(lines.next(), Some("1,0.7,broken,broken,1"));
        assert_eq!(lines.next(), Some("2,0.5,unbroken,broken,0"));
    }
}
