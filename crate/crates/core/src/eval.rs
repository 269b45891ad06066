//! Field-level exact-match scoring.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::jsonl::PredictionRecord;
use crate::doc::{Document, FieldName};
use crate::error::{Error, Result};

/// Trims, collapses whitespace runs and (unless `strict`) casefolds.
pub fn match_normalize_with(s: &str, strict: bool) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if strict {
        collapsed
    } else {
        collapsed.to_lowercase()
    }
}

pub fn match_normalize(s: &str) -> String {
    match_normalize_with(s, false)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    /// correct / gold, in percent.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_field: BTreeMap<FieldName, FieldStats>,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Scores predictions against gold annotations over `(document, field)` pairs.
///
/// A pair is a true positive when the normalized strings are equal. P is
/// over predicted pairs, R over gold pairs.
pub fn score(predictions: &[PredictionRecord], gold: &[Document], fields: &[FieldName], strict: bool) -> Result<EvalReport> {
    let mut by_doc: HashMap<&str, &PredictionRecord> = HashMap::new();
    for p in predictions {
        if let Some(f) = p.fields.keys().find(|f| !fields.contains(f)) {
            return Err(Error::Validation(format!("prediction for {} has unknown field {f}", p.id)));
        }
        if by_doc.insert(p.id.as_str(), p).is_some() {
            return Err(Error::Validation(format!("document {} predicted twice", p.id)));
        }
    }
    let mut report = EvalReport::default();
    for f in fields {
        report.per_field.insert(f.clone(), FieldStats::default());
    }
    let mut gold_ids = std::collections::HashSet::new();
    for doc in gold {
        gold_ids.insert(doc.id.as_str());
        let pred = by_doc.get(doc.id.as_str());
        for f in fields {
            let stats = report.per_field.get_mut(f).expect("initialized");
            let g = doc.annotation(f).map(|a| match_normalize_with(&a.value, strict));
            let p = pred.and_then(|p| p.fields.get(f)).map(|v| match_normalize_with(v, strict));
            stats.gold += usize::from(g.is_some());
            stats.predicted += usize::from(p.is_some());
            if g.is_some() && g == p {
                stats.correct += 1;
            }
        }
    }
    // predictions for documents without gold are all false positives
    for p in predictions.iter().filter(|p| !gold_ids.contains(p.id.as_str())) {
        for f in p.fields.keys() {
            report.per_field.get_mut(f).expect("checked").predicted += 1;
        }
    }
    for stats in report.per_field.values_mut() {
        stats.accuracy = percent(stats.correct, stats.gold);
        report.true_positives += stats.correct;
        report.predicted += stats.predicted;
        report.gold += stats.gold;
    }
    report.precision = percent(report.true_positives, report.predicted);
    report.recall = percent(report.true_positives, report.gold);
    report.f1 = f1_score(report.precision, report.recall);
    Ok(report)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>6} {:>6} {:>6} {:>9}", "field", "gold", "pred", "exact", "accuracy")?;
        for (name, s) in &self.per_field {
            writeln!(
                f,
                "{:<16} {:>6} {:>6} {:>6} {:>8.2}%",
                name.as_str(),
                s.gold,
                s.predicted,
                s.correct,
                s.accuracy
            )?;
        }
        write!(f, "precision {:.2}  recall {:.2}  F1 {:.2}", self.precision, self.recall, self.f1)
    }
}

/// Mean and sample standard deviation over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub mean: f64,
    pub stdev: f64,
}

pub fn aggregate(values: &[f64]) -> RunAggregate {
    let n = values.len();
    if n == 0 {
        return RunAggregate {
            runs: 0,
            mean: 0.0,
            stdev: 0.0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stdev = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    RunAggregate { runs: n, mean, stdev }
}

impl fmt::Display for RunAggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2} ({} runs)", self.mean, self.stdev, self.runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::FieldAnnotation;

    fn gold_doc(id: &str, total: Option<&str>) -> Document {
        let mut d = Document::from_words(id, Vec::new());
        if let Some(v) = total {
            d.annotations.push(FieldAnnotation {
                field: "total".into(),
                value: v.into(),
                word_span: None,
            });
        }
        d
    }

    fn pred(id: &str, total: Option<&str>) -> PredictionRecord {
        let mut fields = BTreeMap::new();
        if let Some(v) = total {
            fields.insert(FieldName::from("total"), v.to_string());
        }
        PredictionRecord { id: id.into(), fields }
    }

    #[test]
    fn normalization() {
        assert_eq!(match_normalize("  TOTAL  12.00 "), "total 12.00");
        assert_eq!(match_normalize(""), "");
        assert_eq!(match_normalize("A\tB"), "a b");
        assert_eq!(match_normalize_with("A\tB", true), "A B");
    }

    #[test]
    fn half_right_gives_fifty_percent() {
        let gold = [gold_doc("a", Some("12.00")), gold_doc("b", Some("14.00"))];
        let preds = [pred("a", Some("12.00")), pred("b", Some("13.00"))];
        let r = score(&preds, &gold, &["total".into()], false).unwrap();
        assert_eq!(r.per_field[&FieldName::from("total")].accuracy, 50.0);
        assert_eq!((r.precision, r.recall, r.f1), (50.0, 50.0, 50.0));
    }

    #[test]
    fn no_predictions_scores_zero() {
        let gold = [gold_doc("a", Some("1"))];
        let r = score(&[], &gold, &["total".into()], false).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let mut p = pred("a", None);
        p.fields.insert("vat".into(), "1".into());
        assert!(score(&[p], &[], &["total".into()], false).is_err());
    }

    #[test]
    fn aggregation() {
        let a = aggregate(&[84.0; 10]);
        assert_eq!((a.mean, a.stdev), (84.0, 0.0));
        let a = aggregate(&[1.0, 3.0]);
        assert_eq!(a.mean, 2.0);
        assert!((a.stdev - 2f64.sqrt()).abs() < 1e-12);
    }
}
