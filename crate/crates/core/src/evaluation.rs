//! Recognition metrics and the leave-one-video-out harness.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("prediction covers {pred} observations but ground truth covers {truth}")]
    RangeMismatch { pred: usize, truth: usize },
    #[error("leave-one-out needs at least 2 videos, got {0}")]
    InsufficientCorpus(usize),
    #[error("fold '{fold}': {message}")]
    Fold { fold: String, message: String },
}

/// One-vs-rest counts for a single activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_range<S>(pred: &[S], truth: &[S]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::RangeMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

pub fn confusion<S: AsRef<str>>(
    pred: &[S],
    truth: &[S],
    activity: &str,
) -> Result<ConfusionCounts, EvalError> {
    check_range(pred, truth)?;
    let mut c = ConfusionCounts::default();
    for (p, t) in pred.iter().zip(truth) {
        match (p.as_ref() == activity, t.as_ref() == activity) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Per-activity scores; `None` marks an undefined ratio (0/0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `1 / (1/precision + 1/recall)`, half the usual F1.
    pub f_score: Option<f64>,
    pub accuracy: Option<f64>,
}

impl Metrics {
    /// The conventional F1, twice `f_score`.
    pub fn f1(&self) -> Option<f64> {
        self.f_score.map(|f| 2.0 * f)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f_score = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(1.0 / (1.0 / p + 1.0 / r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Metrics {
        precision,
        recall,
        f_score,
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

/// Fraction of observations whose predicted label equals the truth.
pub fn global_accuracy<S: AsRef<str>>(pred: &[S], truth: &[S]) -> Result<f64, EvalError> {
    check_range(pred, truth)?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityScore {
    pub activity: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold: String,
    pub global_accuracy: f64,
    /// Sorted by decreasing precision; undefined precision last.
    pub per_activity: Vec<ActivityScore>,
}

/// Scores one decoded sequence against its ground truth.
pub fn evaluate<S: AsRef<str>>(
    fold: &str,
    pred: &[S],
    truth: &[S],
    activities: &[String],
) -> Result<EvalReport, EvalError> {
    let global_accuracy = global_accuracy(pred, truth)?;
    let mut per_activity = activities
        .iter()
        .map(|a| {
            let counts = confusion(pred, truth, a)?;
            Ok(ActivityScore {
                activity: a.clone(),
                counts,
                metrics: metrics(&counts),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    sort_by_precision(&mut per_activity);
    Ok(EvalReport {
        fold: fold.to_string(),
        global_accuracy,
        per_activity,
    })
}

/// Decreasing precision, undefined precision last, stable otherwise.
pub fn sort_by_precision(scores: &mut [ActivityScore]) {
    scores.sort_by(|a, b| match (a.metrics.precision, b.metrics.precision) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| x.to_string())
}

impl EvalReport {
    /// `activity,precision,recall,fscore,accuracy`; undefined values as `n/a`.
    pub fn to_csv(&self, conventional_f1: bool) -> String {
        let mut out = String::from("activity,precision,recall,fscore,accuracy\n");
        for s in &self.per_activity {
            let f = if conventional_f1 {
                s.metrics.f1()
            } else {
                s.metrics.f_score
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.activity,
                cell(s.metrics.precision),
                cell(s.metrics.recall),
                cell(f),
                cell(s.metrics.accuracy)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub folds: Vec<EvalReport>,
    pub median_accuracy: f64,
}

impl LoocvReport {
    pub fn from_folds(folds: Vec<EvalReport>) -> Self {
        let acc: Vec<f64> = folds.iter().map(|f| f.global_accuracy).collect();
        Self {
            median_accuracy: median(&acc).unwrap_or(0.0),
            folds,
        }
    }

    pub fn mean_accuracy(&self) -> f64 {
        if self.folds.is_empty() {
            return 0.0;
        }
        self.folds.iter().map(|f| f.global_accuracy).sum::<f64>() / self.folds.len() as f64
    }

    /// `fold,global_accuracy` rows followed by a `median_accuracy` line.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("fold,global_accuracy\n");
        for f in &self.folds {
            let _ = writeln!(out, "{},{}", f.fold, f.global_accuracy);
        }
        let _ = writeln!(out, "median_accuracy,{}", self.median_accuracy);
        out
    }
}

/// Runs one fold per item: `run_fold(training_items, held_out)`. Folds are
/// independent and evaluated in parallel; reports keep the item order.
pub fn leave_one_out<T, F>(items: &[T], run_fold: F) -> Result<LoocvReport, EvalError>
where
    T: Sync,
    F: Fn(Vec<&T>, &T) -> Result<EvalReport, EvalError> + Sync,
{
    if items.len() < 2 {
        return Err(EvalError::InsufficientCorpus(items.len()));
    }
    let folds = (0..items.len())
        .into_par_iter()
        .map(|k| {
            let train: Vec<&T> = items
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, v)| v)
                .collect();
            run_fold(train, &items[k])
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LoocvReport::from_folds(folds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    #[test]
    fn perfect_prediction() {
        let t = labels("aabbbcca");
        let c = confusion(&t, &t, "a").unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(c.tp, 3);
        assert_eq!(global_accuracy(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn all_missed() {
        let truth = labels("xaaxxaax");
        let pred = labels("xxxxxxxx");
        let c = confusion(&pred, &truth, "a").unwrap();
        assert_eq!((c.tp, c.fn_), (0, 4));
    }

    #[test]
    fn ten_step_hand_count() {
        let pred = labels("abaabbcaca");
        let truth = labels("aabacbcaab");
        // a: positions 0..9
        // pred a at 0,2,3,7,9 ; truth a at 0,1,3,7,8
        let c = confusion(&pred, &truth, "a").unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 3,
                fp: 2,
                tn: 3,
                fn_: 2
            }
        );
        assert_eq!(c.total(), 10);
    }

    #[test]
    fn table_arithmetic() {
        let m = metrics(&ConfusionCounts {
            tp: 2,
            fp: 1,
            tn: 5,
            fn_: 2,
        });
        assert_eq!(m.precision, Some(2.0 / 3.0));
        assert_eq!(m.recall, Some(0.5));
        assert_eq!(m.accuracy, Some(0.7));
        assert!((m.f_score.unwrap() - 2.0 / 7.0).abs() < 1e-15);
        assert!((m.f1().unwrap() - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_and_degenerate_metrics() {
        let m = metrics(&ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 3,
            fn_: 2,
        });
        assert_eq!(m.precision, None);
        assert_eq!(m.f_score, None);
        let m = metrics(&ConfusionCounts {
            tp: 5,
            fp: 0,
            tn: 0,
            fn_: 0,
        });
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.recall, Some(1.0));
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.f_score, Some(0.5));
        let m = metrics(&ConfusionCounts {
            tp: 0,
            fp: 2,
            tn: 0,
            fn_: 3,
        });
        assert_eq!(m.f_score, Some(0.0));
    }

    #[test]
    fn global_accuracy_cases() {
        assert_eq!(
            global_accuracy(&labels("abc"), &labels("bca")).unwrap(),
            0.0
        );
        let pred = labels("aaaaaaabbb");
        let truth = labels("aaaaaaaaaa");
        assert!((global_accuracy(&pred, &truth).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(
            global_accuracy(&labels("ab"), &labels("abc")),
            Err(EvalError::RangeMismatch { pred: 2, truth: 3 })
        );
    }

    #[test]
    fn median_of_folds() {
        assert_eq!(median(&[0.1, 0.3, 0.42, 0.6, 0.9]), Some(0.42));
        assert_eq!(median(&[0.9, 0.1, 0.6, 0.42, 0.3]), Some(0.42));
        assert_eq!(median(&[1.0, 3.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn report_sorted_by_precision_with_na_last() {
        let pred = labels("aabbcc");
        let truth = labels("abbbca");
        let acts: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let r = evaluate("v1", &pred, &truth, &acts).unwrap();
        let order: Vec<&str> = r.per_activity.iter().map(|s| s.activity.as_str()).collect();
        assert_eq!(order, vec!["b", "a", "c", "d"]);
        let csv = r.to_csv(false);
        assert!(csv.starts_with("activity,precision,recall,fscore,accuracy\n"));
        assert!(csv.contains("d,n/a,n/a,n/a,1\n"));
    }

    #[test]
    fn loocv_folds_and_errors() {
        let items = vec![1, 2, 3, 4, 5];
        let report = leave_one_out(&items, |train, test| {
            assert_eq!(train.len(), 4);
            assert!(!train.contains(&test));
            Ok(EvalReport {
                fold: test.to_string(),
                global_accuracy: *test as f64 / 10.0,
                per_activity: vec![],
            })
        })
        .unwrap();
        assert_eq!(report.folds.len(), 5);
        assert_eq!(report.median_accuracy, 0.3);
        assert!(report.summary_csv().ends_with("median_accuracy,0.3\n"));
        assert_eq!(
            leave_one_out(&[1], |_, _| unreachable!()),
            Err(EvalError::InsufficientCorpus(1))
        );
    }
}
