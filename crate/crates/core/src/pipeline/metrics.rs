use crate::error::{Error, Result};

/// Accuracy and macro-averaged F1, both in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Per-class F1 is `2PR/(P+R)`, or 0 when `P+R = 0` (including classes with
/// neither predictions nor support). Macro-F1 averages over all
/// `num_classes` classes.
pub fn evaluate_metrics(preds: &[usize], truth: &[usize], num_classes: usize) -> Result<Metrics> {
    if preds.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("metrics over zero instances"));
    }
    if num_classes == 0 {
        return Err(Error::InvalidArgument("num_classes must be positive".into()));
    }
    if let Some(&bad) = preds.iter().chain(truth).find(|&&c| c >= num_classes) {
        return Err(Error::InvalidArgument(format!(
            "class {bad} >= num_classes ({num_classes})"
        )));
    }
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    for (&p, &t) in preds.iter().zip(truth) {
        predicted[p] += 1;
        support[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let f1_sum: f64 = (0..num_classes)
        .map(|c| {
            let precision = if predicted[c] > 0 {
                tp[c] as f64 / predicted[c] as f64
            } else {
                0.0
            };
            let recall = if support[c] > 0 {
                tp[c] as f64 / support[c] as f64
            } else {
                0.0
            };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    Ok(Metrics {
        accuracy: correct as f64 / preds.len() as f64,
        macro_f1: f1_sum / num_classes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = evaluate_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(
            m,
            Metrics {
                accuracy: 1.0,
                macro_f1: 1.0
            }
        );
    }

    #[test]
    fn hand_computed_pair() {
        let m = evaluate_metrics(&[0, 0], &[0, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_wrong_binary() {
        let m = evaluate_metrics(&[1, 0, 1], &[0, 1, 0], 2).unwrap();
        assert_eq!(
            m,
            Metrics {
                accuracy: 0.0,
                macro_f1: 0.0
            }
        );
    }

    #[test]
    fn errors() {
        assert!(evaluate_metrics(&[0, 2], &[0, 1], 2).is_err());
        assert!(evaluate_metrics(&[], &[], 2).is_err());
        assert!(evaluate_metrics(&[0], &[0, 1], 2).is_err());
    }
}
