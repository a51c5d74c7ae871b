use ndarray::Array2;

use super::model::Classifier;
use crate::error::{Error, Result};
use crate::ingest::LabelId;
use crate::transfer::LabeledWindowSet;

/// Classification scores. Confusion rows are ground truth, columns predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Array2<u64>,
}

impl Evaluation {
    pub fn num_labels(&self) -> usize {
        self.confusion.nrows()
    }

    /// F1 per class; `None` for classes absent from both truth and predictions.
    pub fn per_class_f1(&self) -> Vec<Option<f64>> {
        let a = self.num_labels();
        (0..a)
            .map(|c| {
                let tp = self.confusion[[c, c]] as f64;
                let actual: u64 = self.confusion.row(c).sum();
                let predicted: u64 = self.confusion.column(c).sum();
                if actual == 0 && predicted == 0 {
                    None
                } else if tp == 0.0 {
                    Some(0.0)
                } else {
                    Some(2.0 * tp / (actual + predicted) as f64)
                }
            })
            .collect()
    }

    /// Confusion matrix as CSV with a `truth` column and one column per class.
    pub fn confusion_csv(&self, label_names: Option<&[String]>) -> String {
        let a = self.num_labels();
        let name = |i: usize| match label_names {
            Some(names) if i < names.len() => names[i].clone(),
            _ => i.to_string(),
        };
        let mut out = String::from("truth");
        for j in 0..a {
            out.push(',');
            out.push_str(&name(j));
        }
        out.push('\n');
        for i in 0..a {
            out.push_str(&name(i));
            for j in 0..a {
                out.push_str(&format!(",{}", self.confusion[[i, j]]));
            }
            out.push('\n');
        }
        out
    }
}

/// Scores predictions against ground truth. Macro F1 averages over the
/// classes that occur in either sequence.
pub fn score(truth: &[LabelId], predicted: &[LabelId], num_labels: usize) -> Result<Evaluation> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!("{} labels vs {} predictions", truth.len(), predicted.len())));
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let mut confusion = Array2::<u64>::zeros((num_labels, num_labels));
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= num_labels || p >= num_labels {
            return Err(Error::Shape(format!("label out of range for {num_labels} classes")));
        }
        confusion[[t, p]] += 1;
    }
    let correct: u64 = confusion.diag().sum();
    let mut eval = Evaluation {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: 0.0,
        confusion,
    };
    let f1: Vec<f64> = eval.per_class_f1().into_iter().flatten().collect();
    eval.macro_f1 = f1.iter().sum::<f64>() / f1.len() as f64;
    Ok(eval)
}

pub fn evaluate(model: &Classifier, data: &LabeledWindowSet) -> Result<Evaluation> {
    let predicted = model.predict(data.features.view())?;
    score(&data.labels, &predicted, data.num_labels.max(model.num_labels()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let e = score(&y, &y, 3).unwrap();
        assert_eq!((e.accuracy, e.macro_f1), (1.0, 1.0));
        assert_eq!(e.confusion.diag().sum(), 5);
        assert_eq!(e.confusion.sum(), 5);
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        let truth = [0, 0, 1, 1];
        let e = score(&truth, &[0; 4], 2).unwrap();
        assert_eq!(e.accuracy, 0.5);
        // class 0: precision 1/2, recall 1 -> F1 2/3; class 1 never predicted -> 0
        let oracle = (2.0 * 0.5 * 1.0 / 1.5 + 0.0) / 2.0;
        assert!((e.macro_f1 - oracle).abs() < 1e-15);
        assert!((e.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_rows_are_truth() {
        let e = score(&[2, 2, 0], &[1, 2, 0], 3).unwrap();
        assert_eq!(e.confusion[[2, 1]], 1);
        assert_eq!(e.confusion[[1, 2]], 0);
        let csv = e.confusion_csv(None);
        assert_eq!(csv.lines().next(), Some("truth,0,1,2"));
        assert_eq!(csv.lines().nth(3), Some("2,0,1,1"));
    }
}
