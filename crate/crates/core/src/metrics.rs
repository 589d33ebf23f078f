//! Accuracy, kappa and per-subject evaluation reports.
//!
//! Kappa uses the random classification rate `1 / n_classes` as the chance
//! agreement, not the marginal-product estimate.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no predictions")]
    Empty,
    #[error("{predictions} predictions but {truths} labels")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("class {class} is outside 0..{n_classes}")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("kappa needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("no subjects to evaluate")]
    NoSubjects,
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: pred.len(),
            truths: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / pred.len() as f64)
}

pub fn kappa(accuracy: f64, n_classes: usize) -> Result<f64, MetricsError> {
    if n_classes < 2 {
        return Err(MetricsError::TooFewClasses(n_classes));
    }
    let chance = 1.0 / n_classes as f64;
    Ok((accuracy - chance) / (1.0 - chance))
}

/// `matrix[truth][pred]` counts.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: pred.len(),
            truths: truth.len(),
        });
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        for class in [p, t] {
            if class >= n_classes {
                return Err(MetricsError::ClassOutOfRange { class, n_classes });
            }
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject: String,
    pub n_trials: usize,
    pub accuracy: f64,
    pub kappa: f64,
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample (n − 1) standard deviation; 0 for a single subject.
    pub std_sample: f64,
    /// Population (n) standard deviation.
    pub std_population: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Self {
            mean,
            std_sample: if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 },
            std_population: (ss / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_classes: usize,
    pub subjects: Vec<SubjectResult>,
    pub accuracy: Summary,
    pub kappa: Summary,
}

/// Predictions and labels for one subject.
#[derive(Debug, Clone)]
pub struct SubjectPredictions {
    pub subject: String,
    pub predicted: Vec<usize>,
    pub truth: Vec<usize>,
}

pub fn evaluate(subjects: &[SubjectPredictions], n_classes: usize) -> Result<EvalReport, MetricsError> {
    if subjects.is_empty() {
        return Err(MetricsError::NoSubjects);
    }
    let mut results = Vec::with_capacity(subjects.len());
    for s in subjects {
        let acc = accuracy(&s.predicted, &s.truth)?;
        results.push(SubjectResult {
            subject: s.subject.clone(),
            n_trials: s.truth.len(),
            accuracy: acc,
            kappa: kappa(acc, n_classes)?,
            confusion: confusion_matrix(&s.predicted, &s.truth, n_classes)?,
        });
    }
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let kappas: Vec<f64> = results.iter().map(|r| r.kappa).collect();
    Ok(EvalReport {
        n_classes,
        accuracy: Summary::of(&accs),
        kappa: Summary::of(&kappas),
        subjects: results,
    })
}

impl EvalReport {
    /// Table with accuracy in percent and kappa, both to two decimals.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<16} {:>9} {:>6}\n", "", "Accuracy", "kappa");
        for r in &self.subjects {
            s.push_str(&format!("{:<16} {:>9.2} {:>6.2}\n", r.subject, 100.0 * r.accuracy, r.kappa));
        }
        if self.subjects.len() > 1 {
            s.push_str(&format!(
                "{:<16} {:>9.2} {:>6.2}\n",
                "Mean",
                100.0 * self.accuracy.mean,
                self.kappa.mean
            ));
            s.push_str(&format!(
                "{:<16} {:>9.2} {:>6.2}\n",
                "Std. Dev.",
                100.0 * self.accuracy.std_sample,
                self.kappa.std_sample
            ));
            s.push_str(&format!(
                "{:<16} {:>9.2} {:>6.2}\n",
                "Std. Dev. (pop)",
                100.0 * self.accuracy.std_population,
                self.kappa.std_population
            ));
        }
        for r in &self.subjects {
            s.push_str(&format!("\nconfusion {} (rows = truth, cols = predicted)\n", r.subject));
            for row in &r.confusion {
                let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
                s.push_str(&cells.join(" "));
                s.push('\n');
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }
}
