use std::fmt;

use crate::error::{Error, Result};

/// Fraction of segments whose predicted class equals the labelled class.
pub fn frame_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("frame_accuracy"));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassAccuracy {
    pub name: String,
    pub correct: usize,
    pub total: usize,
}

impl ClassAccuracy {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Overall frame accuracy plus a per-class breakdown (by labelled class).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub segments: usize,
    pub per_class: Vec<ClassAccuracy>,
}

impl EvalReport {
    /// `names` covers all `C + 1` classes, background last.
    pub fn new(predictions: &[usize], labels: &[usize], names: &[String]) -> Result<Self> {
        let accuracy = frame_accuracy(predictions, labels)?;
        let mut per_class: Vec<ClassAccuracy> = names
            .iter()
            .map(|n| ClassAccuracy {
                name: n.clone(),
                correct: 0,
                total: 0,
            })
            .collect();
        for (&p, &l) in predictions.iter().zip(labels) {
            let entry = per_class
                .get_mut(l)
                .ok_or_else(|| Error::InvalidLabel(format!("class {l} has no name")))?;
            entry.total += 1;
            if p == l {
                entry.correct += 1;
            }
        }
        Ok(EvalReport {
            accuracy,
            segments: labels.len(),
            per_class,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy\t{:.4}\t({} segments)", self.accuracy, self.segments)?;
        writeln!(f, "class\taccuracy\tcorrect\ttotal")?;
        for c in &self.per_class {
            let acc = c.accuracy().map_or_else(|| "-".to_owned(), |a| format!("{a:.4}"));
            writeln!(f, "{}\t{}\t{}\t{}", c.name, acc, c.correct, c.total)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let labels = [0, 1, 2, 3, 4, 0, 1, 2, 3, 4];
        assert_eq!(frame_accuracy(&labels, &labels).unwrap(), 1.0);
        let wrong: Vec<usize> = labels.iter().map(|l| (l + 1) % 5).collect();
        assert_eq!(frame_accuracy(&wrong, &labels).unwrap(), 0.0);
        let mut seven = labels;
        seven[0] = 9;
        seven[4] = 9;
        seven[9] = 9;
        assert!((frame_accuracy(&seven, &labels).unwrap() - 0.7).abs() < 1e-15);
        assert!(frame_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn per_class_table() {
        let names: Vec<String> = ["a", "b", "bg"].iter().map(|s| s.to_string()).collect();
        let r = EvalReport::new(&[0, 1, 2, 2], &[0, 0, 2, 2], &names).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.per_class[0].correct, 1);
        assert_eq!(r.per_class[0].total, 2);
        assert_eq!(r.per_class[1].accuracy(), None);
        let text = r.to_string();
        assert!(text.starts_with("accuracy\t0.7500"));
        assert!(text.contains("bg\t1.0000\t2\t2"));
    }
}
