//! Classification reports for the two-class detector.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prs::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `confusion[true][predicted]`.
    pub confusion: [[u64; 2]; 2],
    pub benign: ClassMetrics,
    pub malign: ClassMetrics,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
    /// Metrics whose denominator was zero; each is reported as 0.0.
    pub zero_division: Vec<String>,
}

fn ratio(num: u64, den: u64, name: String, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name);
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Dataset("cannot evaluate an empty test set".into()));
        }
        if truth.len() != predicted.len() {
            return Err(Error::Dataset(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut confusion = [[0u64; 2]; 2];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: [[u64; 2]; 2]) -> Self {
        let mut flags = Vec::new();
        let total: u64 = confusion.iter().flatten().sum();
        let metrics = |c: usize, flags: &mut Vec<String>| {
            let name = Label::ALL[c].name().to_lowercase();
            let tp = confusion[c][c];
            let predicted = confusion[0][c] + confusion[1][c];
            let support = confusion[c][0] + confusion[c][1];
            let precision = ratio(tp, predicted, format!("{name} precision"), flags);
            let recall = ratio(tp, support, format!("{name} recall"), flags);
            let f1 = if precision + recall == 0.0 {
                flags.push(format!("{name} f1"));
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        };
        let benign = metrics(0, &mut flags);
        let malign = metrics(1, &mut flags);
        let accuracy = (confusion[0][0] + confusion[1][1]) as f64 / total.max(1) as f64;
        let macro_avg = Averages {
            precision: (benign.precision + malign.precision) / 2.0,
            recall: (benign.recall + malign.recall) / 2.0,
            f1: (benign.f1 + malign.f1) / 2.0,
        };
        let w = |f: fn(&ClassMetrics) -> f64| {
            (f(&benign) * benign.support as f64 + f(&malign) * malign.support as f64)
                / total.max(1) as f64
        };
        let weighted_avg = Averages {
            precision: w(|m| m.precision),
            recall: w(|m| m.recall),
            f1: w(|m| m.f1),
        };
        EvalReport {
            confusion,
            benign,
            malign,
            accuracy,
            macro_avg,
            weighted_avg,
            total,
            zero_division: flags,
        }
    }

    pub fn class(&self, label: Label) -> &ClassMetrics {
        match label {
            Label::Benign => &self.benign,
            Label::Malign => &self.malign,
        }
    }

    /// Plain-text report: Benign, Malign, Acc, macro avg, weighted avg.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>12} {:>10} {:>10} {:>10} {:>10}",
            "", "precision", "recall", "f1-score", "support"
        );
        let _ = writeln!(s);
        for label in Label::ALL {
            let m = self.class(label);
            let _ = writeln!(
                s,
                "{:>12} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                label.name(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>12} {:>10} {:>10} {:>10.4} {:>10}",
            "Acc", "", "", self.accuracy, self.total
        );
        for (name, a) in [
            ("macro avg", &self.macro_avg),
            ("weighted avg", &self.weighted_avg),
        ] {
            let _ = writeln!(
                s,
                "{:>12} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                name, a.precision, a.recall, a.f1, self.total
            );
        }
        s
    }

    /// Confusion matrix as CSV, rows are true classes.
    pub fn confusion_csv(&self) -> String {
        let c = &self.confusion;
        format!(
            "true\\predicted,Benign,Malign\nBenign,{},{}\nMalign,{},{}\n",
            c[0][0], c[0][1], c[1][0], c[1][1]
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `a - b`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub notes: Vec<String>,
    #[serde(skip)]
    table: String,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> &str {
        &self.table
    }
}

/// Side-by-side view of two reports on the same test set, with `A - B` deltas.
pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    if a.benign.support != b.benign.support || a.malign.support != b.malign.support {
        return Err(Error::Dataset(format!(
            "supports differ: A has {}/{}, B has {}/{}",
            a.benign.support, a.malign.support, b.benign.support, b.malign.support
        )));
    }
    let mut rows = Vec::new();
    let mut push = |metric: String, x: f64, y: f64| {
        rows.push(ComparisonRow {
            metric,
            a: x,
            b: y,
            delta: x - y,
        })
    };
    for label in Label::ALL {
        let (ma, mb) = (a.class(label), b.class(label));
        let name = label.name().to_lowercase();
        push(format!("{name} precision"), ma.precision, mb.precision);
        push(format!("{name} recall"), ma.recall, mb.recall);
        push(format!("{name} f1"), ma.f1, mb.f1);
    }
    push("accuracy".into(), a.accuracy, b.accuracy);
    for (name, x, y) in [
        ("macro", &a.macro_avg, &b.macro_avg),
        ("weighted", &a.weighted_avg, &b.weighted_avg),
    ] {
        push(format!("{name} avg precision"), x.precision, y.precision);
        push(format!("{name} avg recall"), x.recall, y.recall);
        push(format!("{name} avg f1"), x.f1, y.f1);
    }

    let mut notes = Vec::new();
    let fp = |r: &EvalReport| r.confusion[0][1];
    match a.malign.precision.total_cmp(&b.malign.precision) {
        std::cmp::Ordering::Greater => notes.push(format!(
            "A: higher malign precision ({:.4} vs {:.4}), fewer false positives ({} vs {})",
            a.malign.precision,
            b.malign.precision,
            fp(a),
            fp(b)
        )),
        std::cmp::Ordering::Less => notes.push(format!(
            "B: higher malign precision ({:.4} vs {:.4}), fewer false positives ({} vs {})",
            b.malign.precision,
            a.malign.precision,
            fp(b),
            fp(a)
        )),
        std::cmp::Ordering::Equal => {}
    }
    match a.malign.recall.total_cmp(&b.malign.recall) {
        std::cmp::Ordering::Greater => notes.push(format!(
            "A: higher malign recall ({:.4} vs {:.4}), more sensitive",
            a.malign.recall, b.malign.recall
        )),
        std::cmp::Ordering::Less => notes.push(format!(
            "B: higher malign recall ({:.4} vs {:.4}), more sensitive",
            b.malign.recall, a.malign.recall
        )),
        std::cmp::Ordering::Equal => {}
    }

    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:>12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "", "Prec A", "Prec B", "Rec A", "Rec B", "F1 A", "F1 B"
    );
    for label in Label::ALL {
        let (ma, mb) = (a.class(label), b.class(label));
        let _ = writeln!(
            t,
            "{:>12} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            label.name(),
            ma.precision,
            mb.precision,
            ma.recall,
            mb.recall,
            ma.f1,
            mb.f1
        );
    }
    let _ = writeln!(
        t,
        "{:>12} {:>8} {:>8} {:>8} {:>8} {:>8.4} {:>8.4}",
        "Acc", "", "", "", "", a.accuracy, b.accuracy
    );
    for (name, x, y) in [
        ("macro avg", &a.macro_avg, &b.macro_avg),
        ("weighted avg", &a.weighted_avg, &b.weighted_avg),
    ] {
        let _ = writeln!(
            t,
            "{:>12} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            name, x.precision, y.precision, x.recall, y.recall, x.f1, y.f1
        );
    }
    let _ = writeln!(t);
    let _ = writeln!(t, "accuracy A - B: {:+.4}", a.accuracy - b.accuracy);
    for n in &notes {
        let _ = writeln!(t, "{n}");
    }
    Ok(Comparison {
        rows,
        notes,
        table: t,
    })
}
