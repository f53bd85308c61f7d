//! Precision, top-N recall, the most-frequent-label baseline and report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{TargetLabels, Task};
use crate::ensemble::{bagging_ranking, bagging_vote, ibagging, top_n};
use crate::error::{Error, Result};
use crate::estimators::argmax;

/// Fraction of exact matches.
pub fn precision(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::argument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::argument("precision of an empty set"));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fraction of items whose true label is among the first `n` ranked labels.
pub fn recall_at_n(ranked: &[Vec<usize>], truth: &[usize], n: usize) -> Result<f64> {
    if ranked.len() != truth.len() {
        return Err(Error::argument(format!(
            "{} rankings for {} labels",
            ranked.len(),
            truth.len()
        )));
    }
    if truth.is_empty() || n == 0 {
        return Err(Error::argument("recall needs n >= 1 and a non-empty set"));
    }
    if let Some(i) = ranked.iter().position(|r| r.len() < n) {
        return Err(Error::argument(format!(
            "ranking {i} has {} entries, n = {n}",
            ranked[i].len()
        )));
    }
    let hits = ranked.iter().zip(truth).filter(|(r, t)| r[..n].contains(t)).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Label-frequency rankings from the training split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineModel {
    /// Per task: every class id, most frequent training label first, ties by lower id.
    pub rankings: BTreeMap<Task, Vec<usize>>,
}

/// Ranks all `n_classes[task]` classes by training frequency. Classes absent
/// from training follow the observed ones in id order.
pub fn fit_baseline(train: &[TargetLabels], n_classes: &BTreeMap<Task, usize>) -> Result<BaselineModel> {
    if train.is_empty() {
        return Err(Error::argument("baseline needs training labels"));
    }
    let mut rankings = BTreeMap::new();
    for (&task, &k) in n_classes {
        let mut counts = vec![0usize; k];
        for t in train {
            let c = t.get(task);
            if c >= k {
                return Err(Error::Label(format!("{task} label {c} outside 0..{k}")));
            }
            counts[c] += 1;
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        rankings.insert(task, order);
    }
    Ok(BaselineModel { rankings })
}

impl BaselineModel {
    pub fn top_n(&self, task: Task, n: usize) -> Result<Vec<usize>> {
        let r = self
            .rankings
            .get(&task)
            .ok_or_else(|| Error::Lookup(format!("baseline has no ranking for {task}")))?;
        if n == 0 || n > r.len() {
            return Err(Error::argument(format!(
                "baseline top_n needs 1 <= n <= {}, got {n}",
                r.len()
            )));
        }
        Ok(r[..n].to_vec())
    }
}

/// Fails if any test id also appears among the ids used for fitting.
pub fn check_leakage<'a>(
    fit_ids: impl IntoIterator<Item = &'a str>,
    test_ids: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    let fit: BTreeSet<&str> = fit_ids.into_iter().collect();
    let leaked: Vec<&str> = test_ids.into_iter().filter(|id| fit.contains(id)).collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage(format!(
            "{} test resume(s) were seen during fitting, e.g. {:?}",
            leaked.len(),
            &leaked[..leaked.len().min(5)]
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    GbtManual,
    GbtSemantic,
    GbtAll,
    RfAll,
    CnnAll,
    RecurrentAll,
    Bagging,
    IBagging,
    ManualRule,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::GbtManual,
        Method::GbtSemantic,
        Method::GbtAll,
        Method::RfAll,
        Method::CnnAll,
        Method::RecurrentAll,
        Method::Bagging,
        Method::IBagging,
        Method::ManualRule,
    ];

    /// Methods backed by a single trained model.
    pub const BASE: [Method; 6] = [
        Method::GbtManual,
        Method::GbtSemantic,
        Method::GbtAll,
        Method::RfAll,
        Method::CnnAll,
        Method::RecurrentAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GbtManual | Method::GbtSemantic | Method::GbtAll => "GBT",
            Method::RfAll => "RF",
            Method::CnnAll => "CNN",
            Method::RecurrentAll => "LSTM",
            Method::Bagging => "Bagging",
            Method::IBagging => "IBagging",
            Method::ManualRule => "ManualRule",
        }
    }

    pub fn features(self) -> &'static str {
        match self {
            Method::GbtManual => "manual",
            Method::GbtSemantic => "semantic",
            Method::ManualRule => "frequent-label",
            _ => "all",
        }
    }

    /// Stable identifier, e.g. `gbt-manual`.
    pub fn key(self) -> String {
        format!("{}-{}", self.name().to_lowercase(), self.features())
    }

    pub fn from_key(key: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.key() == key)
    }
}

/// Test-set class probabilities of every base method, plus labels.
#[derive(Debug, Clone)]
pub struct ReportInputs {
    pub truth: BTreeMap<Task, Vec<usize>>,
    /// `probabilities[task][method][item]` is a class distribution.
    pub probabilities: BTreeMap<Task, BTreeMap<Method, Vec<Vec<f64>>>>,
    /// Base methods combined by Bagging and IBagging.
    pub ensemble: Vec<Method>,
    pub baseline: BaselineModel,
    pub n_values: Vec<usize>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub precision: BTreeMap<Task, f64>,
    /// `recall[task][n]`.
    pub recall: BTreeMap<Task, BTreeMap<usize, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: BTreeMap<String, String>,
    pub n_values: Vec<usize>,
    pub test_items: usize,
    pub rows: Vec<MethodRow>,
}

/// Ranked classes for every item; `n` is capped at the class count.
fn rankings(probs: &[Vec<f64>], n: usize) -> Result<Vec<Vec<usize>>> {
    probs.iter().map(|p| top_n(p, n.min(p.len()))).collect()
}

pub fn build_report(inputs: &ReportInputs) -> Result<EvaluationReport> {
    if inputs.n_values.is_empty() || inputs.n_values.contains(&0) {
        return Err(Error::config("recall N values must be non-empty and >= 1"));
    }
    if inputs.ensemble.is_empty() || inputs.ensemble.iter().any(|m| !Method::BASE.contains(m)) {
        return Err(Error::config("ensemble members must be base methods"));
    }
    let max_n = *inputs.n_values.iter().max().unwrap();
    let mut rows: BTreeMap<Method, MethodRow> = Method::ALL
        .into_iter()
        .map(|m| {
            (
                m,
                MethodRow {
                    method: m,
                    precision: BTreeMap::new(),
                    recall: BTreeMap::new(),
                },
            )
        })
        .collect();
    let mut test_items = 0;
    for task in Task::ALL {
        let truth = inputs
            .truth
            .get(&task)
            .ok_or_else(|| Error::config(format!("no test labels for {task}")))?;
        test_items = truth.len();
        let by_method = inputs
            .probabilities
            .get(&task)
            .ok_or_else(|| Error::config(format!("no predictions for {task}")))?;
        let get = |m: Method| -> Result<&Vec<Vec<f64>>> {
            let p = by_method
                .get(&m)
                .ok_or_else(|| Error::config(format!("no {} predictions for {task}", m.key())))?;
            if p.len() != truth.len() {
                return Err(Error::Shape {
                    expected: truth.len(),
                    found: p.len(),
                });
            }
            Ok(p)
        };

        let mut record = |m: Method, top1: Vec<usize>, ranked: Vec<Vec<usize>>| -> Result<()> {
            let row = rows.get_mut(&m).unwrap();
            row.precision.insert(task, precision(&top1, truth)?);
            let mut r = BTreeMap::new();
            for &n in &inputs.n_values {
                let k = ranked.first().map_or(n, Vec::len);
                r.insert(n, recall_at_n(&ranked, truth, n.min(k))?);
            }
            row.recall.insert(task, r);
            Ok(())
        };

        for m in Method::BASE {
            let p = get(m)?;
            record(m, p.iter().map(|v| argmax(v)).collect(), rankings(p, max_n)?)?;
        }

        let members: Vec<&Vec<Vec<f64>>> = inputs.ensemble.iter().map(|&m| get(m)).collect::<Result<_>>()?;
        let per_item = |i: usize| -> Vec<Vec<f64>> { members.iter().map(|p| p[i].clone()).collect() };
        let mut bag_top = Vec::with_capacity(truth.len());
        let mut bag_rank = Vec::with_capacity(truth.len());
        let mut ib_top = Vec::with_capacity(truth.len());
        let mut ib_rank = Vec::with_capacity(truth.len());
        for i in 0..truth.len() {
            let item = per_item(i);
            let k = item[0].len();
            bag_top.push(bagging_vote(&item)?);
            bag_rank.push(bagging_ranking(&item, max_n.min(k))?);
            let (c, combined) = ibagging(&item)?;
            ib_top.push(c);
            ib_rank.push(top_n(&combined, max_n.min(k))?);
        }
        record(Method::Bagging, bag_top, bag_rank)?;
        record(Method::IBagging, ib_top, ib_rank)?;

        let k = inputs.baseline.rankings.get(&task).map_or(0, Vec::len);
        let list = inputs.baseline.top_n(task, max_n.min(k))?;
        record(Method::ManualRule, vec![list[0]; truth.len()], vec![list; truth.len()])?;
    }
    Ok(EvaluationReport {
        metadata: inputs.metadata.clone(),
        n_values: inputs.n_values.clone(),
        test_items,
        rows: rows.into_values().collect(),
    })
}

/// Published figures from the original (private) corpus, shown for orientation only.
const REFERENCE_PRECISION: [(&str, [f64; 4]); 9] = [
    ("gbt-manual", [0.676, 0.509, 0.392, 0.460]),
    ("gbt-semantic", [0.685, 0.498, 0.391, 0.458]),
    ("gbt-all", [0.704, 0.511, 0.396, 0.467]),
    ("rf-all", [0.666, 0.511, 0.394, 0.453]),
    ("cnn-all", [0.695, 0.508, 0.391, 0.465]),
    ("lstm-all", [0.696, 0.507, 0.390, 0.454]),
    ("bagging-all", [0.699, 0.517, 0.396, 0.476]),
    ("ibagging-all", [0.710, 0.516, 0.397, 0.477]),
    ("manualrule-frequent-label", [0.484, 0.254, 0.256, 0.141]),
];

/// `(task, manual rule N=2..4, IBagging N=2..4)`.
const REFERENCE_RECALL: [(&str, [f64; 3], [f64; 3]); 4] = [
    ("degree", [0.929, 1.0, 1.0], [0.965, 1.0, 1.0]),
    ("salary", [0.394, 0.573, 0.712], [0.800, 0.920, 0.971]),
    ("size", [0.467, 0.664, 0.784], [0.629, 0.783, 0.898]),
    ("position", [0.223, 0.299, 0.373], [0.647, 0.726, 0.780]),
];

impl EvaluationReport {
    pub fn row(&self, m: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == m)
    }

    pub fn precision(&self, m: Method, task: Task) -> Option<f64> {
        self.row(m)?.precision.get(&task).copied()
    }

    pub fn recall(&self, m: Method, task: Task, n: usize) -> Option<f64> {
        self.row(m)?.recall.get(&task)?.get(&n).copied()
    }

    /// Long-format table: `metric method features task n value`, tab separated.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tmethod\tfeatures\ttask\tn\tvalue\n");
        for row in &self.rows {
            for task in Task::ALL {
                if let Some(p) = row.precision.get(&task) {
                    let _ = writeln!(
                        out,
                        "precision\t{}\t{}\t{task}\t1\t{p:.6}",
                        row.method.name(),
                        row.method.features()
                    );
                }
            }
        }
        for row in &self.rows {
            for task in Task::ALL {
                for (n, r) in row.recall.get(&task).into_iter().flatten() {
                    let _ = writeln!(
                        out,
                        "recall\t{}\t{}\t{task}\t{n}\t{r:.6}",
                        row.method.name(),
                        row.method.features()
                    );
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("Run\n");
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "  {k:<22} {v}");
        }
        let _ = writeln!(out, "  {:<22} {}", "test_items", self.test_items);

        out.push_str("\nPrecision (top-1 exact match)\n");
        let _ = writeln!(
            out,
            "  {:<11} {:<15} {:>8} {:>8} {:>8} {:>8}",
            "method", "features", "degree", "salary", "size", "position"
        );
        for row in &self.rows {
            let _ = write!(out, "  {:<11} {:<15}", row.method.name(), row.method.features());
            for task in Task::ALL {
                match row.precision.get(&task) {
                    Some(p) => {
                        let _ = write!(out, " {p:>8.3}");
                    }
                    None => out.push_str("        -"),
                }
            }
            out.push('\n');
        }

        out.push_str("\nRecall for top-N recommendations\n");
        let _ = write!(out, "  {:<11} {:<15} {:<9}", "method", "features", "task");
        for n in &self.n_values {
            let _ = write!(out, " {:>7}", format!("N={n}"));
        }
        out.push('\n');
        for row in &self.rows {
            for task in Task::ALL {
                let _ = write!(
                    out,
                    "  {:<11} {:<15} {:<9}",
                    row.method.name(),
                    row.method.features(),
                    task.name()
                );
                for n in &self.n_values {
                    match row.recall.get(&task).and_then(|r| r.get(n)) {
                        Some(r) => {
                            let _ = write!(out, " {r:>7.3}");
                        }
                        None => out.push_str("       -"),
                    }
                }
                out.push('\n');
            }
        }

        out.push_str("\nNotes\n");
        out.push_str("  [1] Reference figures below come from a private 47,346-resume corpus and cannot be\n");
        out.push_str("      reproduced with the data shipped here. They are listed for orientation only.\n");
        out.push_str("      precision (degree salary size position):\n");
        for (key, v) in REFERENCE_PRECISION {
            let _ = writeln!(out, "        {key:<26} {:.3} {:.3} {:.3} {:.3}", v[0], v[1], v[2], v[3]);
        }
        out.push_str("      recall N=2,3,4 (manual rule | IBagging):\n");
        for (task, base, ib) in REFERENCE_RECALL {
            let _ = writeln!(
                out,
                "        {task:<26} {:.3} {:.3} {:.3} | {:.3} {:.3} {:.3}",
                base[0], base[1], base[2], ib[0], ib[1], ib[2]
            );
        }
        out.push_str("  [2] When N exceeds the number of classes of a task, every class is recommended.\n");
        out.push_str("  [3] Training wall-times are written to timings.tsv, not to this report, so that\n");
        out.push_str("      reports from identical runs are byte-identical.\n");
        out
    }
}
