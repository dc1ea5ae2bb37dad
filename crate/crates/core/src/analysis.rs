//! Classification from cohesive degrees, the argmax baseline, and extraction
//! of empirically cohesive (and generative) groups.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cohesion::{AgreementMatrix, CohesionMatrix2D, CohesionTensor3D};
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParamVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    /// Position of the classified element in its set.
    pub index: usize,
    pub predicted: usize,
    /// Best-matching element of A (cohesion classifiers only).
    pub best_match: Option<usize>,
    /// Class slice of the best match (unconditional classifier only).
    pub best_class: Option<usize>,
    pub score: Option<i64>,
    pub support: Option<u64>,
    pub truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub predictions: Vec<Prediction>,
    pub correct: usize,
    pub total: usize,
    /// `correct / total`, present when ground truth was supplied.
    pub accuracy: Option<f64>,
}

impl PredictionReport {
    fn from_predictions(mut predictions: Vec<Prediction>, truth: Option<&[usize]>) -> Result<Self> {
        let total = predictions.len();
        let mut correct = 0;
        if let Some(t) = truth {
            if t.len() != total {
                return Err(Error::arg(format!(
                    "{} ground-truth labels for {total} predictions",
                    t.len()
                )));
            }
            for (p, &y) in predictions.iter_mut().zip(t) {
                p.truth = Some(y);
                correct += usize::from(p.predicted == y);
            }
        }
        let accuracy = truth.map(|_| if total == 0 { 0.0 } else { correct as f64 / total as f64 });
        Ok(PredictionReport {
            predictions,
            correct,
            total,
            accuracy,
        })
    }

    pub fn predicted_labels(&self) -> Vec<usize> {
        self.predictions.iter().map(|p| p.predicted).collect()
    }
}

/// For each `b`, the label of the `a` with the highest cohesive degree
/// (lowest `a` on ties).
pub fn cohesion_classify(
    m: &CohesionMatrix2D,
    labels_a: &[usize],
    truth_b: Option<&[usize]>,
) -> Result<PredictionReport> {
    if m.a_len() == 0 || m.b_len() == 0 {
        return Err(Error::arg("cannot classify from an empty cohesion matrix"));
    }
    if labels_a.len() != m.a_len() {
        return Err(Error::arg(format!(
            "{} labels for an A side of {}",
            labels_a.len(),
            m.a_len()
        )));
    }
    let predictions = (0..m.b_len())
        .map(|b| {
            let mut best = 0;
            for a in 1..m.a_len() {
                if m.score(a, b) > m.score(best, b) {
                    best = a;
                }
            }
            Prediction {
                index: b,
                predicted: labels_a[best],
                best_match: Some(best),
                best_class: None,
                score: Some(m.score(best, b)),
                support: Some(m.support(best, b)),
                truth: None,
            }
        })
        .collect();
    PredictionReport::from_predictions(predictions, truth_b)
}

/// For each `b`, the class `c` of the highest-scoring cell `(a, b, c)` among
/// cells with `labels_a[a] == c` (lowest `(a, c)` on ties).
pub fn cohesion_classify_unconditional(
    t: &CohesionTensor3D,
    labels_a: &[usize],
    truth_b: Option<&[usize]>,
) -> Result<PredictionReport> {
    let c = &t.counts;
    if c.a_len == 0 || c.b_len == 0 {
        return Err(Error::arg("cannot classify from an empty cohesion tensor"));
    }
    if labels_a.len() != c.a_len {
        return Err(Error::arg(format!(
            "{} labels for an A side of {}",
            labels_a.len(),
            c.a_len
        )));
    }
    if let Some(&bad) = labels_a.iter().find(|&&y| y >= c.classes) {
        return Err(Error::arg(format!(
            "label {bad} outside the tensor's {} classes",
            c.classes
        )));
    }
    let predictions = (0..c.b_len)
        .map(|b| {
            // only one eligible class per a, so (a, c) order is a order
            let mut best = 0;
            for a in 1..c.a_len {
                if t.score(a, b, labels_a[a]) > t.score(best, b, labels_a[best]) {
                    best = a;
                }
            }
            let cls = labels_a[best];
            Prediction {
                index: b,
                predicted: cls,
                best_match: Some(best),
                best_class: Some(cls),
                score: Some(t.score(best, b, cls)),
                support: Some(t.support(best, b, cls)),
                truth: None,
            }
        })
        .collect();
    PredictionReport::from_predictions(predictions, truth_b)
}

/// Predicts the largest logit (lowest class on ties) for every sample.
pub fn argmax_baseline(spec: &ModelSpec, params: &ParamVector, set: &LabeledSet) -> Result<PredictionReport> {
    let logits = spec.forward_batch(params, set.samples())?;
    let predictions = logits
        .iter()
        .enumerate()
        .map(|(i, z)| Prediction {
            index: i,
            predicted: z.argmax(),
            best_match: None,
            best_class: None,
            score: None,
            support: None,
            truth: None,
        })
        .collect();
    PredictionReport::from_predictions(predictions, Some(&set.labels()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    /// Ascending positions in the union set.
    pub members: Vec<usize>,
    pub min_p_hat: f64,
    pub min_support: u64,
    pub generative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub threshold: f64,
    pub min_support: u64,
    pub groups: Vec<Group>,
}

/// Symmetric threshold graph over the union set. An edge needs both
/// directions to clear `threshold` and `min_support`; its weight is the
/// weaker direction.
pub struct AgreementGraph {
    n: usize,
    weight: Vec<Option<(f64, u64)>>,
}

impl AgreementGraph {
    pub fn build(agr: &AgreementMatrix, threshold: f64, min_support: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::arg(format!("threshold {threshold} outside [0,1]")));
        }
        if agr.a_len != agr.b_len {
            return Err(Error::arg(
                "group extraction needs a square agreement matrix over A ∪ B",
            ));
        }
        let n = agr.a_len;
        let mut weight = vec![None; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let edge = match (agr.get(i, j), agr.get(j, i)) {
                    (Some(p), Some(q)) => {
                        let s = agr.support_at(i, j).min(agr.support_at(j, i));
                        let p = p.min(q);
                        (p >= threshold && s >= min_support).then_some((p, s))
                    }
                    _ => None,
                };
                weight[i * n + j] = edge;
            }
        }
        Ok(AgreementGraph { n, weight })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edge(&self, i: usize, j: usize) -> Option<(f64, u64)> {
        self.weight[i * self.n + j]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.edge(i, j).is_some()
    }
}

/// Greedy maximal cliques of the agreement graph.
///
/// Edges are visited from strongest to weakest; each edge not yet inside a
/// returned group seeds a clique that grows by the candidate with the
/// strongest weakest link to the current members until no vertex is
/// adjacent to all of them. Every edge ends up inside some group.
pub fn extract_groups(
    agr: &AgreementMatrix,
    threshold: f64,
    min_support: u64,
    train_membership: &[bool],
) -> Result<GroupReport> {
    let g = AgreementGraph::build(agr, threshold, min_support)?;
    let n = g.len();
    if train_membership.len() != n {
        return Err(Error::arg(format!(
            "membership mask covers {} of {n} elements",
            train_membership.len()
        )));
    }

    let mut edges: Vec<(usize, usize, f64, u64)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if let Some((p, s)) = g.edge(i, j) {
                edges.push((i, j, p, s));
            }
        }
    }
    edges.sort_by(|x, y| {
        y.2.total_cmp(&x.2)
            .then(y.3.cmp(&x.3))
            .then(x.0.cmp(&y.0))
            .then(x.1.cmp(&y.1))
    });

    let mut covered = vec![false; n * n];
    let mut groups = Vec::new();
    for &(i, j, _, _) in &edges {
        if covered[i * n + j] {
            continue;
        }
        let mut members = vec![i, j];
        loop {
            let mut best: Option<(usize, f64, u64)> = None;
            for k in 0..n {
                if members.contains(&k) || !members.iter().all(|&m| g.adjacent(k, m)) {
                    continue;
                }
                let (p, s) = members.iter().fold((f64::INFINITY, u64::MAX), |(p, s), &m| {
                    let (ep, es) = g.edge(k, m).expect("adjacent");
                    (p.min(ep), s.min(es))
                });
                let better = match best {
                    None => true,
                    Some((_, bp, bs)) => p > bp || (p == bp && s > bs),
                };
                if better {
                    best = Some((k, p, s));
                }
            }
            match best {
                Some((k, _, _)) => members.push(k),
                None => break,
            }
        }
        members.sort_unstable();
        let mut min_p = f64::INFINITY;
        let mut min_s = u64::MAX;
        for (x, &u) in members.iter().enumerate() {
            for &v in &members[x + 1..] {
                covered[u * n + v] = true;
                covered[v * n + u] = true;
                let (p, s) = g.edge(u, v).expect("clique edge");
                min_p = min_p.min(p);
                min_s = min_s.min(s);
            }
        }
        let generative = members.iter().any(|&m| !train_membership[m]);
        groups.push(Group {
            members,
            min_p_hat: min_p,
            min_support: min_s,
            generative,
        });
    }
    Ok(GroupReport {
        threshold,
        min_support,
        groups,
    })
}

/// Keeps the groups with at least one member outside the training side,
/// refreshing every flag from `train_membership`.
pub fn find_generative_groups(report: &GroupReport, train_membership: &[bool]) -> Result<GroupReport> {
    let mut out = report.clone();
    for g in &mut out.groups {
        g.generative = g.members.iter().try_fold(false, |acc, &m| {
            train_membership
                .get(m)
                .map(|&in_train| acc || !in_train)
                .ok_or_else(|| Error::arg(format!("membership mask does not cover element {m}")))
        })?;
    }
    out.groups.retain(|g| g.generative);
    Ok(out)
}

/// Fraction of groups whose members all carry one label.
pub fn pure_group_fraction(groups: &[Group], labels: &[usize]) -> f64 {
    if groups.is_empty() {
        return 0.0;
    }
    let pure = groups
        .iter()
        .filter(|g| g.members.iter().all(|&m| labels[m] == labels[g.members[0]]))
        .count();
    pure as f64 / groups.len() as f64
}

/// Expected [`pure_group_fraction`] for groups of the same sizes drawn
/// uniformly without replacement from a population with these labels.
pub fn chance_pure_fraction(groups: &[Group], labels: &[usize]) -> f64 {
    if groups.is_empty() {
        return 0.0;
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    let n = labels.len();
    // P(all same) = Σ_c Π_{t<s} (n_c − t)/(n − t)
    let p_pure = |s: usize| -> f64 {
        counts
            .iter()
            .map(|&nc| {
                (0..s)
                    .map(|t| nc.saturating_sub(t) as f64 / (n - t) as f64)
                    .product::<f64>()
            })
            .sum()
    };
    groups.iter().map(|g| p_pure(g.members.len())).sum::<f64>() / groups.len() as f64
}

/// One row of the accuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub algorithm: String,
    pub dataset: String,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

impl AccuracyRow {
    pub fn new(algorithm: &str, dataset: &str, report: &PredictionReport) -> Self {
        AccuracyRow {
            algorithm: algorithm.to_string(),
            dataset: dataset.to_string(),
            accuracy: report.accuracy.unwrap_or(0.0),
            correct: report.correct,
            total: report.total,
        }
    }
}

/// Aligned-column rendering of accuracy rows.
pub fn render_accuracy_table(rows: &[AccuracyRow]) -> String {
    let wa = rows.iter().map(|r| r.algorithm.len()).chain([9]).max().unwrap();
    let wd = rows.iter().map(|r| r.dataset.len()).chain([7]).max().unwrap();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<wa$}  {:<wd$}  {:>8}  {:>13}",
        "algorithm", "dataset", "accuracy", "correct/total"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<wa$}  {:<wd$}  {:>8.4}  {:>13}",
            r.algorithm,
            r.dataset,
            r.accuracy,
            format!("{}/{}", r.correct, r.total)
        );
    }
    s
}

/// Aligned-column rendering of a group report. `labels` and `sides` are
/// indexed by union position.
pub fn render_groups(report: &GroupReport, labels: &[usize], sides: &[char]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "groups: {} (threshold {}, min support {})",
        report.groups.len(),
        report.threshold,
        report.min_support
    );
    let _ = writeln!(
        s,
        "{:>5}  {:>4}  {:>10}  {:>8}  {:>10}  members",
        "group", "size", "generative", "min_p", "min_supp"
    );
    for (i, g) in report.groups.iter().enumerate() {
        let members: Vec<String> = g
            .members
            .iter()
            .map(|&m| format!("{}{}:{}", sides[m], m, labels[m]))
            .collect();
        let _ = writeln!(
            s,
            "{:>5}  {:>4}  {:>10}  {:>8.4}  {:>10}  {}",
            i,
            g.members.len(),
            if g.generative { "yes" } else { "no" },
            g.min_p_hat,
            g.min_support,
            members.join(" ")
        );
    }
    s
}
