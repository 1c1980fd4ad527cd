//! Downstream AD-vs-CN evaluation: metrics, linear SVM, random forest and
//! subject-grouped cross-validation over extracted features.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use volcore::Rng;

use crate::cohort::{grouped_kfold_pairs, SplitPlan};
use crate::error::{Error, Result};
use crate::phantom::Diagnosis;

/// One row of confusion-derived metrics. AD is the positive class. A metric
/// whose denominator is empty is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub acc: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub auc: Option<f64>,
    pub j_stat: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

pub fn youden_j(sen: f64, spe: f64) -> f64 {
    sen + spe - 1.0
}

/// Mann-Whitney AUC with midranks for tied scores.
pub fn auc(labels: &[bool], scores: &[f64]) -> Option<f64> {
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (p * (p + 1)) as f64 / 2.0;
    Some(u / (p * n) as f64)
}

pub fn compute_metrics(labels: &[bool], predictions: &[bool], scores: &[f64]) -> Result<MetricRow> {
    if labels.len() != predictions.len() || labels.len() != scores.len() {
        return Err(Error::Data(format!(
            "metric inputs differ in length: {} labels, {} predictions, {} scores",
            labels.len(),
            predictions.len(),
            scores.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let sen = ratio(tp, tp + fneg);
    let spe = ratio(tn, tn + fp);
    Ok(MetricRow {
        acc: ratio(tp + tn, labels.len()),
        sen,
        spe,
        auc: auc(labels, scores),
        j_stat: sen.zip(spe).map(|(a, b)| youden_j(a, b)),
        positives: tp + fneg,
        negatives: tn + fp,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    /// Population standard deviation over folds where the metric is defined.
    pub std: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let n = defined.len();
        let (mean, std) = if n == 0 {
            (None, None)
        } else {
            let m = defined.iter().sum::<f64>() / n as f64;
            let v = defined.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            (Some(m), Some(v.sqrt()))
        };
        MetricSummary {
            mean,
            std,
            defined: n,
            undefined: values.len() - n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classifier: String,
    pub folds: Vec<MetricRow>,
    pub acc: MetricSummary,
    pub sen: MetricSummary,
    pub spe: MetricSummary,
    pub auc: MetricSummary,
    pub j_stat: MetricSummary,
}

impl MetricsReport {
    pub fn from_folds(classifier: impl Into<String>, folds: Vec<MetricRow>) -> Self {
        let col = |f: fn(&MetricRow) -> Option<f64>| {
            MetricSummary::from_values(&folds.iter().map(f).collect::<Vec<_>>())
        };
        MetricsReport {
            classifier: classifier.into(),
            acc: col(|r| r.acc),
            sen: col(|r| r.sen),
            spe: col(|r| r.spe),
            auc: col(|r| r.auc),
            j_stat: col(|r| r.j_stat),
            folds,
        }
    }

    pub fn summaries(&self) -> [(&'static str, &MetricSummary); 5] {
        [
            ("ACC", &self.acc),
            ("SEN", &self.sen),
            ("SPE", &self.spe),
            ("AUC", &self.auc),
            ("J_stat", &self.j_stat),
        ]
    }
}

/// Rows `CLASSIFIER | ACC | SEN | SPE | AUC | J_stat` as `mean +/- std`.
pub fn format_table(reports: &[&MetricsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>15} {:>15} {:>15} {:>15} {:>15}",
        "Classifier", "ACC", "SEN", "SPE", "AUC", "J_stat"
    );
    for r in reports {
        let _ = write!(out, "{:<10}", r.classifier);
        for (_, s) in r.summaries() {
            let cell = match (s.mean, s.std) {
                (Some(m), Some(d)) => format!("{m:.3} +/- {d:.3}"),
                _ => "n/a".to_string(),
            };
            let _ = write!(out, " {cell:>15}");
        }
        out.push('\n');
    }
    for r in reports {
        for (name, s) in r.summaries() {
            if s.undefined > 0 {
                let _ = writeln!(
                    out,
                    "{}: {name} undefined in {} of {} folds",
                    r.classifier,
                    s.undefined,
                    s.defined + s.undefined
                );
            }
        }
    }
    out
}

/// Per-feature standardization fitted on one set of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of rows the statistics were computed from.
    pub rows: usize,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, &x) in mean.iter_mut().zip(*r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; d];
        for r in rows {
            for ((s, &x), &m) in std.iter_mut().zip(*r).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Standardizer {
            mean,
            std,
            rows: rows.len(),
        }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

fn check_training(features: &[&[f64]], labels: &[bool]) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Degenerate("training data has a single class".into()));
    }
    let d = features[0].len();
    if features.iter().any(|r| r.len() != d) {
        return Err(Error::Data("feature rows differ in length".into()));
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 100,
            seed: 0,
        }
    }
}

/// Linear SVM on standardized features. The bias is carried as a constant
/// input feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.transform(row);
        z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.decision(row) > 0.0
    }
}

/// Pegasos stochastic sub-gradient descent on the L2-regularized hinge loss
/// with `lambda = 1 / (C n)`.
pub fn train_linear_svm(
    features: &[&[f64]],
    labels: &[bool],
    cfg: &SvmConfig,
) -> Result<LinearSvm> {
    let d = check_training(features, labels)?;
    if !(cfg.c > 0.0) {
        return Err(Error::Parameter(format!("SVM C {} must be > 0", cfg.c)));
    }
    let standardizer = Standardizer::fit(features);
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|r| {
            let mut z = standardizer.transform(r);
            z.push(1.0);
            z
        })
        .collect();
    let ys: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let n = xs.len();
    let lambda = 1.0 / (cfg.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d + 1];
    let mut rng = Rng::new(cfg.seed, 0x5f3);
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        for i in rng.permutation(n) {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = ys[i] * xs[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let shrink = 1.0 - eta * lambda;
            for wj in &mut w {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, &xj) in w.iter_mut().zip(&xs[i]) {
                    *wj += eta * ys[i] * xj;
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
    let bias = w.pop().unwrap();
    Ok(LinearSvm {
        standardizer,
        weights: w,
        bias,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        positive_fraction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_fraction(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { positive_fraction } => return positive_fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// Fraction of trees voting AD.
    pub fn score(&self, row: &[f64]) -> f64 {
        let votes = self
            .trees
            .iter()
            .filter(|t| t.leaf_fraction(row) > 0.5)
            .count();
        votes as f64 / self.trees.len() as f64
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.score(row) > 0.5
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    x: &'a [&'a [f64]],
    y: &'a [bool],
    max_features: usize,
    min_split: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn best_split(&self, samples: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut vals: Vec<(f64, bool)> = samples
            .iter()
            .map(|&i| (self.x[i][feature], self.y[i]))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let total_pos = vals.iter().filter(|v| v.1).count();
        let mut left_pos = 0;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            left_pos += vals[i].1 as usize;
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            let impurity = (nl as f64 * gini(left_pos, nl)
                + nr as f64 * gini(total_pos - left_pos, nr))
                / n as f64;
            if best.is_none_or(|b| impurity < b.0) {
                let (a, b) = (vals[i].0, vals[i + 1].0);
                let mid = a + (b - a) / 2.0;
                best = Some((impurity, if mid < b { mid } else { a }));
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        let pos = samples.iter().filter(|&&i| self.y[i]).count();
        self.nodes.push(Node::Leaf {
            positive_fraction: pos as f64 / samples.len() as f64,
        });
        if pos == 0 || pos == samples.len() || samples.len() < self.min_split {
            return id;
        }
        let d = self.x[0].len();
        let order = rng.permutation(d);
        let mut chosen: Option<(f64, usize, f64)> = None;
        // Sample features; keep drawing beyond the quota only while no
        // candidate splits the node.
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.max_features && chosen.is_some() {
                break;
            }
            if let Some((imp, thr)) = self.best_split(&samples, f) {
                if chosen.is_none_or(|c| imp < c.0) {
                    chosen = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = chosen else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Bagged CART trees with gini splits over `ceil(sqrt(d))` sampled features.
/// Tree `t` draws from its own stream, so trees are independent of
/// scheduling.
pub fn train_random_forest(
    features: &[&[f64]],
    labels: &[bool],
    cfg: &ForestConfig,
) -> Result<RandomForest> {
    let d = check_training(features, labels)?;
    if cfg.trees < 1 {
        return Err(Error::Parameter("forest needs at least one tree".into()));
    }
    let max_features = ((d as f64).sqrt().ceil() as usize).max(1);
    let n = features.len();
    let trees = volcore::par::map_indices(cfg.trees, |t| {
        let mut rng = Rng::new(cfg.seed, 0x7ee0_0000 + t as u64);
        let boot: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
        let mut b = TreeBuilder {
            x: features,
            y: labels,
            max_features,
            min_split: cfg.min_samples_split.max(2),
            nodes: Vec::new(),
        };
        b.grow(boot, &mut rng);
        Tree { nodes: b.nodes }
    });
    Ok(RandomForest { trees })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub scan_id: String,
    pub subject_id: String,
    pub label: Diagnosis,
    pub features: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    /// Identifier of the checkpoint the features came from.
    pub provenance: String,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.features.len())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let mut ids = BTreeSet::new();
        for r in &self.rows {
            if r.features.len() != d {
                return Err(Error::Data(format!(
                    "scan {} has {} features, expected {d}",
                    r.scan_id,
                    r.features.len()
                )));
            }
            if !ids.insert(r.scan_id.as_str()) {
                return Err(Error::Data(format!("duplicate scan_id {}", r.scan_id)));
            }
            for field in [&r.scan_id, &r.subject_id] {
                if field.contains([',', '\n', '"']) {
                    return Err(Error::Data(format!("identifier {field:?} not CSV-safe")));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::from("scan_id,subject_id,label");
        for i in 0..self.dim() {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.scan_id, r.subject_id, r.label);
            for v in &r.features {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str, provenance: impl Into<String>) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Data("empty feature CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[..3] != ["scan_id", "subject_id", "label"] {
            return Err(Error::Data(format!("bad feature CSV header: {header}")));
        }
        let d = cols.len() - 3;
        for (i, c) in cols[3..].iter().enumerate() {
            if *c != format!("f{i}") {
                return Err(Error::Data(format!(
                    "bad feature column {c}, expected f{i}"
                )));
            }
        }
        let mut rows = Vec::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != d + 3 {
                return Err(Error::Data(format!(
                    "line {}: {} fields, expected {}",
                    ln + 1,
                    f.len(),
                    d + 3
                )));
            }
            let features = f[3..]
                .iter()
                .map(|s| {
                    s.parse::<f32>()
                        .map_err(|e| Error::Data(format!("line {}: bad value {s:?}: {e}", ln + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                scan_id: f[0].to_string(),
                subject_id: f[1].to_string(),
                label: f[2].parse()?,
                features,
            });
        }
        let t = FeatureTable {
            provenance: provenance.into(),
            rows,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamConfig {
    pub k: usize,
    pub seed: u64,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        DownstreamConfig {
            k: 10,
            seed: 0,
            svm: SvmConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

/// Which rows trained and tested one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldTrace {
    pub fold: usize,
    pub train_scans: Vec<String>,
    pub test_scans: Vec<String>,
    /// Rows behind the SVM standardization statistics.
    pub standardizer_rows: usize,
    pub standardizer_mean: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub svc: MetricsReport,
    pub rfc: MetricsReport,
    pub plan: SplitPlan,
    #[serde(skip)]
    pub traces: Vec<FoldTrace>,
}

/// K-fold subject-grouped evaluation of both classifiers.
pub fn evaluate_downstream(
    table: &FeatureTable,
    cfg: &DownstreamConfig,
) -> Result<DownstreamReport> {
    table.validate()?;
    let labels: Vec<bool> = table.rows.iter().map(|r| r.label.is_ad()).collect();
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::Data(
            "downstream evaluation needs both CN and AD rows".into(),
        ));
    }
    let plan = grouped_kfold_pairs(
        table
            .rows
            .iter()
            .map(|r| (r.scan_id.as_str(), r.subject_id.as_str())),
        cfg.k,
        cfg.seed,
        table.rows.len(),
    )?;
    let feats: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| r.features.iter().map(|&v| v as f64).collect())
        .collect();
    let folds: Vec<usize> = table
        .rows
        .iter()
        .map(|r| plan.assignments[&r.scan_id])
        .collect();
    let mut svc_rows = Vec::new();
    let mut rfc_rows = Vec::new();
    let mut traces = Vec::new();
    for fold in 0..cfg.k {
        let train: Vec<usize> = (0..feats.len()).filter(|&i| folds[i] != fold).collect();
        let test: Vec<usize> = (0..feats.len()).filter(|&i| folds[i] == fold).collect();
        let tx: Vec<&[f64]> = train.iter().map(|&i| feats[i].as_slice()).collect();
        let ty: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let svm = train_linear_svm(
            &tx,
            &ty,
            &SvmConfig {
                seed: cfg.svm.seed.wrapping_add(fold as u64),
                ..cfg.svm.clone()
            },
        )?;
        let forest = train_random_forest(
            &tx,
            &ty,
            &ForestConfig {
                seed: cfg.forest.seed.wrapping_add(fold as u64),
                ..cfg.forest.clone()
            },
        )?;
        let test_labels: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        let svm_scores: Vec<f64> = test.iter().map(|&i| svm.decision(&feats[i])).collect();
        let rf_scores: Vec<f64> = test.iter().map(|&i| forest.score(&feats[i])).collect();
        let svm_pred: Vec<bool> = svm_scores.iter().map(|&s| s > 0.0).collect();
        let rf_pred: Vec<bool> = rf_scores.iter().map(|&s| s > 0.5).collect();
        svc_rows.push(compute_metrics(&test_labels, &svm_pred, &svm_scores)?);
        rfc_rows.push(compute_metrics(&test_labels, &rf_pred, &rf_scores)?);
        traces.push(FoldTrace {
            fold,
            train_scans: train
                .iter()
                .map(|&i| table.rows[i].scan_id.clone())
                .collect(),
            test_scans: test
                .iter()
                .map(|&i| table.rows[i].scan_id.clone())
                .collect(),
            standardizer_rows: svm.standardizer.rows,
            standardizer_mean: svm.standardizer.mean.clone(),
        });
    }
    Ok(DownstreamReport {
        svc: MetricsReport::from_folds("SVC", svc_rows),
        rfc: MetricsReport::from_folds("RFC", rfc_rows),
        plan,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_midranks() {
        assert_eq!(auc(&[true, false], &[1.0, 1.0]), Some(0.5));
        assert_eq!(auc(&[true, false, true], &[3.0, 1.0, 2.0]), Some(1.0));
        assert_eq!(auc(&[true, true], &[3.0, 1.0]), None);
        // positives {2, 2}, negatives {1, 2}: U = (1 + 0.5) * 2 = 3 of 4.
        assert_eq!(
            auc(&[true, true, false, false], &[2.0, 2.0, 1.0, 2.0]),
            Some(0.75)
        );
    }

    #[test]
    fn undefined_metrics() {
        let m = compute_metrics(&[false, false], &[false, true], &[0.0, 1.0]).unwrap();
        assert_eq!(m.sen, None);
        assert_eq!(m.spe, Some(0.5));
        assert_eq!(m.j_stat, None);
        assert_eq!(m.auc, None);
        assert!(compute_metrics(&[true], &[], &[]).is_err());
    }

    #[test]
    fn summary_population_std() {
        let s = MetricSummary::from_values(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.std, Some(1.0));
        assert_eq!((s.defined, s.undefined), (2, 1));
    }

    #[test]
    fn single_class_training_is_degenerate() {
        let x = [[0.0], [1.0]];
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        assert!(matches!(
            train_linear_svm(&rows, &[true, true], &SvmConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            train_random_forest(&rows, &[false, false], &ForestConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }
}
