//! CDR-based subject selection, subject-grouped K-fold and leakage audit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use volcore::Rng;

use crate::error::{Error, Result};
use crate::phantom::{Diagnosis, ScanRecord};

pub const DEFAULT_AD_THRESHOLD: f64 = 0.5;
const STREAM_SPLIT: u64 = 0x5b117;

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectDiagnosis {
    pub subject_id: String,
    pub group: Diagnosis,
    /// `(scan_id, associated CDR score)` in input order.
    pub associations: Vec<(String, f64)>,
    pub kept: Vec<String>,
    pub discarded: Vec<String>,
}

/// CDR entry closest in time to `day`; ties go to the earlier entry.
pub fn closest_cdr(history: &[(i64, f64)], day: i64) -> Option<(i64, f64)> {
    let mut best: Option<(i64, f64)> = None;
    for &(d, s) in history {
        let better = match best {
            None => true,
            Some((bd, _)) => (d - day).abs() < (bd - day).abs(),
        };
        if better {
            best = Some((d, s));
        }
    }
    best
}

/// Diagnosis of one subject from its scans. AD when the highest associated
/// score reaches `threshold`; for AD subjects only the scans at that highest
/// score are kept.
pub fn assign_diagnosis_with(scans: &[ScanRecord], threshold: f64) -> Result<SubjectDiagnosis> {
    let first = scans
        .first()
        .ok_or_else(|| Error::Data("assign_diagnosis: no scans".into()))?;
    if let Some(other) = scans.iter().find(|s| s.subject_id != first.subject_id) {
        return Err(Error::Data(format!(
            "assign_diagnosis: scans of {} and {} mixed",
            first.subject_id, other.subject_id
        )));
    }
    let mut associations = Vec::with_capacity(scans.len());
    for s in scans {
        let (_, score) = closest_cdr(&s.cdr_history, s.acquired_day)
            .ok_or_else(|| Error::Data(format!("scan {}: empty cdr_history", s.scan_id)))?;
        associations.push((s.scan_id.clone(), score));
    }
    let max = associations
        .iter()
        .map(|a| a.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let group = if max >= threshold {
        Diagnosis::AD
    } else {
        Diagnosis::CN
    };
    let (kept, discarded): (Vec<_>, Vec<_>) = associations
        .iter()
        .partition(|(_, s)| group == Diagnosis::CN || *s >= max);
    Ok(SubjectDiagnosis {
        subject_id: first.subject_id.clone(),
        group,
        kept: kept.into_iter().map(|a| a.0.clone()).collect(),
        discarded: discarded.into_iter().map(|a| a.0.clone()).collect(),
        associations,
    })
}

pub fn assign_diagnosis(scans: &[ScanRecord]) -> Result<SubjectDiagnosis> {
    assign_diagnosis_with(scans, DEFAULT_AD_THRESHOLD)
}

/// Subject ids in first-appearance order with their scans.
pub fn group_by_subject(manifest: &[ScanRecord]) -> Vec<(String, Vec<&ScanRecord>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&ScanRecord>> = BTreeMap::new();
    for r in manifest {
        let e = groups.entry(r.subject_id.as_str()).or_default();
        if e.is_empty() {
            order.push(r.subject_id.clone());
        }
        e.push(r);
    }
    order
        .into_iter()
        .map(|s| {
            let scans = groups.remove(s.as_str()).unwrap();
            (s, scans)
        })
        .collect()
}

/// Applies [`assign_diagnosis_with`] per subject; returns kept records with
/// their diagnosis set to the subject group, in manifest order.
pub fn select_scans(manifest: &[ScanRecord], threshold: f64) -> Result<Vec<ScanRecord>> {
    let mut keep: BTreeMap<String, Diagnosis> = BTreeMap::new();
    for (_, scans) in group_by_subject(manifest) {
        let owned: Vec<ScanRecord> = scans.into_iter().cloned().collect();
        let d = assign_diagnosis_with(&owned, threshold)?;
        for id in d.kept {
            keep.insert(id, d.group);
        }
    }
    Ok(manifest
        .iter()
        .filter_map(|r| {
            keep.get(&r.scan_id).map(|&g| ScanRecord {
                diagnosis: g,
                ..r.clone()
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
    pub subject_map: BTreeMap<String, usize>,
    /// Manifest length when the plan was made; augmented scans recorded
    /// before this index existed before the split.
    pub created_at: usize,
}

impl SplitPlan {
    pub fn fold_of(&self, scan_id: &str) -> Option<usize> {
        self.assignments.get(scan_id).copied()
    }

    pub fn subjects_in(&self, fold: usize) -> Vec<&str> {
        self.subject_map
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }
}

/// Subject-grouped K-fold over `(scan_id, subject_id)` pairs: sorted subjects
/// are shuffled by the seed and dealt round-robin.
pub fn grouped_kfold_pairs<'a>(
    scans: impl IntoIterator<Item = (&'a str, &'a str)>,
    k: usize,
    seed: u64,
    created_at: usize,
) -> Result<SplitPlan> {
    if k < 1 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    let scans: Vec<(&str, &str)> = scans.into_iter().collect();
    let subjects: BTreeSet<&str> = scans.iter().map(|s| s.1).collect();
    if subjects.len() < k {
        return Err(Error::Data(format!(
            "{} subjects cannot fill {k} folds",
            subjects.len()
        )));
    }
    let mut order: Vec<&str> = subjects.into_iter().collect();
    Rng::new(seed, STREAM_SPLIT).shuffle(&mut order);
    let subject_map: BTreeMap<String, usize> = order
        .iter()
        .enumerate()
        .map(|(i, s)| (s.to_string(), i % k))
        .collect();
    let assignments = scans
        .iter()
        .map(|(scan, subj)| (scan.to_string(), subject_map[*subj]))
        .collect();
    Ok(SplitPlan {
        k,
        seed,
        assignments,
        subject_map,
        created_at,
    })
}

pub fn grouped_kfold(manifest: &[ScanRecord], k: usize, seed: u64) -> Result<SplitPlan> {
    grouped_kfold_pairs(
        manifest
            .iter()
            .map(|r| (r.scan_id.as_str(), r.subject_id.as_str())),
        k,
        seed,
        manifest.len(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LeakageKind {
    A,
    B,
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: LeakageKind,
    pub ids: Vec<String>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub violations: Vec<Violation>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: LeakageKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

pub fn audit_leakage(
    manifest: &[ScanRecord],
    plan: &SplitPlan,
    pretrain_subjects: &BTreeSet<String>,
) -> Result<LeakageReport> {
    let index: BTreeMap<&str, (usize, &ScanRecord)> = manifest
        .iter()
        .enumerate()
        .map(|(i, r)| (r.scan_id.as_str(), (i, r)))
        .collect();
    if let Some(missing) = plan
        .assignments
        .keys()
        .find(|s| !index.contains_key(s.as_str()))
    {
        return Err(Error::Consistency(format!(
            "plan scan {missing} not in manifest"
        )));
    }
    let mut violations = Vec::new();

    // A: one subject, several folds.
    let mut folds_by_subject: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (scan, &fold) in &plan.assignments {
        let subject = index[scan.as_str()].1.subject_id.as_str();
        let e = folds_by_subject.entry(subject).or_default();
        e.insert(fold);
        if let Some(&f) = plan.subject_map.get(subject) {
            e.insert(f);
        }
    }
    for (subject, folds) in &folds_by_subject {
        if folds.len() > 1 {
            violations.push(Violation {
                kind: LeakageKind::A,
                ids: vec![subject.to_string()],
                detail: format!("subject {subject} spans folds {folds:?}"),
            });
        }
    }

    // B: augmented scans split from their parent or created before the plan.
    for (i, r) in manifest.iter().enumerate() {
        let Some(parent) = &r.parent_scan_id else {
            continue;
        };
        if i < plan.created_at {
            violations.push(Violation {
                kind: LeakageKind::B,
                ids: vec![r.scan_id.clone(), parent.clone()],
                detail: format!(
                    "augmented scan {} of {parent} exists before the split",
                    r.scan_id
                ),
            });
            continue;
        }
        let child_fold = plan.fold_of(&r.scan_id);
        let parent_fold = plan.fold_of(parent);
        if let (Some(c), Some(p)) = (child_fold, parent_fold) {
            if c != p {
                violations.push(Violation {
                    kind: LeakageKind::B,
                    ids: vec![r.scan_id.clone(), parent.clone()],
                    detail: format!(
                        "augmented scan {} in fold {c}, parent {parent} in fold {p}",
                        r.scan_id
                    ),
                });
            }
        }
    }

    // C: pretraining subjects reused for evaluation.
    let eval_subjects: BTreeSet<&str> = plan
        .assignments
        .keys()
        .map(|s| index[s.as_str()].1.subject_id.as_str())
        .collect();
    let overlap: Vec<String> = eval_subjects
        .iter()
        .filter(|s| pretrain_subjects.contains(**s))
        .map(|s| s.to_string())
        .collect();
    if !overlap.is_empty() {
        violations.push(Violation {
            kind: LeakageKind::C,
            detail: format!(
                "{} subject(s) in both pretraining and evaluation",
                overlap.len()
            ),
            ids: overlap,
        });
    }
    Ok(LeakageReport { violations })
}

/// A manifest, plan and pretraining set that an audit should judge.
#[derive(Clone, Debug)]
pub struct AuditCase {
    pub manifest: Vec<ScanRecord>,
    pub plan: SplitPlan,
    pub pretrain_subjects: BTreeSet<String>,
}

/// Plants one violation of `kind` into a clean case. Type A moves one scan
/// of a multi-scan subject (or, failing that, re-labels one subject in the
/// subject map); type B adds an augmented scan either before the split or in
/// a different fold from its parent; type C copies eval subjects into the
/// pretraining set. Needs `k >= 2`.
pub fn inject_fault(case: &AuditCase, kind: LeakageKind, rng: &mut Rng) -> Result<AuditCase> {
    let mut out = case.clone();
    let k = case.plan.k;
    if k < 2 {
        return Err(Error::Parameter("fault injection needs k >= 2".into()));
    }
    let groups = group_by_subject(&case.manifest);
    match kind {
        LeakageKind::A => {
            let multi: Vec<_> = groups.iter().filter(|(_, s)| s.len() >= 2).collect();
            if multi.is_empty() {
                let (subject, _) = &groups[rng.index(groups.len())];
                let f = out.plan.subject_map[subject];
                out.plan
                    .subject_map
                    .insert(subject.clone(), (f + 1 + rng.index(k - 1)) % k);
            } else {
                let (_, scans) = multi[rng.index(multi.len())];
                let scan = &scans[rng.index(scans.len())].scan_id;
                let f = out.plan.assignments[scan];
                out.plan
                    .assignments
                    .insert(scan.clone(), (f + 1 + rng.index(k - 1)) % k);
            }
        }
        LeakageKind::B => {
            let parent = case.manifest[rng.index(case.manifest.len())].clone();
            let child = ScanRecord {
                scan_id: format!("{}_aug{}", parent.scan_id, rng.next_u64() % 1000),
                parent_scan_id: Some(parent.scan_id.clone()),
                ..parent.clone()
            };
            let parent_fold = case.plan.assignments[&parent.scan_id];
            if rng.bernoulli(0.5) {
                // Augmented before the split: inserted inside the planned prefix.
                let at = rng.index(out.plan.created_at.max(1));
                out.manifest.insert(at, child.clone());
                out.plan.created_at += 1;
                out.plan.assignments.insert(child.scan_id, parent_fold);
            } else {
                out.manifest.push(child.clone());
                out.plan
                    .assignments
                    .insert(child.scan_id, (parent_fold + 1 + rng.index(k - 1)) % k);
            }
        }
        LeakageKind::C => {
            let n = 1 + rng.index(3.min(groups.len()));
            let picks = rng.permutation(groups.len());
            for &i in picks.iter().take(n) {
                out.pretrain_subjects.insert(groups[i].0.clone());
            }
        }
    }
    Ok(out)
}
