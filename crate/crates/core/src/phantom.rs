//! Parametric brain-like phantoms and synthetic cohorts.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use volcore::Rng;

use crate::error::{Error, Result};
use crate::volume::Volume;

pub const AGE_MIN: f64 = 44.0;
pub const AGE_MAX: f64 = 82.0;
pub const SKULL: f32 = 0.9;
pub const CORTEX: f32 = 0.6;
pub const WHITE_MATTER: f32 = 0.35;
pub const VENTRICLE: f32 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagnosis {
    CN,
    AD,
}

impl Diagnosis {
    pub fn is_ad(self) -> bool {
        self == Diagnosis::AD
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Diagnosis::CN => "CN",
            Diagnosis::AD => "AD",
        })
    }
}

impl FromStr for Diagnosis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CN" => Ok(Diagnosis::CN),
            "AD" => Ok(Diagnosis::AD),
            other => Err(Error::Data(format!("unknown diagnosis '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortRole {
    Pretrain,
    Eval,
}

/// Per-subject shape jitter, shared by all scans of a subject.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectShape {
    pub head_scale: [f64; 3],
}

impl Default for SubjectShape {
    fn default() -> Self {
        SubjectShape {
            head_scale: [1.0; 3],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: usize,
    pub age: f64,
    pub diagnosis: Diagnosis,
    pub atrophy_severity: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub shape: SubjectShape,
}

impl PhantomSpec {
    pub fn cn(grid: usize, age: f64, seed: u64) -> Self {
        PhantomSpec {
            grid,
            age,
            diagnosis: Diagnosis::CN,
            atrophy_severity: 0.0,
            noise_sigma: 0.0,
            seed,
            shape: SubjectShape::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 16 {
            return Err(Error::Parameter(format!(
                "phantom grid {} must be >= 16",
                self.grid
            )));
        }
        if !(AGE_MIN..=AGE_MAX).contains(&self.age) {
            return Err(Error::Parameter(format!(
                "phantom age {} outside [44, 82]",
                self.age
            )));
        }
        if !(0.0..=1.0).contains(&self.atrophy_severity) {
            return Err(Error::Parameter(format!(
                "atrophy severity {} outside [0, 1]",
                self.atrophy_severity
            )));
        }
        if (self.atrophy_severity == 0.0) != (self.diagnosis == Diagnosis::CN) {
            return Err(Error::Parameter(format!(
                "{} phantom with atrophy severity {}",
                self.diagnosis, self.atrophy_severity
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise sigma {} must be >= 0",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    fn age_term(&self) -> f64 {
        (self.age - AGE_MIN) / (AGE_MAX - AGE_MIN)
    }

    /// Cortical thickness in voxels.
    pub fn cortex_thickness(&self) -> f64 {
        0.12 * self.grid as f64 * (1.0 - 0.3 * self.age_term() - 0.4 * self.atrophy_severity)
    }

    /// Ventricle radius in voxels.
    pub fn ventricle_radius(&self) -> f64 {
        0.15 * self.grid as f64 * (1.0 + 0.3 * self.age_term() + 0.6 * self.atrophy_severity)
    }
}

fn inside(d: [f64; 3], semi: [f64; 3]) -> bool {
    semi.iter().all(|&s| s > 0.0)
        && d.iter()
            .zip(&semi)
            .map(|(x, s)| (x / s) * (x / s))
            .sum::<f64>()
            <= 1.0
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Volume> {
    spec.validate()?;
    let g = spec.grid as f64;
    let centre = (g - 1.0) / 2.0;
    let head = [
        0.44 * g * spec.shape.head_scale[0],
        0.36 * g * spec.shape.head_scale[1],
        0.40 * g * spec.shape.head_scale[2],
    ];
    let skull = 0.05 * g;
    let brain = head.map(|h| h - skull);
    let t = spec.cortex_thickness();
    let inner = brain.map(|b| b - t);
    let r = spec.ventricle_radius();
    let vent_semi = [r, 0.7 * r, 0.85 * r];
    let vent_centre = [centre - 0.06 * g, centre + 0.04 * g, centre];

    let mut rng = Rng::new(spec.seed, 0x9a7);
    let noise = spec.noise_sigma;
    let vol = Volume::from_fn([spec.grid; 3], |z, y, x| {
        let p = [z as f64, y as f64, x as f64];
        let d = [p[0] - centre, p[1] - centre, p[2] - centre];
        let base = if !inside(d, head) {
            0.0
        } else if !inside(d, brain) {
            SKULL
        } else {
            let dv = [
                p[0] - vent_centre[0],
                p[1] - vent_centre[1],
                p[2] - vent_centre[2],
            ];
            if inside(dv, vent_semi) {
                VENTRICLE
            } else if inside(d, inner) {
                WHITE_MATTER
            } else {
                CORTEX
            }
        };
        let value = if noise > 0.0 {
            base as f64 + noise * rng.normal()
        } else {
            base as f64
        };
        value.clamp(0.0, 1.0) as f32
    });
    Ok(vol)
}

/// Voxels darker than 0.2 inside the central box spanning the middle 30% of
/// each axis. The box lies inside the brain for every phantom geometry, so
/// only ventricle voxels (and noise) contribute.
pub fn ventricle_voxel_count(v: &Volume) -> usize {
    let s = v.shape();
    let range =
        |e: usize| ((0.35 * e as f64).round() as usize)..((0.65 * e as f64).round() as usize);
    let mut n = 0;
    for z in range(s[0]) {
        for y in range(s[1]) {
            for x in range(s[2]) {
                if v.get(z, y, x) < 0.2 {
                    n += 1;
                }
            }
        }
    }
    n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub subject_id: String,
    pub scan_id: String,
    pub acquired_day: i64,
    pub age: f64,
    pub diagnosis: Diagnosis,
    pub cdr_history: Vec<(i64, f64)>,
    pub parent_scan_id: Option<String>,
    pub cohort: CohortRole,
}

impl ScanRecord {
    pub fn validate(&self) -> Result<()> {
        if self.cdr_history.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Data(format!(
                "scan {}: cdr_history days must be strictly increasing",
                self.scan_id
            )));
        }
        if let Some(&(_, s)) = self
            .cdr_history
            .iter()
            .find(|(_, s)| ![0.0, 0.5, 1.0, 2.0, 3.0].contains(s))
        {
            return Err(Error::Data(format!(
                "scan {}: invalid CDR score {s}",
                self.scan_id
            )));
        }
        Ok(())
    }
}

pub fn write_manifest<W: Write>(records: &[ScanRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn manifest_to_string(records: &[ScanRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_manifest(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<ScanRecord>> {
    let mut out: Vec<ScanRecord> = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScanRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("manifest line {}: {e}", i + 1)))?;
        rec.validate()?;
        if !ids.insert(rec.scan_id.clone()) {
            return Err(Error::Data(format!("duplicate scan_id {}", rec.scan_id)));
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub role: CohortRole,
    pub n_subjects: usize,
    pub scans_min: usize,
    pub scans_max: usize,
    /// Fraction of AD subjects; must be 0 for a pretraining cohort.
    pub ad_fraction: f64,
    pub severity_min: f64,
    pub severity_max: f64,
    pub noise_sigma: f64,
    pub grid: usize,
    pub seed: u64,
}

impl CohortSpec {
    pub fn pretrain(n_subjects: usize, grid: usize, seed: u64) -> Self {
        CohortSpec {
            role: CohortRole::Pretrain,
            n_subjects,
            scans_min: 1,
            scans_max: 1,
            ad_fraction: 0.0,
            severity_min: 0.5,
            severity_max: 1.0,
            noise_sigma: 0.02,
            grid,
            seed,
        }
    }

    pub fn eval(n_subjects: usize, grid: usize, seed: u64) -> Self {
        CohortSpec {
            role: CohortRole::Eval,
            ad_fraction: 0.5,
            ..CohortSpec::pretrain(n_subjects, grid, seed)
        }
    }

    fn id_prefix(&self) -> &'static str {
        match self.role {
            CohortRole::Pretrain => "PT",
            CohortRole::Eval => "EV",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 1 {
            return Err(Error::Parameter("cohort needs at least one subject".into()));
        }
        if self.scans_min < 1 || self.scans_max < self.scans_min {
            return Err(Error::Parameter(format!(
                "scans per subject range [{}, {}] is empty",
                self.scans_min, self.scans_max
            )));
        }
        if !(0.0..=1.0).contains(&self.ad_fraction) {
            return Err(Error::Parameter(format!(
                "AD fraction {} outside [0, 1]",
                self.ad_fraction
            )));
        }
        if self.role == CohortRole::Pretrain && self.ad_fraction > 0.0 {
            return Err(Error::Parameter(
                "pretraining cohort must be CN-only".into(),
            ));
        }
        if self.ad_fraction > 0.0 && (self.n_subjects as f64 * self.ad_fraction).round() < 1.0 {
            return Err(Error::Parameter(format!(
                "AD fraction {} of {} subjects yields no AD subject",
                self.ad_fraction, self.n_subjects
            )));
        }
        if !(0.0 < self.severity_min
            && self.severity_min <= self.severity_max
            && self.severity_max <= 1.0)
        {
            return Err(Error::Parameter(format!(
                "severity range [{}, {}] must lie in (0, 1]",
                self.severity_min, self.severity_max
            )));
        }
        if self.grid < 16 {
            return Err(Error::Parameter(format!(
                "phantom grid {} must be >= 16",
                self.grid
            )));
        }
        Ok(())
    }
}

const VISIT_GAP: (usize, usize) = (180, 540);
const CDR_LEVELS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 3.0];

/// Generates one cohort. Volumes are returned in manifest order.
pub fn generate_cohort(spec: &CohortSpec) -> Result<(Vec<Volume>, Vec<ScanRecord>)> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed, 0xc0401);
    let n_ad = (spec.n_subjects as f64 * spec.ad_fraction).round() as usize;
    let mut is_ad = vec![false; spec.n_subjects];
    for &i in rng.permutation(spec.n_subjects).iter().take(n_ad) {
        is_ad[i] = true;
    }
    let max_span = (spec.scans_max - 1) as f64 * VISIT_GAP.1 as f64 / 365.25;
    let mut volumes = Vec::new();
    let mut records = Vec::new();
    for (s, &ad) in is_ad.iter().enumerate() {
        let subject_id = format!("{}{:04}", spec.id_prefix(), s);
        let n_scans = rng.int_inclusive(spec.scans_min, spec.scans_max);
        let baseline = AGE_MIN + rng.uniform() * (AGE_MAX - AGE_MIN - max_span).max(0.0);
        let shape = SubjectShape {
            head_scale: [0; 3].map(|_| 1.0 + 0.06 * (rng.uniform() - 0.5)),
        };
        let (diagnosis, severity) = if ad {
            let sev = spec.severity_min + rng.uniform() * (spec.severity_max - spec.severity_min);
            (Diagnosis::AD, sev)
        } else {
            (Diagnosis::CN, 0.0)
        };
        let mut days = vec![0i64];
        for _ in 1..n_scans {
            let gap = rng.int_inclusive(VISIT_GAP.0, VISIT_GAP.1) as i64;
            days.push(days.last().unwrap() + gap);
        }
        let cdr_history: Vec<(i64, f64)> = if ad {
            let mut level = 1 + rng.index(2);
            days.iter()
                .map(|&d| {
                    let entry = (d + rng.index(31) as i64, CDR_LEVELS[level]);
                    if level < 3 && rng.bernoulli(0.5) {
                        level += 1;
                    }
                    entry
                })
                .collect()
        } else {
            days.iter()
                .map(|&d| (d + rng.index(31) as i64, 0.0))
                .collect()
        };
        for (k, &day) in days.iter().enumerate() {
            let age = (baseline + day as f64 / 365.25).min(AGE_MAX);
            let scan_id = format!("{subject_id}_v{k}");
            let pspec = PhantomSpec {
                grid: spec.grid,
                age,
                diagnosis,
                atrophy_severity: severity,
                noise_sigma: spec.noise_sigma,
                seed: rng.next_u64(),
                shape,
            };
            volumes.push(generate_phantom(&pspec)?.with_meta(scan_id.clone()));
            records.push(ScanRecord {
                subject_id: subject_id.clone(),
                scan_id,
                acquired_day: day,
                age,
                diagnosis,
                cdr_history: cdr_history.clone(),
                parent_scan_id: None,
                cohort: spec.role,
            });
        }
    }
    Ok((volumes, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_age_checked() {
        assert!(generate_phantom(&PhantomSpec::cn(15, 60.0, 0)).is_err());
        assert!(generate_phantom(&PhantomSpec::cn(16, 90.0, 0)).is_err());
        let mut ad = PhantomSpec::cn(16, 60.0, 0);
        ad.diagnosis = Diagnosis::AD;
        assert!(ad.validate().is_err());
    }

    #[test]
    fn noiseless_levels() {
        let v = generate_phantom(&PhantomSpec::cn(32, 60.0, 1)).unwrap();
        let levels: BTreeSet<u32> = v.voxels().iter().map(|x| x.to_bits()).collect();
        let expected: BTreeSet<u32> = [0.0f32, SKULL, CORTEX, WHITE_MATTER, VENTRICLE]
            .iter()
            .map(|x| x.to_bits())
            .collect();
        assert_eq!(levels, expected);
    }

    #[test]
    fn mix_validation() {
        let mut s = CohortSpec::eval(1, 16, 0);
        s.ad_fraction = 0.2;
        assert!(generate_cohort(&s).is_err());
        let mut p = CohortSpec::pretrain(4, 16, 0);
        p.ad_fraction = 0.5;
        assert!(generate_cohort(&p).is_err());
    }
}
