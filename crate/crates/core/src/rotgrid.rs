//! Quarter-turn rotations of cubic volumes.
//!
//! Plane `p` (1-based) is the plane orthogonal to axis `p - 1`. A clockwise
//! quarter turn, viewed from the positive end of that axis looking toward the
//! origin, sends `(x_i, x_j)` to `(x_j, -x_i)` for the cyclic pair
//! `i = (k + 1) % 3`, `j = (k + 2) % 3`. A spec `(a, b, c)` applies `a` turns
//! in plane 1, then `b` in plane 2, then `c` in plane 3.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RotationSpec(pub [u8; 3]);

impl RotationSpec {
    pub fn new(a: u8, b: u8, c: u8) -> Result<Self> {
        if a > 3 || b > 3 || c > 3 {
            return Err(Error::Parameter(format!(
                "quarter turns ({a},{b},{c}) must each be in 0..=3"
            )));
        }
        Ok(RotationSpec([a, b, c]))
    }

    pub fn identity() -> Self {
        RotationSpec([0, 0, 0])
    }

    /// All 64 specs in lexicographic `(a, b, c)` order.
    pub fn all() -> Vec<RotationSpec> {
        let mut out = Vec::with_capacity(64);
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    out.push(RotationSpec([a, b, c]));
                }
            }
        }
        out
    }

    pub fn to_axis_transform(self) -> AxisTransform {
        let mut t = AxisTransform::identity();
        for (plane, &turns) in self.0.iter().enumerate() {
            let q = AxisTransform::quarter_turn(plane);
            for _ in 0..turns {
                t = q.compose(&t);
            }
        }
        t
    }
}

/// Signed axis permutation: output coordinate `i` reads input axis
/// `perm[i]`, reversed when `flips[i]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AxisTransform {
    pub perm: [usize; 3],
    pub flips: [bool; 3],
}

impl AxisTransform {
    pub fn identity() -> Self {
        AxisTransform {
            perm: [0, 1, 2],
            flips: [false; 3],
        }
    }

    /// One clockwise quarter turn about `axis`.
    pub fn quarter_turn(axis: usize) -> Self {
        let i = (axis + 1) % 3;
        let j = (axis + 2) % 3;
        let mut perm = [0, 1, 2];
        let mut flips = [false; 3];
        perm[i] = j;
        perm[j] = i;
        flips[j] = true;
        AxisTransform { perm, flips }
    }

    pub fn is_valid(&self) -> bool {
        let mut seen = [false; 3];
        for &p in &self.perm {
            if p > 2 || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        true
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &AxisTransform) -> AxisTransform {
        let mut perm = [0; 3];
        let mut flips = [false; 3];
        for i in 0..3 {
            perm[i] = other.perm[self.perm[i]];
            flips[i] = self.flips[i] ^ other.flips[self.perm[i]];
        }
        AxisTransform { perm, flips }
    }

    pub fn inverse(&self) -> AxisTransform {
        let mut perm = [0; 3];
        let mut flips = [false; 3];
        for i in 0..3 {
            perm[self.perm[i]] = i;
            flips[self.perm[i]] = self.flips[i];
        }
        AxisTransform { perm, flips }
    }

    /// Permutation sign times the product of axis signs.
    pub fn determinant(&self) -> i32 {
        let mut inversions = 0;
        for i in 0..3 {
            for j in i + 1..3 {
                if self.perm[i] > self.perm[j] {
                    inversions += 1;
                }
            }
        }
        let perm_sign = if inversions % 2 == 0 { 1 } else { -1 };
        let flip_sign = if self.flips.iter().filter(|&&f| f).count() % 2 == 0 {
            1
        } else {
            -1
        };
        perm_sign * flip_sign
    }

    /// The 24 orientation-preserving transforms, sorted.
    pub fn proper_rotations() -> Vec<AxisTransform> {
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut out = Vec::new();
        for perm in PERMS {
            for bits in 0..8u8 {
                let t = AxisTransform {
                    perm,
                    flips: [bits & 4 != 0, bits & 2 != 0, bits & 1 != 0],
                };
                if t.determinant() == 1 {
                    out.push(t);
                }
            }
        }
        out.sort();
        out
    }

    /// Lossless voxel permutation of a cubic volume.
    pub fn apply(&self, v: &Volume) -> Result<Volume> {
        let n = v.cubic_edge().ok_or_else(|| {
            Error::Shape(format!(
                "rotation needs a cubic volume, got {:?}",
                v.shape()
            ))
        })?;
        let mut out = v.clone();
        let src = v.voxels();
        let dst = out.voxels_mut();
        let mut p = [0usize; 3];
        for (o, d) in dst.iter_mut().enumerate() {
            let q = [o / (n * n), (o / n) % n, o % n];
            // q[i] = s_i * p[perm[i]]  =>  p[perm[i]] = s_i * q[i]
            for i in 0..3 {
                p[self.perm[i]] = if self.flips[i] { n - 1 - q[i] } else { q[i] };
            }
            *d = src[(p[0] * n + p[1]) * n + p[2]];
        }
        Ok(out)
    }
}

pub fn apply(spec: RotationSpec, v: &Volume) -> Result<Volume> {
    spec.to_axis_transform().apply(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    Paper32,
    Unique24,
}

impl std::str::FromStr for LabelScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper32" => Ok(LabelScheme::Paper32),
            "unique24" => Ok(LabelScheme::Unique24),
            other => Err(Error::Config(format!("unknown label scheme '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub spec: [u8; 3],
    pub class: usize,
    pub duplicate_of: Option<[u8; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelTable {
    pub scheme: LabelScheme,
    pub classes: usize,
    pub entries: Vec<LabelEntry>,
}

impl LabelTable {
    pub fn class_of(&self, spec: RotationSpec) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.spec == spec.0)
            .map(|e| e.class)
    }

    /// The first spec labelled with `class`.
    pub fn representative(&self, class: usize) -> Option<RotationSpec> {
        self.entries
            .iter()
            .find(|e| e.class == class)
            .map(|e| RotationSpec(e.spec))
    }

    /// `(spec, earlier spec producing the same image)` pairs.
    pub fn duplicates(&self) -> Vec<(RotationSpec, RotationSpec)> {
        self.entries
            .iter()
            .filter_map(|e| {
                e.duplicate_of
                    .map(|d| (RotationSpec(e.spec), RotationSpec(d)))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries)?)
    }
}

/// Edge-3 probe with all-distinct voxel values.
pub fn default_probe() -> Volume {
    Volume::from_fn([3, 3, 3], |z, y, x| (z * 9 + y * 3 + x) as f32 + 1.0)
}

fn image_key(v: &Volume) -> Vec<u32> {
    v.voxels().iter().map(|x| x.to_bits()).collect()
}

pub fn dedup_classes(scheme: LabelScheme) -> LabelTable {
    dedup_classes_with_probe(scheme, &default_probe()).expect("default probe is cubic")
}

/// Groups specs by the image they produce on `probe`, which must be cubic
/// with distinct values for the grouping to match the rotation group.
pub fn dedup_classes_with_probe(scheme: LabelScheme, probe: &Volume) -> Result<LabelTable> {
    let specs = RotationSpec::all();
    let mut first_seen: HashMap<Vec<u32>, (RotationSpec, usize)> = HashMap::new();
    let mut entries = Vec::new();
    let limit = match scheme {
        LabelScheme::Paper32 => 32,
        LabelScheme::Unique24 => 64,
    };
    let mut next_class = 0;
    for (i, &spec) in specs.iter().enumerate().take(limit) {
        let key = image_key(&apply(spec, probe)?);
        let (class, duplicate_of) = match first_seen.get(&key) {
            Some(&(orig, class)) => match scheme {
                LabelScheme::Unique24 => (class, Some(orig.0)),
                LabelScheme::Paper32 => (i, Some(orig.0)),
            },
            None => {
                let class = match scheme {
                    LabelScheme::Unique24 => next_class,
                    LabelScheme::Paper32 => i,
                };
                next_class += 1;
                first_seen.insert(key, (spec, class));
                (class, None)
            }
        };
        entries.push(LabelEntry {
            spec: spec.0,
            class,
            duplicate_of,
        });
    }
    let classes = match scheme {
        LabelScheme::Unique24 => next_class,
        LabelScheme::Paper32 => limit,
    };
    Ok(LabelTable {
        scheme,
        classes,
        entries,
    })
}
