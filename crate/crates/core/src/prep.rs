//! Resize, min-max normalization and volumetric CLAHE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaheParams {
    pub tiles_per_axis: usize,
    pub bins: usize,
    /// Multiple of the uniform bin height `tile_voxels / bins`.
    pub clip_limit: f64,
}

impl ClaheParams {
    pub fn paper() -> Self {
        ClaheParams {
            tiles_per_axis: 8,
            bins: 256,
            clip_limit: 2.0,
        }
    }

    pub fn desk() -> Self {
        ClaheParams {
            tiles_per_axis: 2,
            bins: 64,
            clip_limit: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiles_per_axis < 1 {
            return Err(Error::Parameter("clahe tiles_per_axis must be >= 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::Parameter("clahe bins must be >= 2".into()));
        }
        if !(self.clip_limit > 0.0) {
            return Err(Error::Parameter(format!(
                "clahe clip_limit {} must be > 0",
                self.clip_limit
            )));
        }
        Ok(())
    }
}

/// Source coordinate and blend weight for output index `i` under
/// corner-aligned sampling.
fn sample_axis(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    if src == 1 || dst == 1 {
        return (0, 0, 0.0);
    }
    let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
    let lo = (pos.floor() as usize).min(src - 1);
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

/// Trilinear resampling with corner-aligned sampling: output corners land
/// exactly on input corners.
pub fn resize_trilinear(v: &Volume, target: [usize; 3]) -> Result<Volume> {
    if target.contains(&0) {
        return Err(Error::Parameter(format!(
            "resize target {target:?} has a zero extent"
        )));
    }
    if v.shape().contains(&0) {
        return Err(Error::Parameter(format!(
            "resize source {:?} has a zero extent",
            v.shape()
        )));
    }
    let src = v.shape();
    if src == target {
        return Ok(v.clone());
    }
    let zs: Vec<_> = (0..target[0])
        .map(|i| sample_axis(i, src[0], target[0]))
        .collect();
    let ys: Vec<_> = (0..target[1])
        .map(|i| sample_axis(i, src[1], target[1]))
        .collect();
    let xs: Vec<_> = (0..target[2])
        .map(|i| sample_axis(i, src[2], target[2]))
        .collect();
    let at = |z: usize, y: usize, x: usize| v.get(z, y, x) as f64;
    let mut out = Volume::from_fn(target, |z, y, x| {
        let (z0, z1, wz) = zs[z];
        let (y0, y1, wy) = ys[y];
        let (x0, x1, wx) = xs[x];
        let lerp = |a: f64, b: f64, w: f64| if w == 0.0 { a } else { a + (b - a) * w };
        let c00 = lerp(at(z0, y0, x0), at(z0, y0, x1), wx);
        let c01 = lerp(at(z0, y1, x0), at(z0, y1, x1), wx);
        let c10 = lerp(at(z1, y0, x0), at(z1, y0, x1), wx);
        let c11 = lerp(at(z1, y1, x0), at(z1, y1, x1), wx);
        lerp(lerp(c00, c01, wy), lerp(c10, c11, wy), wz) as f32
    });
    out.meta = v.meta.clone();
    Ok(out)
}

/// `(I - min) / (max - min)`; a constant volume maps to zeros.
pub fn minmax_normalize(v: &Volume) -> Volume {
    let (lo, hi) = v.min_max();
    let mut out = v.clone();
    if v.is_empty() || hi <= lo {
        out.voxels_mut().fill(0.0);
        return out;
    }
    let (lo, span) = (lo as f64, hi as f64 - lo as f64);
    for o in out.voxels_mut() {
        *o = ((*o as f64 - lo) / span) as f32;
    }
    out
}

/// Tile boundaries along one axis: `tiles + 1` cut points.
fn tile_cuts(extent: usize, tiles: usize) -> Vec<usize> {
    (0..=tiles).map(|t| t * extent / tiles).collect()
}

fn bin_of(value: f32, bins: usize) -> usize {
    ((value as f64 * bins as f64) as usize).min(bins - 1)
}

/// Per-tile lookup: `None` when the tile's histogram occupies one bin, in
/// which case the tile maps every value to itself.
fn tile_mapping(hist: &[u64], voxels: u64, clip_limit: f64) -> Option<Vec<f64>> {
    if hist.iter().filter(|&&h| h > 0).count() <= 1 {
        return None;
    }
    let bins = hist.len();
    let clip = clip_limit * voxels as f64 / bins as f64;
    let mut excess = 0.0;
    let mut clipped: Vec<f64> = hist
        .iter()
        .map(|&h| {
            let h = h as f64;
            if h > clip {
                excess += h - clip;
                clip
            } else {
                h
            }
        })
        .collect();
    let share = excess / bins as f64;
    for c in &mut clipped {
        *c += share;
    }
    let total = voxels as f64;
    let mut acc = 0.0;
    Some(
        clipped
            .iter()
            .map(|&c| {
                acc += c;
                (acc / total).min(1.0)
            })
            .collect(),
    )
}

/// Tile index pair and weight of the upper one for coordinate `i`, given
/// tile centres.
fn blend_axis(i: usize, centres: &[f64]) -> (usize, usize, f64) {
    let p = i as f64;
    let last = centres.len() - 1;
    if p <= centres[0] {
        return (0, 0, 0.0);
    }
    if p >= centres[last] {
        return (last, last, 0.0);
    }
    let t = centres.iter().rposition(|&c| c <= p).unwrap();
    (t, t + 1, (p - centres[t]) / (centres[t + 1] - centres[t]))
}

/// Volumetric contrast-limited adaptive histogram equalization.
pub fn clahe3d(v: &Volume, p: &ClaheParams) -> Result<Volume> {
    p.validate()?;
    if let Some(bad) = v.voxels().iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Range(format!(
            "clahe3d input value {bad} outside [0, 1]"
        )));
    }
    let shape = v.shape();
    let t = p.tiles_per_axis;
    if let Some(a) = (0..3).find(|&a| shape[a] < t) {
        return Err(Error::Parameter(format!(
            "clahe3d: axis {a} extent {} smaller than {t} tiles",
            shape[a]
        )));
    }
    let cuts: Vec<Vec<usize>> = (0..3).map(|a| tile_cuts(shape[a], t)).collect();
    let centres: Vec<Vec<f64>> = cuts
        .iter()
        .map(|c| {
            c.windows(2)
                .map(|w| (w[0] + w[1] - 1) as f64 / 2.0)
                .collect()
        })
        .collect();

    let tile_ids: Vec<[usize; 3]> = (0..t * t * t)
        .map(|i| [i / (t * t), (i / t) % t, i % t])
        .collect();
    let maps: Vec<Option<Vec<f64>>> = volcore::par::map_indices(tile_ids.len(), |i| {
        let [tz, ty, tx] = tile_ids[i];
        let mut hist = vec![0u64; p.bins];
        let mut count = 0u64;
        for z in cuts[0][tz]..cuts[0][tz + 1] {
            for y in cuts[1][ty]..cuts[1][ty + 1] {
                for x in cuts[2][tx]..cuts[2][tx + 1] {
                    hist[bin_of(v.get(z, y, x), p.bins)] += 1;
                    count += 1;
                }
            }
        }
        tile_mapping(&hist, count, p.clip_limit)
    });

    let map_value = |tile: usize, value: f32| -> f64 {
        match &maps[tile] {
            Some(m) => m[bin_of(value, p.bins)],
            None => value as f64,
        }
    };
    let zb: Vec<_> = (0..shape[0]).map(|i| blend_axis(i, &centres[0])).collect();
    let yb: Vec<_> = (0..shape[1]).map(|i| blend_axis(i, &centres[1])).collect();
    let xb: Vec<_> = (0..shape[2]).map(|i| blend_axis(i, &centres[2])).collect();
    let mut out = Volume::from_fn(shape, |z, y, x| {
        let value = v.get(z, y, x);
        let (z0, z1, wz) = zb[z];
        let (y0, y1, wy) = yb[y];
        let (x0, x1, wx) = xb[x];
        let mut acc = 0.0;
        for (tz, fz) in [(z0, 1.0 - wz), (z1, wz)] {
            if fz == 0.0 {
                continue;
            }
            for (ty, fy) in [(y0, 1.0 - wy), (y1, wy)] {
                if fy == 0.0 {
                    continue;
                }
                for (tx, fx) in [(x0, 1.0 - wx), (x1, wx)] {
                    if fx == 0.0 {
                        continue;
                    }
                    acc += fz * fy * fx * map_value((tz * t + ty) * t + tx, value);
                }
            }
        }
        acc.clamp(0.0, 1.0) as f32
    });
    out.meta = v.meta.clone();
    Ok(out)
}

/// Resize, then min-max normalize, then CLAHE.
pub fn preprocess_pipeline(v: &Volume, target: [usize; 3], clahe: &ClaheParams) -> Result<Volume> {
    let resized = resize_trilinear(v, target)?;
    clahe3d(&minmax_normalize(&resized), clahe)
}

/// Shannon entropy (bits) of the histogram of a `[0, 1]` volume.
pub fn histogram_entropy(v: &Volume, bins: usize) -> f64 {
    let bins = bins.max(1);
    let mut hist = vec![0u64; bins];
    for &x in v.voxels() {
        hist[bin_of(x.clamp(0.0, 1.0), bins)] += 1;
    }
    let n = v.len() as f64;
    hist.iter()
        .filter(|&&h| h > 0)
        .map(|&h| {
            let q = h as f64 / n;
            -q * q.log2()
        })
        .sum()
}
