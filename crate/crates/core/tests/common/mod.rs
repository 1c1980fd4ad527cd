use volpretext::Volume;

/// Direct transcription of tile-wise clipped equalization with trilinear
/// blending between tile centres, one voxel at a time.
pub fn naive_clahe(v: &Volume, tiles: usize, bins: usize, clip_limit: f64) -> Volume {
    let shape = v.shape();
    let bounds = |axis: usize, t: usize| (t * shape[axis] / tiles, (t + 1) * shape[axis] / tiles);
    let centre = |axis: usize, t: usize| {
        let (a, b) = bounds(axis, t);
        (a + b - 1) as f64 / 2.0
    };
    let bin = |x: f32| ((x as f64 * bins as f64).floor() as usize).min(bins - 1);
    let mapping = |tz: usize, ty: usize, tx: usize, x: f32| -> f64 {
        let mut hist = vec![0.0f64; bins];
        let (z0, z1) = bounds(0, tz);
        let (y0, y1) = bounds(1, ty);
        let (x0, x1) = bounds(2, tx);
        for z in z0..z1 {
            for y in y0..y1 {
                for xx in x0..x1 {
                    hist[bin(v.get(z, y, xx))] += 1.0;
                }
            }
        }
        let n: f64 = hist.iter().sum();
        if hist.iter().filter(|&&h| h > 0.0).count() < 2 {
            return x as f64;
        }
        let clip = clip_limit * n / bins as f64;
        let excess: f64 = hist.iter().map(|&h| (h - clip).max(0.0)).sum();
        let clipped: Vec<f64> = hist
            .iter()
            .map(|&h| h.min(clip) + excess / bins as f64)
            .collect();
        (clipped[..=bin(x)].iter().sum::<f64>() / n).min(1.0)
    };
    let weights = |axis: usize, p: usize| -> Vec<(usize, f64)> {
        let p = p as f64;
        let first = centre(axis, 0);
        let last = centre(axis, tiles - 1);
        if p <= first {
            return vec![(0, 1.0)];
        }
        if p >= last {
            return vec![(tiles - 1, 1.0)];
        }
        let mut t = 0;
        while centre(axis, t + 1) <= p {
            t += 1;
        }
        let w = (p - centre(axis, t)) / (centre(axis, t + 1) - centre(axis, t));
        vec![(t, 1.0 - w), (t + 1, w)]
    };
    Volume::from_fn(shape, |z, y, x| {
        let value = v.get(z, y, x);
        let mut acc = 0.0;
        for (tz, wz) in weights(0, z) {
            for (ty, wy) in weights(1, y) {
                for (tx, wx) in weights(2, x) {
                    if wz * wy * wx > 0.0 {
                        acc += wz * wy * wx * mapping(tz, ty, tx, value);
                    }
                }
            }
        }
        acc.clamp(0.0, 1.0) as f32
    })
}
