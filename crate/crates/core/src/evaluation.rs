//! Scoring reconstructions against the ground-truth defect map.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::DefectMap;

/// Valley depth (relative to the lower peak) below which two defects count as separated.
pub const DEFAULT_VALLEY_THRESHOLD: f64 = 0.5;
/// Fraction of the map maximum at which pixels count as activated.
pub const DEFAULT_ACTIVATION_FRAC: f64 = 0.5;

/// Profile samples per pixel along the line joining two centroids.
const PROFILE_OVERSAMPLING: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub first: usize,
    pub second: usize,
    /// Edge-to-edge distance of the truth rectangles, metres.
    pub gap: f64,
    pub separated: bool,
    /// `(valley - baseline) / (lower peak - baseline)`, clamped at 0.
    pub valley_ratio: f64,
    pub peaks: (f64, f64),
    pub valley: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub pairs: Vec<PairReport>,
    pub support_iou: f64,
    /// Per truth defect, distance to the nearest activated component (m).
    pub localization_error: Vec<Option<f64>>,
    /// Median of off-defect pixels.
    pub baseline: f64,
    /// `baseline + 3 MAD`.
    pub noise_floor: f64,
}

impl SeparabilityReport {
    /// Report of the pair made of defects `a` and `b`, in either order.
    pub fn pair(&self, a: usize, b: usize) -> Option<&PairReport> {
        self.pairs
            .iter()
            .find(|p| (p.first, p.second) == (a, b) || (p.first, p.second) == (b, a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub support_iou: f64,
    pub localization_error: Vec<Option<f64>>,
}

fn check_map(map: &Array2<f64>, truth: &DefectMap) -> Result<()> {
    if map.dim() != truth.grid.shape() {
        return Err(Error::shape(format!("map of shape {:?}", truth.grid.shape()), format!("{:?}", map.dim())));
    }
    if map.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("map contains non-finite values".into()));
    }
    Ok(())
}

/// 8-neighbour dilation by one pixel.
pub fn dilate(mask: &Array2<bool>) -> Array2<bool> {
    let (ny, nx) = mask.dim();
    Array2::from_shape_fn((ny, nx), |(iy, ix)| {
        let (y0, y1) = (iy.saturating_sub(1), (iy + 1).min(ny - 1));
        let (x0, x1) = (ix.saturating_sub(1), (ix + 1).min(nx - 1));
        (y0..=y1).any(|y| (x0..=x1).any(|x| mask[[y, x]]))
    })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median and median absolute deviation of pixels outside the dilated truth.
fn background(map: &Array2<f64>, truth: &DefectMap) -> (f64, f64) {
    let near = dilate(&truth.truth_mask());
    let mut off: Vec<f64> = map.iter().zip(near.iter()).filter(|(_, n)| !**n).map(|(v, _)| *v).collect();
    let med = median(&mut off);
    let mut dev: Vec<f64> = off.iter().map(|v| (v - med).abs()).collect();
    (med, median(&mut dev))
}

fn bilinear(map: &Array2<f64>, fy: f64, fx: f64) -> f64 {
    let (ny, nx) = map.dim();
    let fy = fy.clamp(0.0, (ny - 1) as f64);
    let fx = fx.clamp(0.0, (nx - 1) as f64);
    let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(ny - 1), (x0 + 1).min(nx - 1));
    let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
    (1.0 - ty) * ((1.0 - tx) * map[[y0, x0]] + tx * map[[y0, x1]])
        + ty * ((1.0 - tx) * map[[y1, x0]] + tx * map[[y1, x1]])
}

/// Scores every pair of truth defects by the profile along the line
/// joining their centroids. The profile is split at its midpoint; each half
/// contributes one peak, and the valley is the profile minimum between the
/// two peak positions. A pair is separated when both peaks clear the noise
/// floor and the valley ratio is below `valley_threshold`.
pub fn separability(map: &Array2<f64>, truth: &DefectMap, valley_threshold: f64) -> Result<SeparabilityReport> {
    check_map(map, truth)?;
    if !(valley_threshold > 0.0 && valley_threshold < 1.0) {
        return Err(Error::Parameter(format!("valley_threshold must lie in (0, 1), got {valley_threshold}")));
    }
    let (baseline, mad) = background(map, truth);
    let noise_floor = baseline + 3.0 * mad;
    let grid = truth.grid;
    let n_def = truth.defect_rects.len();

    let mut pairs = Vec::new();
    for i in 0..n_def {
        for j in i + 1..n_def {
            let (xa, ya) = truth.rect_centroid(i);
            let (xb, yb) = truth.rect_centroid(j);
            let (pa, pb) = ((ya / grid.dy, xa / grid.dx), (yb / grid.dy, xb / grid.dx));
            let len_px = (pb.0 - pa.0).hypot(pb.1 - pa.1);
            let n = ((len_px * PROFILE_OVERSAMPLING).ceil() as usize).max(2);
            let profile: Vec<f64> = (0..=n)
                .map(|k| {
                    let s = k as f64 / n as f64;
                    bilinear(map, pa.0 + s * (pb.0 - pa.0), pa.1 + s * (pb.1 - pa.1))
                })
                .collect();
            let mid = n / 2;
            let argmax = |r: std::ops::RangeInclusive<usize>| {
                r.map(|k| (k, profile[k])).fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b })
            };
            let (ka, peak_a) = argmax(0..=mid);
            let (kb, peak_b) = argmax(mid..=n);
            let valley = profile[ka..=kb].iter().copied().fold(f64::INFINITY, f64::min);
            let lower = peak_a.min(peak_b);
            let valley_ratio = if lower > baseline {
                ((valley - baseline) / (lower - baseline)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let separated = peak_a > noise_floor && peak_b > noise_floor && valley_ratio < valley_threshold;
            pairs.push(PairReport {
                first: i,
                second: j,
                gap: truth.defect_rects[i].gap(&truth.defect_rects[j]),
                separated,
                valley_ratio,
                peaks: (peak_a, peak_b),
                valley,
            });
        }
    }
    let support = support_metrics(map, truth, DEFAULT_ACTIVATION_FRAC)?;
    Ok(SeparabilityReport {
        pairs,
        support_iou: support.support_iou,
        localization_error: support.localization_error,
        baseline,
        noise_floor,
    })
}

/// 8-connected components of `mask`, as lists of `(iy, ix)`.
fn components(mask: &Array2<bool>) -> Vec<Vec<(usize, usize)>> {
    let (ny, nx) = mask.dim();
    let mut seen = Array2::from_elem((ny, nx), false);
    let mut out = Vec::new();
    for ((iy, ix), &m) in mask.indexed_iter() {
        if !m || seen[[iy, ix]] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![(iy, ix)];
        seen[[iy, ix]] = true;
        while let Some((y, x)) = stack.pop() {
            comp.push((y, x));
            for yy in y.saturating_sub(1)..=(y + 1).min(ny - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(nx - 1) {
                    if mask[[yy, xx]] && !seen[[yy, xx]] {
                        seen[[yy, xx]] = true;
                        stack.push((yy, xx));
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Binarises `map` at `activation_threshold_frac * max(map)` and compares it
/// with the truth pixels dilated by one pixel.
pub fn support_metrics(map: &Array2<f64>, truth: &DefectMap, activation_threshold_frac: f64) -> Result<SupportMetrics> {
    check_map(map, truth)?;
    if !(activation_threshold_frac > 0.0 && activation_threshold_frac < 1.0) {
        return Err(Error::Parameter(format!(
            "activation_threshold_frac must lie in (0, 1), got {activation_threshold_frac}"
        )));
    }
    let n_def = truth.defect_rects.len();
    let max = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Ok(SupportMetrics { support_iou: 0.0, localization_error: vec![None; n_def] });
    }
    let thr = activation_threshold_frac * max;
    let active = map.mapv(|v| v >= thr);
    let reference = dilate(&truth.truth_mask());
    let inter = active.iter().zip(reference.iter()).filter(|(a, r)| **a && **r).count();
    let union = active.iter().zip(reference.iter()).filter(|(a, r)| **a || **r).count();
    let support_iou = if union == 0 { 0.0 } else { inter as f64 / union as f64 };

    let grid = truth.grid;
    let centroids: Vec<(f64, f64)> = components(&active)
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let (sy, sx) = c.iter().fold((0.0, 0.0), |acc, &(y, x)| (acc.0 + y as f64, acc.1 + x as f64));
            (sx / n * grid.dx, sy / n * grid.dy)
        })
        .collect();
    let localization_error = (0..n_def)
        .map(|i| {
            let (tx, ty) = truth.rect_centroid(i);
            centroids.iter().map(|(x, y)| (x - tx).hypot(y - ty)).min_by(f64::total_cmp)
        })
        .collect();
    Ok(SupportMetrics { support_iou, localization_error })
}
