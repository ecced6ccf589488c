use super::{Roi, ScanPlan};
use crate::error::{Error, Result};

/// Positions closer than this to the ROI boundary still count as inside.
const EDGE_TOL: f64 = 1e-9;

/// Lays out spot positions on an equilateral-triangle lattice of side `r_d`
/// inside `roi`. Rows are `sqrt(3)/2 r_d` apart, odd rows are offset by
/// `r_d / 2`, and the lattice is centred in the ROI. Positions are ordered
/// row by row, alternating direction (serpentine).
///
/// When `r_d` is at least as large as both ROI sides a single central
/// position is returned with `degenerate` set.
pub fn plan_triangular_grid(roi: Roi, r_d: f64) -> Result<ScanPlan> {
    if !(r_d > 0.0 && r_d.is_finite()) {
        return Err(Error::Parameter(format!("pitch r_d must be positive, got {r_d}")));
    }
    if !(roi.width >= 0.0 && roi.height >= 0.0) || !(roi.width > 0.0 || roi.height > 0.0) {
        return Err(Error::Parameter(format!(
            "roi must be non-empty, got {} x {}",
            roi.width, roi.height
        )));
    }

    if r_d >= roi.width && r_d >= roi.height {
        log::warn!(
            "pitch {r_d} m exceeds the {} x {} m roi; planning a single spot",
            roi.width,
            roi.height
        );
        return Ok(ScanPlan {
            positions: vec![(roi.x + 0.5 * roi.width, roi.y + 0.5 * roi.height)],
            spot_diameter: 0.0,
            pitch: r_d,
            rows: 1,
            roi,
            degenerate: true,
        });
    }

    let row_step = 0.5 * 3f64.sqrt() * r_d;
    let n_rows = (roi.height / row_step + EDGE_TOL / row_step).floor() as usize + 1;
    let mut rows: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n_rows);
    for k in 0..n_rows {
        let y = k as f64 * row_step;
        let offset = if k % 2 == 1 { 0.5 * r_d } else { 0.0 };
        let n_cols = ((roi.width - offset) / r_d + EDGE_TOL / r_d).floor();
        if n_cols < 0.0 {
            continue;
        }
        rows.push(
            (0..=n_cols as usize)
                .map(|j| (offset + j as f64 * r_d, y))
                .collect(),
        );
    }

    // centre the lattice inside the roi
    let (min_x, max_x) = rows
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let max_y = (n_rows - 1) as f64 * row_step;
    let shift_x = roi.x + 0.5 * (roi.width - (max_x - min_x)) - min_x;
    let shift_y = roi.y + 0.5 * (roi.height - max_y);

    let mut positions = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let shifted = row.iter().map(|&(x, y)| (x + shift_x, y + shift_y));
        if k % 2 == 0 {
            positions.extend(shifted);
        } else {
            positions.extend(shifted.rev());
        }
    }

    Ok(ScanPlan {
        positions,
        spot_diameter: 0.0,
        pitch: r_d,
        rows: rows.len(),
        roi,
        degenerate: false,
    })
}

/// Number of spot measurements needed in 2-D for the same pitch as `n_1d`
/// line measurements: `round(sqrt(3)/2 * n_1d^2)`.
pub fn required_measurements_2d(n_1d: u64) -> u64 {
    (0.5 * 3f64.sqrt() * (n_1d as f64).powi(2)).round() as u64
}
