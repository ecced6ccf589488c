use std::f64::consts::LN_2;

use ndarray::Array2;

use super::ScanPlan;
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::thermal::PsfField;

/// Interior coefficient of variation below which the summed excitation
/// counts as homogeneous.
pub const HOMOGENEITY_CV_LIMIT: f64 = 0.05;

/// Lateral footprint of one excitation used to judge homogeneity.
#[derive(Debug, Clone, Copy)]
pub enum Footprint<'a> {
    /// Sampled PSF, re-centred on every spot by bilinear interpolation.
    Psf(&'a PsfField),
    /// Top-hat spot of `diameter` widened by a Gaussian of full width at
    /// half maximum `fwhm`.
    TopHat { diameter: f64, fwhm: f64 },
}

impl Footprint<'_> {
    fn fwhm(&self) -> f64 {
        match self {
            Footprint::Psf(psf) => psf.fwhm_x(),
            Footprint::TopHat { fwhm, .. } => *fwhm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityReport {
    pub coefficient_of_variation: f64,
    pub interior_mask: Array2<bool>,
    /// Summed footprint of all excitations on the grid.
    pub coverage: Array2<f64>,
}

impl HomogeneityReport {
    pub fn is_uniform(&self) -> bool {
        self.coefficient_of_variation < HOMOGENEITY_CV_LIMIT
    }
}

fn bilinear(values: &Array2<f64>, fy: f64, fx: f64) -> f64 {
    let (ny, nx) = values.dim();
    if fy < 0.0 || fx < 0.0 || fy > (ny - 1) as f64 || fx > (nx - 1) as f64 {
        return 0.0;
    }
    let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(ny - 1), (x0 + 1).min(nx - 1));
    let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
    (1.0 - ty) * ((1.0 - tx) * values[[y0, x0]] + tx * values[[y0, x1]])
        + ty * ((1.0 - tx) * values[[y1, x0]] + tx * values[[y1, x1]])
}

/// Points (relative to the spot centre) sampling a uniform disc.
fn disc_samples(diameter: f64) -> Vec<(f64, f64)> {
    if !(diameter > 0.0) {
        return vec![(0.0, 0.0)];
    }
    let r = 0.5 * diameter;
    let n = 16;
    let step = 2.0 * r / n as f64;
    let mut pts = Vec::new();
    for iy in 0..n {
        for ix in 0..n {
            let x = -r + (ix as f64 + 0.5) * step;
            let y = -r + (iy as f64 + 0.5) * step;
            if x.hypot(y) <= r {
                pts.push((x, y));
            }
        }
    }
    pts
}

/// Rasterises the summed excitation footprint of `plan` on `grid` and
/// reports its coefficient of variation over the ROI interior, i.e. the
/// ROI eroded by the footprint FWHM on every side.
pub fn homogeneity_check(
    plan: &ScanPlan,
    footprint: Footprint<'_>,
    grid: &Grid2D,
) -> Result<HomogeneityReport> {
    if plan.is_empty() {
        return Err(Error::Parameter("homogeneity check needs at least one position".into()));
    }
    grid.validate()?;
    let fwhm = footprint.fwhm();
    let mut coverage = grid.zeros();

    match footprint {
        Footprint::Psf(psf) => {
            let (cx, cy) = (psf.center.0 / psf.grid.dx, psf.center.1 / psf.grid.dy);
            for &(sx, sy) in &plan.positions {
                for ((iy, ix), c) in coverage.indexed_iter_mut() {
                    let (px, py) = grid.position(iy, ix);
                    *c += bilinear(&psf.values, (py - sy) / psf.grid.dy + cy, (px - sx) / psf.grid.dx + cx);
                }
            }
        }
        Footprint::TopHat { diameter, fwhm } => {
            let sigma = fwhm / (2.0 * (2.0 * LN_2).sqrt());
            let inv = 1.0 / (2.0 * sigma * sigma);
            let samples = disc_samples(diameter);
            let weight = 1.0 / samples.len() as f64;
            for &(sx, sy) in &plan.positions {
                for ((iy, ix), c) in coverage.indexed_iter_mut() {
                    let (px, py) = grid.position(iy, ix);
                    let (dx, dy) = (px - sx, py - sy);
                    *c += weight
                        * samples
                            .iter()
                            .map(|&(ox, oy)| (-((dx - ox).powi(2) + (dy - oy).powi(2)) * inv).exp())
                            .sum::<f64>();
                }
            }
        }
    }

    let roi = plan.roi;
    let eps = 1e-9 * grid.dx.min(grid.dy);
    let interior_mask = Array2::from_shape_fn(grid.shape(), |(iy, ix)| {
        let (px, py) = grid.position(iy, ix);
        px >= roi.x + fwhm - eps
            && px <= roi.x + roi.width - fwhm + eps
            && py >= roi.y + fwhm - eps
            && py <= roi.y + roi.height - fwhm + eps
    });

    let values: Vec<f64> = coverage
        .iter()
        .zip(interior_mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    if values.is_empty() {
        return Err(Error::RoiTooSmall(format!(
            "no pixel of the {} x {} m roi lies {fwhm:.3e} m from its boundary",
            roi.width, roi.height
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let coefficient_of_variation = if mean > 0.0 { var.sqrt() / mean } else { f64::INFINITY };

    Ok(HomogeneityReport {
        coefficient_of_variation,
        interior_mask,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{plan_triangular_grid, Rect};
    use super::*;
    use crate::thermal::{synth_psf, ExcitationTemporal, PlateSpec};

    #[test]
    fn dense_lattice_is_uniform() {
        let grid = Grid2D::square(120, 120, 0.1).unwrap();
        let fwhm = 2.0;
        let roi = Rect::new(0.5, 0.5, 11.0, 11.0);
        let plan = plan_triangular_grid(roi, fwhm / 4.0).unwrap();
        let rep = homogeneity_check(&plan, Footprint::TopHat { diameter: 0.3, fwhm }, &grid).unwrap();
        assert!(rep.coefficient_of_variation < 0.05, "{}", rep.coefficient_of_variation);
        assert!(rep.is_uniform());
    }

    #[test]
    fn single_spot_is_not_uniform() {
        let grid = Grid2D::square(120, 120, 0.1).unwrap();
        let roi = Rect::new(0.5, 0.5, 11.0, 11.0);
        let plan = plan_triangular_grid(roi, 20.0).unwrap();
        assert_eq!(plan.len(), 1);
        let rep = homogeneity_check(&plan, Footprint::TopHat { diameter: 0.3, fwhm: 2.0 }, &grid).unwrap();
        assert!(rep.coefficient_of_variation > 1.0, "{}", rep.coefficient_of_variation);
        assert!(!rep.is_uniform());
    }

    #[test]
    fn shift_invariance() {
        let grid = Grid2D::square(100, 80, 0.1).unwrap();
        let plan = plan_triangular_grid(Rect::new(1.0, 1.0, 7.0, 5.0), 0.9).unwrap();
        let fp = Footprint::TopHat { diameter: 0.4, fwhm: 1.5 };
        let a = homogeneity_check(&plan, fp, &grid).unwrap();
        let b = homogeneity_check(&plan.translated(grid.dx, 0.0), fp, &grid).unwrap();
        assert!((a.coefficient_of_variation - b.coefficient_of_variation).abs() < 1e-12);
        assert_eq!(
            a.interior_mask.iter().filter(|m| **m).count(),
            b.interior_mask.iter().filter(|m| **m).count()
        );
    }

    #[test]
    fn roi_too_small() {
        let grid = Grid2D::square(40, 40, 0.1).unwrap();
        let plan = plan_triangular_grid(Rect::new(1.0, 1.0, 1.0, 1.0), 0.3).unwrap();
        let err = homogeneity_check(&plan, Footprint::TopHat { diameter: 0.0, fwhm: 2.0 }, &grid).unwrap_err();
        assert!(matches!(err, Error::RoiTooSmall(_)));
    }

    #[test]
    fn psf_footprint() {
        let plate = PlateSpec::steel_316l();
        let exc = ExcitationTemporal { pulse_duration: 0.05, peak_power: 15.0, frame_rate: 100.0 };
        let grid = Grid2D::square(100, 100, 0.2e-3).unwrap();
        let psf_grid = Grid2D::square(61, 61, 0.2e-3).unwrap();
        let psf = synth_psf(&plate, &exc, &psf_grid, psf_grid.center(), 0.3, 2, 20).unwrap();
        let fwhm = psf.fwhm_x();
        let plan = plan_triangular_grid(Rect::new(1e-3, 1e-3, 17.8e-3, 17.8e-3), fwhm / 2.0).unwrap();
        let rep = homogeneity_check(&plan, Footprint::Psf(&psf), &grid).unwrap();
        assert!(rep.is_uniform(), "{}", rep.coefficient_of_variation);
    }
}
