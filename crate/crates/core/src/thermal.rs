//! Analytic thermal response of a finite plate to a short surface heat pulse.
//!
//! The instantaneous kernel is a lateral Gaussian combined with an
//! image-source series over mirror sources at depth `2nL`, weighted by
//! powers of the thermal-wave reflection coefficient. The point spread
//! function at a given time is that kernel convolved in time with the
//! boxcar excitation. Quadrature runs in `ln(tau)`, which turns the
//! `tau^(-n_dim/2)` prefactor into a smooth integrand.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::quadrature::adaptive_trapezoid_scaled;

/// Lower bound on the time argument of the kernel, guarding the singular
/// prefactor at `tau = 0`.
pub const TIME_FLOOR: f64 = 1e-9;

/// Relative tolerance of the temporal quadrature.
pub const QUADRATURE_TOL: f64 = 1e-8;

pub const DEFAULT_SERIES_TERMS: usize = 20;

/// The image series stops once a term pair falls below this fraction of the running sum.
const SERIES_EARLY_STOP: f64 = 1e-12;

/// A truncation warning is raised when the last included image term exceeds
/// this fraction of the `n = 0` term.
const SERIES_WARN_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateSpec {
    /// m
    pub thickness: f64,
    /// m²/s
    pub diffusivity: f64,
    /// W/(m·K)
    pub conductivity: f64,
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub heat_capacity: f64,
    pub reflection_coeff: f64,
}

impl PlateSpec {
    /// Builds a plate whose diffusivity is inferred as `k / (rho * c_p)`.
    pub fn from_conductivity(
        thickness: f64,
        conductivity: f64,
        density: f64,
        heat_capacity: f64,
        reflection_coeff: f64,
    ) -> Result<Self> {
        let plate = PlateSpec {
            thickness,
            diffusivity: conductivity / (density * heat_capacity),
            conductivity,
            density,
            heat_capacity,
            reflection_coeff,
        };
        plate.validate()?;
        Ok(plate)
    }

    /// Additively manufactured 316L stainless steel, 4.5 mm thick.
    pub fn steel_316l() -> Self {
        PlateSpec {
            thickness: 4.5e-3,
            diffusivity: 3.76e-6,
            conductivity: 15.0,
            density: 7950.0,
            heat_capacity: 502.0,
            reflection_coeff: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("thickness", self.thickness),
            ("diffusivity", self.diffusivity),
            ("density", self.density),
            ("heat_capacity", self.heat_capacity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("plate {name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.reflection_coeff) {
            return Err(Error::Parameter(format!(
                "plate reflection_coeff must lie in [0, 1], got {}",
                self.reflection_coeff
            )));
        }
        if self.conductivity > 0.0 {
            let inferred = self.conductivity / (self.density * self.heat_capacity);
            let rel = (self.diffusivity - inferred).abs() / self.diffusivity;
            if rel >= 1e-3 {
                return Err(Error::Parameter(format!(
                    "plate diffusivity {} inconsistent with k/(rho c_p) = {inferred:.6e} (relative mismatch {rel:.2e})",
                    self.diffusivity
                )));
            }
        }
        Ok(())
    }

    /// Volumetric heat capacity `rho * c_p`.
    pub fn volumetric_heat_capacity(&self) -> f64 {
        self.density * self.heat_capacity
    }

    /// Characteristic through-thickness diffusion time `L² / alpha`.
    pub fn diffusion_time(&self) -> f64 {
        self.thickness * self.thickness / self.diffusivity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationTemporal {
    /// s
    pub pulse_duration: f64,
    /// W
    pub peak_power: f64,
    /// Hz
    pub frame_rate: f64,
}

impl ExcitationTemporal {
    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_duration > 0.0) {
            return Err(Error::Parameter(format!(
                "pulse_duration must be positive, got {}",
                self.pulse_duration
            )));
        }
        if !(self.peak_power > 0.0) {
            return Err(Error::Parameter(format!(
                "peak_power must be positive, got {}",
                self.peak_power
            )));
        }
        Ok(())
    }
}

/// Sampled thermal point spread function.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfField {
    pub grid: Grid2D,
    /// Shape `(n_y, n_x)`.
    pub values: Array2<f64>,
    pub center: (f64, f64),
    pub eval_time: f64,
    pub n_dim: u32,
    pub series_terms: usize,
    /// Set when the image series was cut off while its last term was still
    /// above 1e-9 of the `n = 0` term.
    pub truncation_warning: bool,
}

impl PsfField {
    /// Grid index of the cell holding the excitation centroid.
    pub fn center_index(&self) -> (usize, usize) {
        let iy = (self.center.1 / self.grid.dy).round().clamp(0.0, (self.grid.n_y - 1) as f64);
        let ix = (self.center.0 / self.grid.dx).round().clamp(0.0, (self.grid.n_x - 1) as f64);
        (iy as usize, ix as usize)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Spatial integral over the grid (sum of samples times pixel area).
    pub fn mass(&self) -> f64 {
        self.values.sum() * self.grid.dx * self.grid.dy
    }

    /// Full width at half maximum along the x axis through the centre cell,
    /// in metres, from linear interpolation between samples.
    pub fn fwhm_x(&self) -> f64 {
        let (iy, ix) = self.center_index();
        let row = self.values.row(iy);
        let half = 0.5 * row[ix];
        let walk = |step: isize| -> f64 {
            let mut i = ix as isize;
            loop {
                let next = i + step;
                if next < 0 || next >= row.len() as isize {
                    return (i - ix as isize).unsigned_abs() as f64;
                }
                let (a, b) = (row[i as usize], row[next as usize]);
                if b <= half {
                    let frac = if a > b { (a - half) / (a - b) } else { 0.0 };
                    return (i - ix as isize).unsigned_abs() as f64 + frac;
                }
                i = next;
            }
        };
        (walk(-1) + walk(1)) * self.grid.dx
    }
}

/// Diffusion length `sqrt(alpha * t)`.
pub fn diffusion_length(plate: &PlateSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    Ok((plate.diffusivity * t).sqrt())
}

/// Lateral standard deviation of the kernel, `sqrt(2 alpha t)`.
pub fn psf_sigma(plate: &PlateSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    Ok((2.0 * plate.diffusivity * t).sqrt())
}

/// FWHM diameter of the lateral footprint, `4 sqrt(ln 2 * alpha * t)`.
pub fn fwhm_diameter(plate: &PlateSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    Ok(4.0 * (LN_2 * plate.diffusivity * t).sqrt())
}

/// Magnitude of the `n`-th image-source term relative to unit `n = 0`
/// Gaussian weight: `R^(2|n|+1) exp(-(2nL)² / (4 alpha tau))`.
pub fn image_term(plate: &PlateSpec, n: i64, tau: f64) -> f64 {
    let depth = 2.0 * n as f64 * plate.thickness;
    let power = 2 * n.unsigned_abs() + 1;
    plate.reflection_coeff.powi(power as i32) * (-depth * depth / (4.0 * plate.diffusivity * tau)).exp()
}

/// Image-source sum over `n` in `[-terms, terms]`, stopping early once a
/// symmetric term pair is negligible. Returns the sum and the index of the
/// last included term.
pub fn image_series(plate: &PlateSpec, tau: f64, terms: usize) -> (f64, usize) {
    let mut sum = image_term(plate, 0, tau);
    let mut last = 0;
    for n in 1..=terms as i64 {
        let pair = image_term(plate, n, tau) + image_term(plate, -n, tau);
        sum += pair;
        last = n as usize;
        if pair <= SERIES_EARLY_STOP * sum {
            break;
        }
    }
    (sum, last)
}

fn check_n_dim(n_dim: u32) -> Result<()> {
    if !(1..=3).contains(&n_dim) {
        return Err(Error::Parameter(format!("n_dim must be 1, 2 or 3, got {n_dim}")));
    }
    Ok(())
}

/// Instantaneous kernel (before temporal convolution) at squared lateral
/// distance `r2` and time `tau`:
/// `2 Q / (c_p rho (4 pi alpha tau)^(n_dim/2)) * exp(-r2 / (4 alpha tau)) * series(tau)`.
pub fn instantaneous_kernel(
    plate: &PlateSpec,
    peak_power: f64,
    r2: f64,
    tau: f64,
    n_dim: u32,
    series_terms: usize,
) -> f64 {
    let four_alpha_tau = 4.0 * plate.diffusivity * tau;
    let prefactor = 2.0 * peak_power
        / (plate.volumetric_heat_capacity() * (PI * four_alpha_tau).powf(0.5 * n_dim as f64));
    prefactor * (-r2 / four_alpha_tau).exp() * image_series(plate, tau, series_terms).0
}

/// Kernel convolved in time with the boxcar pulse, at squared distance `r2`.
pub fn pulse_response(
    plate: &PlateSpec,
    excitation: &ExcitationTemporal,
    r2: f64,
    eval_time: f64,
    n_dim: u32,
    series_terms: usize,
) -> f64 {
    let hi = eval_time;
    let lo = (eval_time - excitation.pulse_duration).max(TIME_FLOOR);
    if lo >= hi {
        return 0.0;
    }
    let integrand = |r2: f64, s: f64| {
        let tau = s.exp();
        tau * instantaneous_kernel(plate, excitation.peak_power, r2, tau, n_dim, series_terms)
    };
    let (a, b) = (lo.ln(), hi.ln());
    // far from the axis only accuracy relative to the on-axis response matters
    let scale = (b - a) * integrand(0.0, a).max(integrand(0.0, b));
    adaptive_trapezoid_scaled(|s| integrand(r2, s), a, b, QUADRATURE_TOL, scale)
}

/// Offset of pixel `i` from `c` (both in pixel units), snapping `c` to the
/// nearest node when it lies within 1e-9 px of one so mirrored pixels get
/// bit-identical offsets.
fn pixel_offset(i: usize, c: f64) -> f64 {
    let snapped = c.round();
    let c = if (c - snapped).abs() < 1e-9 { snapped } else { c };
    i as f64 - c
}

/// Samples the pulse PSF on `grid` around `center` (metres).
pub fn synth_psf(
    plate: &PlateSpec,
    excitation: &ExcitationTemporal,
    grid: &Grid2D,
    center: (f64, f64),
    eval_time: f64,
    n_dim: u32,
    series_terms: usize,
) -> Result<PsfField> {
    plate.validate()?;
    excitation.validate()?;
    grid.validate()?;
    check_n_dim(n_dim)?;
    if !(eval_time > TIME_FLOOR) || !eval_time.is_finite() {
        return Err(Error::Domain(format!(
            "eval_time must be positive (and above {TIME_FLOOR} s), got {eval_time}"
        )));
    }

    let (cx, cy) = (center.0 / grid.dx, center.1 / grid.dy);
    let r2: Vec<f64> = (0..grid.n_y)
        .flat_map(|iy| {
            let oy = pixel_offset(iy, cy) * grid.dy;
            (0..grid.n_x).map(move |ix| {
                let ox = pixel_offset(ix, cx) * grid.dx;
                ox * ox + oy * oy
            })
        })
        .collect();
    // mirrored pixels share bit-identical distances; integrate each distance once
    let mut unique: Vec<f64> = r2.clone();
    unique.sort_by(f64::total_cmp);
    unique.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let responses: Vec<f64> = unique
        .par_iter()
        .map(|&d| pulse_response(plate, excitation, d, eval_time, n_dim, series_terms))
        .collect();
    let lookup: HashMap<u64, f64> = unique.iter().map(|d| d.to_bits()).zip(responses).collect();
    let values = Array2::from_shape_vec(grid.shape(), r2.iter().map(|d| lookup[&d.to_bits()]).collect())
        .expect("one value per pixel");

    let (_, last) = image_series(plate, eval_time, series_terms);
    let truncation_warning = last >= 1
        && image_term(plate, last as i64, eval_time) > SERIES_WARN_RATIO * image_term(plate, 0, eval_time);
    if truncation_warning {
        log::warn!("image series truncated at {last} terms with a non-negligible last term");
    }

    Ok(PsfField {
        grid: *grid,
        values,
        center,
        eval_time,
        n_dim,
        series_terms,
        truncation_warning,
    })
}

/// PSF centred on the grid's kernel centre node, as used by the reconstructions.
pub fn synth_centered_psf(
    plate: &PlateSpec,
    excitation: &ExcitationTemporal,
    grid: &Grid2D,
    eval_time: f64,
) -> Result<PsfField> {
    synth_psf(plate, excitation, grid, grid.center(), eval_time, 2, DEFAULT_SERIES_TERMS)
}
