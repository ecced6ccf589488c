//! Method dispatch and the result type shared by both reconstructions.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::phantom::MeasurementSet;
use crate::sms::SmsProblem;
use crate::solver::{
    admm_drive, select_rho_lcurve, short_solve_iterations, AdmmOutcome, AdmmProblem, LCurveSelection,
    ReconConfig, RhoMode, SolveDiagnostics,
};
use crate::spectral::FftProblem;
use crate::thermal::PsfField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Sparse matrix stacking in the spatial domain.
    Sms,
    /// Per-bin solve in the spatial-frequency domain.
    Fft,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sms => "sms",
            Method::Fft => "fft",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sms" => Ok(Method::Sms),
            "fft" => Ok(Method::Fft),
            _ => Err(Error::Parameter(format!("unknown method `{s}` (expected sms or fft)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    pub method: Method,
    pub grid: Grid2D,
    /// Sum of the per-measurement maps.
    pub a_rec: Array2<f64>,
    pub per_measurement: Vec<Array2<f64>>,
    pub diagnostics: SolveDiagnostics,
    /// Configuration actually used; `rho` holds the L-curve choice when one was made.
    pub config: ReconConfig,
    pub lcurve: Option<LCurveSelection>,
}

pub(crate) trait ReconProblem: AdmmProblem {
    fn maps(&self, z: &[Self::Scalar]) -> Vec<Array2<f64>>;
    /// `||H A - T||_2`.
    fn residual(&self, z: &[Self::Scalar]) -> f64;
    fn annotate(&self, _diag: &mut SolveDiagnostics) {}
}

impl ReconProblem for SmsProblem {
    fn maps(&self, z: &[f64]) -> Vec<Array2<f64>> {
        self.spatial_maps(z)
    }
    fn residual(&self, z: &[f64]) -> f64 {
        self.residual_norm(z)
    }
}

impl ReconProblem for FftProblem {
    fn maps(&self, z: &[num_complex::Complex64]) -> Vec<Array2<f64>> {
        self.spatial_maps(z)
    }
    fn residual(&self, z: &[num_complex::Complex64]) -> f64 {
        self.residual_norm(z)
    }
    fn annotate(&self, diag: &mut SolveDiagnostics) {
        diag.max_imaginary_residue = Some(self.max_imaginary_residue());
    }
}

fn solve<P: ReconProblem>(
    problem: &mut P,
    method: Method,
    grid: Grid2D,
    config: &ReconConfig,
) -> Result<ReconResult> {
    let mut used = config.clone();
    let mut lcurve = None;
    if let RhoMode::LCurve { candidates } = &config.rho_mode {
        let short = short_solve_iterations(config.n_iter);
        let selection = select_rho_lcurve(
            |rho| {
                let cfg = ReconConfig { rho, n_iter: short, early_stop: false, ..config.clone() };
                let out = admm_drive(problem, &cfg, config.init_seed)?;
                let norm = problem
                    .maps(&out.z)
                    .iter()
                    .flat_map(|m| m.iter())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                Ok((problem.residual(&out.z), norm))
            },
            candidates,
        )?;
        log::info!("l-curve chose rho = {}", selection.rho);
        used.rho = selection.rho;
        lcurve = Some(selection);
    }

    let AdmmOutcome { z, mut diagnostics, .. } = admm_drive(problem, &used, config.init_seed)?;
    problem.annotate(&mut diagnostics);
    let per_measurement = problem.maps(&z);
    let mut a_rec = grid.zeros();
    for m in &per_measurement {
        a_rec += m;
    }
    Ok(ReconResult {
        method,
        grid,
        a_rec,
        per_measurement,
        diagnostics,
        config: used,
        lcurve,
    })
}

/// Reconstructs from raw frames (one per measurement) sampled on the PSF grid.
pub fn reconstruct_frames(
    frames: &[Array2<f64>],
    psf: &PsfField,
    config: &ReconConfig,
    method: Method,
) -> Result<ReconResult> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::Parameter("no measurements to reconstruct".into()));
    }
    match method {
        Method::Sms => {
            let mut p = SmsProblem::new(frames, psf, config)?;
            let grid = p.grid();
            solve(&mut p, method, grid, config)
        }
        Method::Fft => {
            let mut p = FftProblem::new(frames, psf, config)?;
            let grid = p.grid();
            solve(&mut p, method, grid, config)
        }
    }
}

/// Reconstructs the `config.eval_time` slice of `data` with `method`.
pub fn reconstruct(
    data: &MeasurementSet,
    psf: &PsfField,
    config: &ReconConfig,
    method: Method,
) -> Result<ReconResult> {
    if psf.grid != data.grid {
        return Err(Error::shape(format!("psf on the data grid {:?}", data.grid), format!("{:?}", psf.grid)));
    }
    let frames = data.slice_at(config.eval_time)?;
    reconstruct_frames(&frames, psf, config, method)
}
