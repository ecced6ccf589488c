//! Optimisation pieces shared by the two reconstructions: group norms, the
//! joint-sparsity prox, the ADMM loop and L-curve penalty selection.

mod admm;
mod lcurve;
mod norms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admm::{admm_drive, AdmmOutcome, AdmmProblem, AdmmScalar, SolveDiagnostics, EARLY_STOP_TOL};
pub use lcurve::{
    default_rho_candidates, lcurve_corner, select_rho_lcurve, short_solve_iterations, LCurvePoint,
    LCurveSelection,
};
pub use norms::{norm_fro, norm_l21, prox_l21_l2, prox_l21_l2_inplace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RhoMode {
    #[default]
    Fixed,
    /// Pick rho from `candidates` (ascending) by the L-curve corner.
    LCurve { candidates: Vec<f64> },
}

/// How the spatial method models the blur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmsOperator {
    /// 1-D convolution of row-major vectors, as in the stacked formulation.
    #[default]
    Flattened,
    /// True 2-D convolution cropped to the grid (block Toeplitz).
    Strict2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub lambda_21: f64,
    pub lambda_2: f64,
    /// ADMM penalty.
    pub rho: f64,
    pub n_iter: usize,
    /// Time slice reconstructed, seconds after pulse onset.
    pub eval_time: f64,
    #[serde(default)]
    pub rho_mode: RhoMode,
    #[serde(default)]
    pub init_seed: u64,
    /// Stop once primal and dual residuals drop below 1e-8 relative.
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default)]
    pub sms_operator: SmsOperator,
    /// Above this many bytes for a dense normal-equations factor the spatial
    /// method switches to conjugate gradients.
    #[serde(default = "default_memory_cap")]
    pub factorization_memory_cap: u64,
    /// Cosine edge taper on the data before the spectral method.
    #[serde(default = "default_taper")]
    pub taper: bool,
}

fn default_memory_cap() -> u64 {
    512 << 20
}

fn default_taper() -> bool {
    true
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig::paper_sms()
    }
}

impl ReconConfig {
    /// Spatial-method parameters of the published 316L experiment.
    pub fn paper_sms() -> Self {
        ReconConfig {
            lambda_21: 1570.0,
            lambda_2: 100.0,
            rho: 16.0,
            n_iter: 400,
            eval_time: 0.5,
            rho_mode: RhoMode::Fixed,
            init_seed: 0,
            early_stop: false,
            sms_operator: SmsOperator::Flattened,
            factorization_memory_cap: default_memory_cap(),
            taper: true,
        }
    }

    /// Spectral-method parameters of the published 316L experiment.
    pub fn paper_fft() -> Self {
        ReconConfig {
            lambda_21: 27.0,
            lambda_2: 500.0,
            eval_time: 0.7,
            ..ReconConfig::paper_sms()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_21 >= 0.0 && self.lambda_21.is_finite()) {
            return Err(Error::Parameter(format!("lambda_21 must be >= 0, got {}", self.lambda_21)));
        }
        if !(self.lambda_2 >= 0.0 && self.lambda_2.is_finite()) {
            return Err(Error::Parameter(format!("lambda_2 must be >= 0, got {}", self.lambda_2)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Parameter(format!("rho must be > 0, got {}", self.rho)));
        }
        if self.n_iter < 1 {
            return Err(Error::Parameter("n_iter must be at least 1".into()));
        }
        if !(self.eval_time > 0.0 && self.eval_time.is_finite()) {
            return Err(Error::Parameter(format!("eval_time must be > 0, got {}", self.eval_time)));
        }
        if let RhoMode::LCurve { candidates } = &self.rho_mode {
            if candidates.len() < 3 {
                return Err(Error::Parameter("l-curve needs at least 3 rho candidates".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let s = ReconConfig::paper_sms();
        assert_eq!((s.lambda_21, s.lambda_2, s.rho, s.n_iter), (1570.0, 100.0, 16.0, 400));
        assert_eq!(s.eval_time, 0.5);
        let f = ReconConfig::paper_fft();
        assert_eq!((f.lambda_21, f.lambda_2, f.rho, f.n_iter), (27.0, 500.0, 16.0, 400));
        assert_eq!(f.eval_time, 0.7);
        s.validate().unwrap();
        f.validate().unwrap();
    }

    #[test]
    fn validation() {
        let bad = |f: fn(&mut ReconConfig)| {
            let mut c = ReconConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.lambda_21 = -1.0));
        assert!(bad(|c| c.lambda_2 = f64::NAN));
        assert!(bad(|c| c.rho = 0.0));
        assert!(bad(|c| c.n_iter = 0));
        assert!(bad(|c| c.rho_mode = RhoMode::LCurve { candidates: vec![1.0, 2.0] }));
    }

    #[test]
    fn serde_round_trip() {
        let mut c = ReconConfig::paper_fft();
        c.rho_mode = RhoMode::LCurve { candidates: default_rho_candidates() };
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ReconConfig>(&json).unwrap(), c);
    }
}
