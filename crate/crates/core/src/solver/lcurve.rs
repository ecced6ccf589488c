//! L-curve choice of the ADMM penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Turn angles (as |sin|) below this everywhere mark a straight, cornerless curve.
const COLLINEAR_TOL: f64 = 1e-6;

/// Decade-spaced penalties from 1e-2 to 1e4.
pub fn default_rho_candidates() -> Vec<f64> {
    (-2..=4).map(|e| 10f64.powi(e)).collect()
}

/// Iterations of each short solve made while tracing the curve.
pub fn short_solve_iterations(n_iter: usize) -> usize {
    (n_iter / 4).max(25)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LCurvePoint {
    pub rho: f64,
    /// `ln ||H A - T||_2`
    pub log_residual: f64,
    /// `ln ||A||_2`
    pub log_solution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LCurveSelection {
    pub rho: f64,
    pub index: usize,
    pub points: Vec<LCurvePoint>,
    /// Menger curvature at each interior point (ends are 0).
    pub curvature: Vec<f64>,
    /// The curve had no usable corner and the median candidate was taken.
    pub fallback: bool,
}

fn menger(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let ab = (b.0 - a.0, b.1 - a.1);
    let bc = (c.0 - b.0, c.1 - b.1);
    let ca = (a.0 - c.0, a.1 - c.1);
    let cross = ab.0 * bc.1 - ab.1 * bc.0;
    let (lab, lbc, lca) = (ab.0.hypot(ab.1), bc.0.hypot(bc.1), ca.0.hypot(ca.1));
    if lab == 0.0 || lbc == 0.0 || lca == 0.0 {
        return (0.0, 0.0);
    }
    (2.0 * cross.abs() / (lab * lbc * lca), cross.abs() / (lab * lbc))
}

/// Index of maximum curvature of a discrete curve, the curvature profile,
/// and whether the median fallback was used.
pub fn lcurve_corner(points: &[(f64, f64)]) -> (usize, Vec<f64>, bool) {
    let n = points.len();
    let median = (n - 1) / 2;
    let mut curvature = vec![0.0; n];
    if n < 3 || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return (median, curvature, true);
    }
    let mut best = (0usize, -1.0);
    let mut max_turn: f64 = 0.0;
    for i in 1..n - 1 {
        let (k, turn) = menger(points[i - 1], points[i], points[i + 1]);
        curvature[i] = k;
        max_turn = max_turn.max(turn);
        if k > best.1 {
            best = (i, k);
        }
    }
    if max_turn < COLLINEAR_TOL {
        return (median, curvature, true);
    }
    (best.0, curvature, false)
}

/// Traces the L-curve by calling `solve(rho)` for every candidate, which
/// must return `(||H A - T||_2, ||A||_2)` of a short solve, and picks the
/// candidate at the point of maximum curvature in log-log space.
pub fn select_rho_lcurve<F>(mut solve: F, candidates: &[f64]) -> Result<LCurveSelection>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if candidates.len() < 3 {
        return Err(Error::Parameter(format!(
            "l-curve needs at least 3 rho candidates, got {}",
            candidates.len()
        )));
    }
    if candidates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::Parameter("rho candidates must be positive and finite".into()));
    }
    if candidates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("rho candidates must be sorted ascending".into()));
    }

    let mut points = Vec::with_capacity(candidates.len());
    for &rho in candidates {
        let (residual, solution) = solve(rho)?;
        points.push(LCurvePoint {
            rho,
            log_residual: residual.ln(),
            log_solution: solution.ln(),
        });
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.log_residual, p.log_solution)).collect();
    let (index, curvature, fallback) = lcurve_corner(&xy);
    if fallback {
        log::warn!("l-curve has no corner; using the median candidate rho = {}", candidates[index]);
    }
    Ok(LCurveSelection {
        rho: candidates[index],
        index,
        points,
        curvature,
        fallback,
    })
}
