//! Scaled-form ADMM loop shared by both reconstruction methods.

use std::ops::{Add, Sub};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ReconConfig;
use crate::error::{Error, Result};

/// Relative primal and dual residual below which the optional early stop fires.
pub const EARLY_STOP_TOL: f64 = 1e-8;

/// Element type of the ADMM iterates (real for the spatial method, complex
/// for the spectral one).
pub trait AdmmScalar:
    Copy + Send + Sync + Default + Add<Output = Self> + Sub<Output = Self> + 'static
{
    fn norm_sqr(self) -> f64;
    fn is_finite(self) -> bool;
}

impl AdmmScalar for f64 {
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl AdmmScalar for Complex64 {
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// The two problem-specific steps of ADMM on the splitting `x = z`.
#[allow(clippy::len_without_is_empty)]
pub trait AdmmProblem {
    type Scalar: AdmmScalar;

    /// Number of unknowns.
    fn len(&self) -> usize;

    /// Maps uniform `[0, 1)` draws (one per unknown) to the initial iterate.
    fn initial(&mut self, uniform: Vec<f64>) -> Result<Vec<Self::Scalar>>;

    /// `x = argmin_x f(x) + rho/2 ||x - v||^2`.
    fn x_update(&mut self, rho: f64, v: &[Self::Scalar], x: &mut [Self::Scalar]) -> Result<()>;

    /// `z = prox_{g/rho}(w)`.
    fn z_update(&mut self, rho: f64, w: &[Self::Scalar], z: &mut [Self::Scalar]) -> Result<()>;

    /// Full objective `f(z) + g(z)`.
    fn objective(&mut self, z: &[Self::Scalar]) -> Result<f64>;
}

/// JSON has no infinity; write it as null and read null back as +inf.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SolveDiagnostics {
    pub objective_per_iter: Vec<f64>,
    /// `||x - z||_2` after each iteration.
    pub primal_residual_per_iter: Vec<f64>,
    /// `rho ||z - z_prev||_2` after each iteration.
    pub dual_residual_per_iter: Vec<f64>,
    /// `||x - z||_2 / ||z||_2`; infinite while `z` is all zero (stored as null).
    #[serde(with = "unbounded")]
    pub primal_relative_per_iter: Vec<f64>,
    /// Objective at the random initial iterate.
    pub initial_objective: f64,
    pub wall_time: f64,
    /// Set when the optional residual stop ended the loop early.
    pub stopped_early: bool,
    /// Largest ratio of dropped imaginary part to real part seen when
    /// returning to the spatial domain (spectral method only).
    pub max_imaginary_residue: Option<f64>,
}

impl SolveDiagnostics {
    pub fn iterations(&self) -> usize {
        self.objective_per_iter.len()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_per_iter.last().copied()
    }

    /// First (1-based) iteration whose relative primal residual is below `tol`.
    pub fn first_primal_below(&self, tol: f64) -> Option<usize> {
        self.primal_relative_per_iter.iter().position(|&r| r < tol).map(|i| i + 1)
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome<S> {
    pub x: Vec<S>,
    pub z: Vec<S>,
    pub diagnostics: SolveDiagnostics,
}

fn norm<S: AdmmScalar>(v: &[S]) -> f64 {
    v.iter().map(|s| s.norm_sqr()).sum::<f64>().sqrt()
}

fn diff_norm<S: AdmmScalar>(a: &[S], b: &[S]) -> f64 {
    a.iter().zip(b).map(|(&p, &q)| (p - q).norm_sqr()).sum::<f64>().sqrt()
}

fn check_finite<S: AdmmScalar>(v: &[S], what: &str, iteration: usize) -> Result<()> {
    match v.iter().position(|s| !s.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Divergence {
            iteration,
            reason: format!("non-finite {what} at element {i}"),
        }),
    }
}

/// Runs `config.n_iter` iterations of scaled ADMM:
///
/// ```text
/// x <- x_update(z - u)
/// z <- prox(x + u)
/// u <- u + x - z
/// ```
///
/// `x0` and `z0` are drawn uniformly from `[0, 1)` with a ChaCha8 stream
/// seeded by `init_seed`, and `u0 = x0 - z0`. The solution is the last `z`.
pub fn admm_drive<P: AdmmProblem>(
    problem: &mut P,
    config: &ReconConfig,
    init_seed: u64,
) -> Result<AdmmOutcome<P::Scalar>> {
    config.validate()?;
    let start = Instant::now();
    let n = problem.len();
    let rho = config.rho;

    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let x_draw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let z_draw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut x = problem.initial(x_draw)?;
    let mut z = problem.initial(z_draw)?;
    if x.len() != n || z.len() != n {
        return Err(Error::shape(format!("{n} unknowns"), format!("{} initial values", x.len())));
    }
    let mut u: Vec<P::Scalar> = x.iter().zip(&z).map(|(&a, &b)| a - b).collect();

    let mut diag = SolveDiagnostics {
        initial_objective: problem.objective(&z)?,
        ..Default::default()
    };
    let mut v = vec![P::Scalar::default(); n];
    let mut z_prev = z.clone();

    for k in 1..=config.n_iter {
        for ((vi, &zi), &ui) in v.iter_mut().zip(&z).zip(&u) {
            *vi = zi - ui;
        }
        problem.x_update(rho, &v, &mut x)?;
        check_finite(&x, "x iterate", k)?;

        for ((wi, &xi), &ui) in v.iter_mut().zip(&x).zip(&u) {
            *wi = xi + ui;
        }
        z_prev.copy_from_slice(&z);
        problem.z_update(rho, &v, &mut z)?;
        check_finite(&z, "z iterate", k)?;

        for ((ui, &xi), &zi) in u.iter_mut().zip(&x).zip(&z) {
            *ui = *ui + xi - zi;
        }
        check_finite(&u, "dual variable", k)?;

        let objective = problem.objective(&z)?;
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                reason: "objective is not finite".into(),
            });
        }
        let primal = diff_norm(&x, &z);
        let dual = rho * diff_norm(&z, &z_prev);
        let z_norm = norm(&z);
        let primal_rel = if z_norm > 0.0 { primal / z_norm } else if primal == 0.0 { 0.0 } else { f64::INFINITY };
        diag.objective_per_iter.push(objective);
        diag.primal_residual_per_iter.push(primal);
        diag.dual_residual_per_iter.push(dual);
        diag.primal_relative_per_iter.push(primal_rel);

        if config.early_stop {
            let u_norm = rho * norm(&u);
            let dual_rel = if u_norm > 0.0 { dual / u_norm } else if dual == 0.0 { 0.0 } else { f64::INFINITY };
            if primal_rel < EARLY_STOP_TOL && dual_rel < EARLY_STOP_TOL {
                log::debug!("admm residuals below {EARLY_STOP_TOL:e} after {k} iterations");
                diag.stopped_early = true;
                break;
            }
        }
    }

    diag.wall_time = start.elapsed().as_secs_f64();
    Ok(AdmmOutcome { x, z, diagnostics: diag })
}
