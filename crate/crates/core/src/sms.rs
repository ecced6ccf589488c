//! Sparse matrix stacking: every measurement is a 1-D convolution of its
//! row-major vectorised source map with the vectorised PSF, and all
//! measurements form one block-diagonal system `H A = T_R0`.
//!
//! The blocks share one generator, so `H^T H + rho I` is the same
//! symmetric Toeplitz matrix for every block and is factored once.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::{Array2, ArrayViewMut2};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::solver::{norm_l21, prox_l21_l2_inplace, AdmmProblem, ReconConfig, SmsOperator};
use crate::spectral::Fft2;
use crate::thermal::PsfField;

/// Relative residual at which the conjugate-gradient fallback stops.
pub const CG_TOL: f64 = 1e-10;

/// Row-major flattening.
pub fn vectorize(field: &Array2<f64>) -> Vec<f64> {
    field.iter().copied().collect()
}

pub fn devectorize(v: &[f64], grid: &Grid2D) -> Result<Array2<f64>> {
    if v.len() != grid.len() {
        return Err(Error::shape(
            format!("{} values for a {} x {} grid", grid.len(), grid.n_y, grid.n_x),
            v.len(),
        ));
    }
    Ok(Array2::from_shape_vec(grid.shape(), v.to_vec()).expect("length checked"))
}

/// Lower-triangular Toeplitz operator of shape `(2N - 1) x N` whose column
/// `j` is the generator shifted down by `j` rows, i.e. full linear
/// convolution with the generator. Only the generator (and its spectrum)
/// is stored.
#[derive(Clone)]
pub struct ConvMatrix {
    generator: Vec<f64>,
    fft_len: usize,
    spectrum: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ConvMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvMatrix").field("n", &self.n()).finish()
    }
}

pub fn build_conv_matrix(psf_vec: &[f64]) -> Result<ConvMatrix> {
    if psf_vec.is_empty() {
        return Err(Error::Parameter("convolution generator is empty".into()));
    }
    let n = psf_vec.len();
    let fft_len = (2 * n - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let mut spectrum = vec![Complex64::default(); fft_len];
    for (s, &g) in spectrum.iter_mut().zip(psf_vec) {
        s.re = g;
    }
    fwd.process(&mut spectrum);
    Ok(ConvMatrix {
        generator: psf_vec.to_vec(),
        fft_len,
        spectrum,
        fwd,
        inv,
    })
}

impl ConvMatrix {
    /// Number of columns `N`.
    pub fn n(&self) -> usize {
        self.generator.len()
    }

    /// Number of rows `2N - 1`.
    pub fn rows(&self) -> usize {
        2 * self.n() - 1
    }

    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    /// Dense column `j` (for inspection only).
    pub fn column(&self, j: usize) -> Vec<f64> {
        let mut col = vec![0.0; self.rows()];
        col[j..j + self.n()].copy_from_slice(&self.generator);
        col
    }

    /// Structural nonzeros per column.
    pub fn nnz_per_column(&self) -> usize {
        self.generator.iter().filter(|g| **g != 0.0).count()
    }

    fn spectral_product(&self, input: &[f64], offset: usize, conj: bool) -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); self.fft_len];
        for (b, &v) in buf[offset..].iter_mut().zip(input) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= if conj { s.conj() } else { *s };
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        buf.iter_mut().for_each(|b| *b *= scale);
        buf
    }

    /// `h a`, the length `2N - 1` full convolution of the generator with `a`.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), self.n(), "operand length");
        self.spectral_product(a, 0, false)[..self.rows()].iter().map(|c| c.re).collect()
    }

    /// `h^T y` for `y` of length `2N - 1`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows(), "operand length");
        self.spectral_product(y, 0, true)[..self.n()].iter().map(|c| c.re).collect()
    }

    /// First column of the symmetric Toeplitz matrix `h^T h`:
    /// `g[k] = sum_i phi[i] phi[i + k]`.
    pub fn gram_first_column(&self) -> Vec<f64> {
        let g = &self.generator;
        (0..g.len())
            .into_par_iter()
            .map(|k| g[..g.len() - k].iter().zip(&g[k..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Block-diagonal `H` of `n_m` copies of one [`ConvMatrix`] together with the
/// zero-padded stacked data `T_R0`.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub conv: ConvMatrix,
    /// Stacked padded data, `n_m` blocks of length `2N - 1`.
    pub t_r0: Vec<f64>,
    pub n_m: usize,
    /// Zeros placed before each data block; the remaining `N - 1 - lead`
    /// trail it.
    pub lead: usize,
}

impl StackedSystem {
    /// Vectorises the PSF and the frames. Each frame is padded so that a
    /// point source at flat index `s` lines up with the PSF peak at
    /// `s + lead`, where `lead` is the flat index of the PSF centre.
    pub fn new(frames: &[Array2<f64>], psf: &PsfField) -> Result<Self> {
        psf.grid.validate()?;
        let conv = build_conv_matrix(&vectorize(&psf.values))?;
        let n = conv.n();
        let (cy, cx) = psf.center_index();
        let lead = cy * psf.grid.n_x + cx;
        let mut t_r0 = vec![0.0; conv.rows() * frames.len()];
        for (m, f) in frames.iter().enumerate() {
            psf.grid.check_field(f)?;
            let block = &mut t_r0[m * conv.rows()..(m + 1) * conv.rows()];
            for (dst, &v) in block[lead..lead + n].iter_mut().zip(f.iter()) {
                *dst = v;
            }
        }
        Ok(StackedSystem { conv, t_r0, n_m: frames.len(), lead })
    }

    pub fn block(&self, m: usize) -> &[f64] {
        let r = self.conv.rows();
        &self.t_r0[m * r..(m + 1) * r]
    }

    /// `H A` for measurement-major stacked `A`.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        let n = self.conv.n();
        assert_eq!(a.len(), n * self.n_m, "operand length");
        a.par_chunks(n).flat_map_iter(|am| self.conv.apply(am)).collect()
    }

    /// Structural nonzeros of `H`.
    pub fn nnz(&self) -> usize {
        self.conv.nnz_per_column() * self.conv.n() * self.n_m
    }

    /// Fraction of nonzero entries of `H`, about `1 / (2 n_m)` for a dense generator.
    pub fn density(&self) -> f64 {
        let (r, c) = (self.conv.rows() * self.n_m, self.conv.n() * self.n_m);
        self.nnz() as f64 / (r as f64 * c as f64)
    }
}

/// Same-size 2-D convolution cropped to the grid (block Toeplitz with
/// Toeplitz blocks), applied through a zero-padded 2-D DFT.
struct Conv2d {
    n_y: usize,
    n_x: usize,
    center: (usize, usize),
    fft: Fft2,
    pad: (usize, usize),
    spectrum: Vec<Complex64>,
}

impl Conv2d {
    fn new(psf: &PsfField) -> Self {
        let (n_y, n_x) = psf.grid.shape();
        let pad = (2 * n_y, 2 * n_x);
        let fft = Fft2::new(pad.0, pad.1);
        let mut k = vec![0.0; pad.0 * pad.1];
        for ((iy, ix), &v) in psf.values.indexed_iter() {
            k[iy * pad.1 + ix] = v;
        }
        let spectrum = fft.forward_real(&k);
        Conv2d { n_y, n_x, center: psf.center_index(), fft, pad, spectrum }
    }

    fn product(&self, input: &[f64], offset: (usize, usize), crop: (usize, usize), conj: bool) -> Vec<f64> {
        let mut buf = vec![Complex64::default(); self.pad.0 * self.pad.1];
        for iy in 0..self.n_y {
            for ix in 0..self.n_x {
                buf[(iy + offset.0) * self.pad.1 + ix + offset.1].re = input[iy * self.n_x + ix];
            }
        }
        self.fft.forward(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= if conj { s.conj() } else { *s };
        }
        self.fft.inverse(&mut buf);
        let mut out = Vec::with_capacity(self.n_y * self.n_x);
        for iy in 0..self.n_y {
            for ix in 0..self.n_x {
                out.push(buf[(iy + crop.0) * self.pad.1 + ix + crop.1].re);
            }
        }
        out
    }

    fn apply(&self, a: &[f64]) -> Vec<f64> {
        self.product(a, (0, 0), self.center, false)
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.product(y, self.center, (0, 0), true)
    }
}

enum BlockOp {
    Flattened(ConvMatrix),
    Strict2d(Conv2d),
}

impl BlockOp {
    fn apply(&self, a: &[f64]) -> Vec<f64> {
        match self {
            BlockOp::Flattened(c) => c.apply(a),
            BlockOp::Strict2d(c) => c.apply(a),
        }
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        match self {
            BlockOp::Flattened(c) => c.apply_transpose(y),
            BlockOp::Strict2d(c) => c.apply_transpose(y),
        }
    }

    fn normal_apply(&self, rho: f64, a: &[f64]) -> Vec<f64> {
        let mut out = self.apply_transpose(&self.apply(a));
        out.iter_mut().zip(a).for_each(|(o, &v)| *o += rho * v);
        out
    }
}

/// Solves `(H^T H + rho I) x = b` by conjugate gradients starting from `x`.
fn conjugate_gradient(op: &BlockOp, rho: f64, b: &[f64], x: &mut [f64]) -> usize {
    let n = b.len();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return 0;
    }
    let ax = op.normal_apply(rho, x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let max_iter = 10 * n.max(10);
    for it in 0..max_iter {
        if rr.sqrt() <= CG_TOL * b_norm {
            return it;
        }
        let ap = op.normal_apply(rho, &p);
        let alpha = rr / p.iter().zip(&ap).map(|(p, a)| p * a).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    log::warn!("conjugate gradients stopped at {max_iter} iterations above tolerance");
    max_iter
}

/// ADMM state of the stacked spatial method. Iterates hold the `n_m`
/// vectorised source maps back to back.
pub(crate) struct SmsProblem {
    op: BlockOp,
    grid: Grid2D,
    /// Data blocks (padded for the flattened operator).
    data: Vec<Vec<f64>>,
    /// Precomputed `H^T T` per block.
    hty: Vec<Vec<f64>>,
    gram: Option<Vec<f64>>,
    factor: Option<(f64, Cholesky<f64, Dyn>)>,
    factorizations: usize,
    use_dense: bool,
    lambda_21: f64,
    lambda_2: f64,
    n_pix: usize,
}

impl SmsProblem {
    pub(crate) fn new(frames: &[Array2<f64>], psf: &PsfField, config: &ReconConfig) -> Result<Self> {
        psf.grid.validate()?;
        let grid = psf.grid;
        let n_pix = grid.len();
        for (m, f) in frames.iter().enumerate() {
            if f.dim() != grid.shape() {
                return Err(Error::shape(format!("frame {m} of shape {:?}", grid.shape()), format!("{:?}", f.dim())));
            }
        }
        let (op, data) = match config.sms_operator {
            SmsOperator::Flattened => {
                let sys = StackedSystem::new(frames, psf)?;
                let data: Vec<Vec<f64>> = (0..sys.n_m).map(|m| sys.block(m).to_vec()).collect();
                (BlockOp::Flattened(sys.conv), data)
            }
            SmsOperator::Strict2d => (BlockOp::Strict2d(Conv2d::new(psf)), frames.iter().map(vectorize).collect()),
        };
        let hty = data.par_iter().map(|t: &Vec<f64>| op.apply_transpose(t)).collect();
        let dense_bytes = (n_pix as u64).saturating_mul(n_pix as u64).saturating_mul(8);
        let use_dense = matches!(op, BlockOp::Flattened(_)) && dense_bytes <= config.factorization_memory_cap;
        if matches!(op, BlockOp::Flattened(_)) && !use_dense {
            log::info!(
                "dense factor would need {dense_bytes} bytes (cap {}); using conjugate gradients",
                config.factorization_memory_cap
            );
        }
        let gram = match (&op, use_dense) {
            (BlockOp::Flattened(c), true) => Some(c.gram_first_column()),
            _ => None,
        };
        Ok(SmsProblem {
            op,
            grid,
            data,
            hty,
            gram,
            factor: None,
            factorizations: 0,
            use_dense,
            lambda_21: config.lambda_21,
            lambda_2: config.lambda_2,
            n_pix,
        })
    }

    pub(crate) fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Number of `(H^T H + rho I)` factorizations computed so far.
    #[cfg(test)]
    pub(crate) fn factorizations(&self) -> usize {
        self.factorizations
    }

    #[cfg(test)]
    pub(crate) fn uses_dense_factor(&self) -> bool {
        self.use_dense
    }

    fn ensure_factor(&mut self, rho: f64) -> Result<()> {
        if matches!(&self.factor, Some((r, _)) if *r == rho) {
            return Ok(());
        }
        let g = self.gram.as_ref().expect("gram column exists for the dense path");
        let n = self.n_pix;
        let m = DMatrix::from_fn(n, n, |i, j| g[i.abs_diff(j)] + if i == j { rho } else { 0.0 });
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("H^T H + {rho} I is not positive definite")))?;
        self.factor = Some((rho, chol));
        self.factorizations += 1;
        Ok(())
    }

    pub(crate) fn spatial_maps(&self, z: &[f64]) -> Vec<Array2<f64>> {
        z.chunks(self.n_pix)
            .map(|zm| devectorize(zm, &self.grid).expect("block length equals the grid"))
            .collect()
    }

    fn residual_sq(&self, z: &[f64]) -> f64 {
        z.par_chunks(self.n_pix)
            .zip(self.data.par_iter())
            .map(|(zm, t)| self.op.apply(zm).iter().zip(t).map(|(h, t)| (h - t).powi(2)).sum::<f64>())
            .sum()
    }

    pub(crate) fn residual_norm(&self, z: &[f64]) -> f64 {
        self.residual_sq(z).sqrt()
    }
}

impl AdmmProblem for SmsProblem {
    type Scalar = f64;

    fn len(&self) -> usize {
        self.n_pix * self.data.len()
    }

    fn initial(&mut self, uniform: Vec<f64>) -> Result<Vec<f64>> {
        Ok(uniform)
    }

    fn x_update(&mut self, rho: f64, v: &[f64], x: &mut [f64]) -> Result<()> {
        let n = self.n_pix;
        if self.use_dense {
            self.ensure_factor(rho)?;
            let (_, chol) = self.factor.as_ref().expect("factor computed");
            x.par_chunks_mut(n)
                .zip(v.par_chunks(n))
                .zip(self.hty.par_iter())
                .for_each(|((xm, vm), hm)| {
                    let rhs = DVector::from_iterator(n, hm.iter().zip(vm).map(|(h, v)| h + rho * v));
                    xm.copy_from_slice(chol.solve(&rhs).as_slice());
                });
        } else {
            let op = &self.op;
            x.par_chunks_mut(n)
                .zip(v.par_chunks(n))
                .zip(self.hty.par_iter())
                .for_each(|((xm, vm), hm)| {
                    let rhs: Vec<f64> = hm.iter().zip(vm).map(|(h, v)| h + rho * v).collect();
                    conjugate_gradient(op, rho, &rhs, xm);
                });
        }
        Ok(())
    }

    fn z_update(&mut self, rho: f64, w: &[f64], z: &mut [f64]) -> Result<()> {
        z.copy_from_slice(w);
        let view = ArrayViewMut2::from_shape((self.data.len(), self.n_pix), z)
            .expect("length equals n_m * n_pix")
            .reversed_axes();
        prox_l21_l2_inplace(view, self.lambda_21 / rho, self.lambda_2 / rho);
        Ok(())
    }

    fn objective(&mut self, z: &[f64]) -> Result<f64> {
        let stacked = ndarray::ArrayView2::from_shape((self.data.len(), self.n_pix), z)
            .expect("length equals n_m * n_pix")
            .reversed_axes();
        let l2: f64 = z.iter().map(|v| v * v).sum();
        Ok(0.5 * self.residual_sq(z) + self.lambda_21 * norm_l21(stacked) + 0.5 * self.lambda_2 * l2)
    }
}

/// Reconstructs the `config.eval_time` slice of `data` with the stacked spatial method.
pub fn reconstruct_sms(
    data: &crate::phantom::MeasurementSet,
    psf: &PsfField,
    config: &ReconConfig,
) -> Result<crate::recon::ReconResult> {
    crate::recon::reconstruct(data, psf, config, crate::recon::Method::Sms)
}
