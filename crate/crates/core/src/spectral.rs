//! Frequency-domain reconstruction: the blur is diagonal after a 2-D DFT,
//! so the least-squares step is a per-bin scalar solve.
//!
//! Transform convention used throughout the crate: the forward DFT is
//! unnormalised and the inverse is scaled by `1 / (n_y n_x)`.

use std::sync::Arc;

use ndarray::{Array2, ArrayViewMut2};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::solver::{norm_l21, prox_l21_l2_inplace, AdmmProblem, ReconConfig};
use crate::thermal::PsfField;

/// Planned 2-D DFT of row-major `n_y x n_x` buffers.
#[derive(Clone)]
pub struct Fft2 {
    n_y: usize,
    n_x: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({} x {})", self.n_y, self.n_x)
    }
}

impl Fft2 {
    pub fn new(n_y: usize, n_x: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n_y,
            n_x,
            row_fwd: planner.plan_fft_forward(n_x),
            row_inv: planner.plan_fft_inverse(n_x),
            col_fwd: planner.plan_fft_forward(n_y),
            col_inv: planner.plan_fft_inverse(n_y),
        }
    }

    pub fn len(&self) -> usize {
        self.n_y * self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer does not match the planned size");
        let (ny, nx) = (self.n_y, self.n_x);
        rows.process(data);
        let mut t = vec![Complex64::default(); data.len()];
        for iy in 0..ny {
            for ix in 0..nx {
                t[ix * ny + iy] = data[iy * nx + ix];
            }
        }
        cols.process(&mut t);
        for ix in 0..nx {
            for iy in 0..ny {
                data[iy * nx + ix] = t[ix * ny + iy];
            }
        }
    }

    /// Unnormalised forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform in place, scaled by `1 / len`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward_real(&self, a: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }
}

/// Circularly shifts `field` so that element `(cy, cx)` lands at `(0, 0)`.
pub fn roll_to_origin<T: Clone>(field: &Array2<T>, cy: usize, cx: usize) -> Array2<T> {
    let (ny, nx) = field.dim();
    Array2::from_shape_fn((ny, nx), |(iy, ix)| field[[(iy + cy) % ny, (ix + cx) % nx]].clone())
}

/// Inverse centring shift: element `(floor(n_y/2), floor(n_x/2))` moves to
/// the origin. For even sizes this swaps quadrants 1<->3 and 2<->4.
pub fn quadrant_swap<T: Clone>(field: &Array2<T>) -> Array2<T> {
    let (ny, nx) = field.dim();
    roll_to_origin(field, ny / 2, nx / 2)
}

/// Centring shift, the inverse of [`quadrant_swap`].
pub fn center_shift<T: Clone>(field: &Array2<T>) -> Array2<T> {
    let (ny, nx) = field.dim();
    if ny == 0 || nx == 0 {
        return field.clone();
    }
    roll_to_origin(field, ny - ny / 2, nx - nx / 2)
}

/// Diagonal of the blur in the DFT basis: `conj(F(shift(psf)))`.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    pub grid: Grid2D,
    pub diag_values: Array2<Complex64>,
    fft: Fft2,
}

impl SpectralOperator {
    /// Builds the operator from a PSF sampled on the reconstruction grid.
    /// The PSF centre pixel is moved to the origin before transforming,
    /// which is exactly [`quadrant_swap`] for a PSF centred on the grid.
    pub fn new(psf: &PsfField) -> Result<Self> {
        psf.grid.validate()?;
        Self::from_kernel(psf.grid, &psf.values, psf.center_index())
    }

    /// Same as [`SpectralOperator::new`] for a bare kernel with centre pixel `center`.
    pub fn from_kernel(grid: Grid2D, kernel: &Array2<f64>, center: (usize, usize)) -> Result<Self> {
        grid.check_field(kernel)?;
        let shifted = roll_to_origin(kernel, center.0, center.1);
        let fft = Fft2::new(grid.n_y, grid.n_x);
        let spec = fft.forward_real(shifted.as_slice().expect("standard layout"));
        let diag_values = Array2::from_shape_vec(grid.shape(), spec.into_iter().map(|c| c.conj()).collect())
            .expect("length matches the grid");
        Ok(SpectralOperator { grid, diag_values, fft })
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Largest `|Im| / max |A|` over all bins.
    pub fn imaginary_residue(&self) -> f64 {
        let max = self.diag_values.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        self.diag_values.iter().map(|c| c.im.abs()).fold(0.0, f64::max) / max
    }
}

/// `Re(ifft(A * fft(a)))` for the operator diagonal `A`.
pub fn spectral_forward(op: &SpectralOperator, a: &Array2<f64>) -> Result<Array2<f64>> {
    op.grid.check_field(a)?;
    let a = a.as_standard_layout();
    let mut buf = op.fft.forward_real(a.as_slice().expect("standard layout"));
    for (b, d) in buf.iter_mut().zip(op.diag_values.iter()) {
        *b *= d;
    }
    op.fft.inverse(&mut buf);
    Ok(Array2::from_shape_vec(op.grid.shape(), buf.into_iter().map(|c| c.re).collect())
        .expect("length matches the grid"))
}

/// Separable raised-cosine edge taper rising from 0 at the border to 1 at
/// `width_px` pixels inside.
pub fn cosine_taper(grid: &Grid2D, width_x_px: f64, width_y_px: f64) -> Array2<f64> {
    fn ramp(i: usize, n: usize, w: f64) -> f64 {
        let d = i.min(n - 1 - i) as f64;
        if w <= 0.0 || d >= w {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * d / w).cos())
        }
    }
    Array2::from_shape_fn(grid.shape(), |(iy, ix)| {
        ramp(ix, grid.n_x, width_x_px) * ramp(iy, grid.n_y, width_y_px)
    })
}

/// ADMM state of the frequency-domain method. Iterates are the DFTs of the
/// per-measurement source maps, stored measurement-major.
pub(crate) struct FftProblem {
    op: SpectralOperator,
    /// DFT of each (tapered) data frame.
    data_hat: Vec<Vec<Complex64>>,
    data: Vec<Vec<f64>>,
    lambda_21: f64,
    lambda_2: f64,
    n_pix: usize,
    /// Spatial scratch used by the prox, `[n_m x n_pix]`.
    spatial: Array2<f64>,
    max_imag: f64,
}

impl FftProblem {
    pub(crate) fn new(frames: &[Array2<f64>], psf: &PsfField, config: &ReconConfig) -> Result<Self> {
        let op = SpectralOperator::new(psf)?;
        let grid = op.grid;
        let taper = if config.taper {
            let half = 0.5 * psf.fwhm_x();
            Some(cosine_taper(&grid, half / grid.dx, half / grid.dy))
        } else {
            None
        };
        let mut data = Vec::with_capacity(frames.len());
        for (m, f) in frames.iter().enumerate() {
            if f.dim() != grid.shape() {
                return Err(Error::shape(format!("frame {m} of shape {:?}", grid.shape()), format!("{:?}", f.dim())));
            }
            let mut t = f.to_owned();
            if let Some(w) = &taper {
                t *= w;
            }
            data.push(t.iter().copied().collect::<Vec<f64>>());
        }
        let data_hat = data.par_iter().map(|t| op.fft.forward_real(t)).collect();
        let n_pix = grid.len();
        Ok(FftProblem {
            spatial: Array2::zeros((frames.len(), n_pix)),
            op,
            data_hat,
            data,
            lambda_21: config.lambda_21,
            lambda_2: config.lambda_2,
            n_pix,
            max_imag: 0.0,
        })
    }

    pub(crate) fn grid(&self) -> Grid2D {
        self.op.grid
    }

    pub(crate) fn max_imaginary_residue(&self) -> f64 {
        self.max_imag
    }

    /// Spatial maps `Re(ifft(z_m))`.
    pub(crate) fn spatial_maps(&self, z: &[Complex64]) -> Vec<Array2<f64>> {
        z.par_chunks(self.n_pix)
            .map(|zm| {
                let mut buf = zm.to_vec();
                self.op.fft.inverse(&mut buf);
                Array2::from_shape_vec(self.op.grid.shape(), buf.into_iter().map(|c| c.re).collect())
                    .expect("length matches the grid")
            })
            .collect()
    }

    /// `||H A - T||_2` in the spatial domain.
    pub(crate) fn residual_norm(&self, z: &[Complex64]) -> f64 {
        self.residual_sq(z).sqrt()
    }

    fn residual_sq(&self, z: &[Complex64]) -> f64 {
        z.par_chunks(self.n_pix)
            .zip(self.data.par_iter())
            .map(|(zm, t)| {
                let mut buf: Vec<Complex64> =
                    zm.iter().zip(self.op.diag_values.iter()).map(|(a, d)| a * d).collect();
                self.op.fft.inverse(&mut buf);
                buf.iter().zip(t).map(|(b, t)| (b.re - t).powi(2)).sum::<f64>()
            })
            .sum()
    }
}

impl AdmmProblem for FftProblem {
    type Scalar = Complex64;

    fn len(&self) -> usize {
        self.n_pix * self.data.len()
    }

    fn initial(&mut self, uniform: Vec<f64>) -> Result<Vec<Complex64>> {
        // spatial random fields carried into the frequency domain
        Ok(uniform
            .par_chunks(self.n_pix)
            .flat_map_iter(|f| self.op.fft.forward_real(f))
            .collect())
    }

    fn x_update(&mut self, rho: f64, v: &[Complex64], x: &mut [Complex64]) -> Result<()> {
        let diag = &self.op.diag_values;
        x.par_chunks_mut(self.n_pix)
            .zip(v.par_chunks(self.n_pix))
            .zip(self.data_hat.par_iter())
            .for_each(|((xm, vm), bm)| {
                for (((xi, &vi), &bi), &a) in xm.iter_mut().zip(vm).zip(bm).zip(diag.iter()) {
                    *xi = (a.conj() * bi + rho * vi) / (a.norm_sqr() + rho);
                }
            });
        Ok(())
    }

    fn z_update(&mut self, rho: f64, w: &[Complex64], z: &mut [Complex64]) -> Result<()> {
        let fft = &self.op.fft;
        let n_pix = self.n_pix;
        let imag: f64 = self
            .spatial
            .as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n_pix)
            .zip(w.par_chunks(n_pix))
            .map(|(row, wm)| {
                let mut buf = wm.to_vec();
                fft.inverse(&mut buf);
                let (mut re2, mut im2) = (0.0, 0.0);
                for (r, c) in row.iter_mut().zip(&buf) {
                    *r = c.re;
                    re2 += c.re * c.re;
                    im2 += c.im * c.im;
                }
                if re2 > 0.0 { (im2 / re2).sqrt() } else { 0.0 }
            })
            .reduce(|| 0.0, f64::max);
        self.max_imag = self.max_imag.max(imag);

        let view: ArrayViewMut2<'_, f64> = self.spatial.view_mut().reversed_axes();
        prox_l21_l2_inplace(view, self.lambda_21 / rho, self.lambda_2 / rho);

        z.par_chunks_mut(n_pix)
            .zip(self.spatial.as_slice().expect("standard layout").par_chunks(n_pix))
            .for_each(|(zm, row)| {
                for (zi, &r) in zm.iter_mut().zip(row) {
                    *zi = Complex64::new(r, 0.0);
                }
                fft.forward(zm);
            });
        Ok(())
    }

    fn objective(&mut self, z: &[Complex64]) -> Result<f64> {
        let maps = self.spatial_maps(z);
        let mut stacked = Array2::zeros((self.n_pix, maps.len()));
        for (m, a) in maps.iter().enumerate() {
            stacked.column_mut(m).iter_mut().zip(a.iter()).for_each(|(s, &v)| *s = v);
        }
        let l2 = stacked.iter().map(|v| v * v).sum::<f64>();
        Ok(0.5 * self.residual_sq(z) + self.lambda_21 * norm_l21(stacked.view()) + 0.5 * self.lambda_2 * l2)
    }
}

/// Reconstructs the `config.eval_time` slice of `data` with the frequency-domain method.
pub fn reconstruct_fft(
    data: &crate::phantom::MeasurementSet,
    psf: &PsfField,
    config: &ReconConfig,
) -> Result<crate::recon::ReconResult> {
    crate::recon::reconstruct(data, psf, config, crate::recon::Method::Fft)
}
