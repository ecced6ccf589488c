use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{DefectMap, Frames, MeasurementSet, Provenance, ScanPlan, TimeAxis};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::thermal::{self, ExcitationTemporal, PlateSpec};

/// Sub-samples per axis used for pixels crossed by the spot edge.
const EDGE_SUPERSAMPLING: usize = 4;

/// Top-hat disc of diameter `diameter` rasterised on the pixel lattice,
/// centred on the middle element. Pixels fully inside are 1, edge pixels
/// carry the covered area fraction. A non-positive diameter yields a unit
/// impulse.
pub fn disc_kernel(diameter: f64, dx: f64, dy: f64) -> Array2<f64> {
    if !(diameter > 0.0) {
        return Array2::from_elem((1, 1), 1.0);
    }
    let r = 0.5 * diameter;
    let hx = (r / dx).ceil() as usize;
    let hy = (r / dy).ceil() as usize;
    Array2::from_shape_fn((2 * hy + 1, 2 * hx + 1), |(iy, ix)| {
        let cx = (ix as f64 - hx as f64) * dx;
        let cy = (iy as f64 - hy as f64) * dy;
        let near_x = (cx.abs() - 0.5 * dx).max(0.0);
        let near_y = (cy.abs() - 0.5 * dy).max(0.0);
        let far_x = cx.abs() + 0.5 * dx;
        let far_y = cy.abs() + 0.5 * dy;
        if far_x.hypot(far_y) <= r {
            return 1.0;
        }
        if near_x.hypot(near_y) >= r {
            return 0.0;
        }
        let n = EDGE_SUPERSAMPLING;
        let mut inside = 0;
        for sy in 0..n {
            for sx in 0..n {
                let px = cx + ((sx as f64 + 0.5) / n as f64 - 0.5) * dx;
                let py = cy + ((sy as f64 + 0.5) / n as f64 - 0.5) * dy;
                if px.hypot(py) <= r {
                    inside += 1;
                }
            }
        }
        inside as f64 / (n * n) as f64
    })
}

/// Deposits a unit impulse at `(x, y)` metres onto the four surrounding pixels.
pub fn splat_bilinear(grid: &Grid2D, x: f64, y: f64, target: &mut Array2<f64>) {
    let fx = (x / grid.dx).clamp(0.0, (grid.n_x - 1) as f64);
    let fy = (y / grid.dy).clamp(0.0, (grid.n_y - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let x1 = (x0 + 1).min(grid.n_x - 1);
    let y1 = (y0 + 1).min(grid.n_y - 1);
    target[[y0, x0]] += (1.0 - tx) * (1.0 - ty);
    if tx > 0.0 {
        target[[y0, x1]] += tx * (1.0 - ty);
    }
    if ty > 0.0 {
        target[[y1, x0]] += (1.0 - tx) * ty;
    }
    if tx > 0.0 && ty > 0.0 {
        target[[y1, x1]] += tx * ty;
    }
}

/// Linear 2-D convolution returning the window aligned with `source`.
/// `kernel[center]` is the zero-offset tap; taps falling outside the kernel
/// are zero. Zero source pixels are skipped.
pub(crate) fn convolve_same(
    source: &Array2<f64>,
    kernel: &Array2<f64>,
    center: (usize, usize),
) -> Array2<f64> {
    let (ny, nx) = source.dim();
    let (ky, kx) = kernel.dim();
    let mut out = Array2::zeros((ny, nx));
    for ((sy, sx), &v) in source.indexed_iter() {
        if v == 0.0 {
            continue;
        }
        for oy in 0..ny {
            let ty = oy as isize - sy as isize + center.0 as isize;
            if ty < 0 || ty >= ky as isize {
                continue;
            }
            for ox in 0..nx {
                let tx = ox as isize - sx as isize + center.1 as isize;
                if tx < 0 || tx >= kx as isize {
                    continue;
                }
                out[[oy, ox]] += v * kernel[[ty as usize, tx as usize]];
            }
        }
    }
    out
}

/// PSF sampled over every offset reachable on `grid`, centred at `(n_y - 1, n_x - 1)`.
fn extended_kernel(
    plate: &PlateSpec,
    excitation: &ExcitationTemporal,
    grid: &Grid2D,
    eval_time: f64,
    n_dim: u32,
) -> Result<(Array2<f64>, (usize, usize))> {
    let ext = Grid2D::new(2 * grid.n_x - 1, 2 * grid.n_y - 1, grid.dx, grid.dy)?;
    let center = ((grid.n_x - 1) as f64 * grid.dx, (grid.n_y - 1) as f64 * grid.dy);
    let psf = thermal::synth_psf(
        plate,
        excitation,
        &ext,
        center,
        eval_time,
        n_dim,
        thermal::DEFAULT_SERIES_TERMS,
    )?;
    Ok((psf.values, (grid.n_y - 1, grid.n_x - 1)))
}

/// Noise standard deviation giving `snr_db` (amplitude ratio, `20 log10`) relative to `peak`.
pub fn noise_sigma_for_snr(peak: f64, snr_db: f64) -> f64 {
    peak / 10f64.powf(snr_db / 20.0)
}

fn measurement_rng(seed: u64, m: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m);
    rng
}

fn add_noise(frame: &mut Array2<f64>, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
        frame.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
}

/// Simulates one measurement per scan position.
///
/// The source of measurement `m` is `I * (delta_m + zeta * w_m)` where
/// `I` is the rasterised top-hat spot, `delta_m` the bilinearly splatted
/// spot centre and `w_m` the defect-free thermal footprint of that spot
/// normalised to a peak of one, so a defect only shows up where it is heated.
/// The frame is the source convolved with the PSF at `eval_time` plus
/// i.i.d. Gaussian noise drawn from a stream derived from `(seed, m)`.
pub fn forward_simulate(
    plate: &PlateSpec,
    excitation: &ExcitationTemporal,
    plan: &ScanPlan,
    defects: &DefectMap,
    eval_time: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    let grid = defects.grid;
    defects.validate()?;
    if !(noise_sigma >= 0.0) {
        return Err(Error::Parameter(format!("noise_sigma must be non-negative, got {noise_sigma}")));
    }
    for (m, &(x, y)) in plan.positions.iter().enumerate() {
        if !grid.contains(x, y) {
            return Err(Error::shape(
                format!("spot inside the {}x{} grid", grid.n_x, grid.n_y),
                format!("spot {m} at ({x:.4e}, {y:.4e}) m"),
            ));
        }
    }

    let (kernel, center) = extended_kernel(plate, excitation, &grid, eval_time, 2)?;
    let disc = disc_kernel(plan.spot_diameter, grid.dx, grid.dy);
    let disc_center = (disc.nrows() / 2, disc.ncols() / 2);

    let frames: Vec<Array2<f32>> = plan
        .positions
        .par_iter()
        .enumerate()
        .map(|(m, &(x, y))| {
            let mut spot = grid.zeros();
            splat_bilinear(&grid, x, y, &mut spot);
            let external = convolve_same(&convolve_same(&spot, &disc, disc_center), &kernel, center);
            let peak = external.iter().copied().fold(0.0, f64::max);

            let mut frame = external.clone();
            if peak > 0.0 && defects.weights.iter().any(|&w| w != 0.0) {
                let internal_src = &defects.weights * &external.mapv(|v| v / peak);
                let internal = convolve_same(&convolve_same(&internal_src, &disc, disc_center), &kernel, center);
                frame += &internal;
            }
            add_noise(&mut frame, noise_sigma, &mut measurement_rng(seed, m as u64));
            frame.mapv(|v| v as f32)
        })
        .collect();

    Ok(MeasurementSet {
        grid,
        plate: *plate,
        excitation: *excitation,
        excitations: plan.clone(),
        eval_time,
        noise_sigma,
        frames: Frames::Slice(frames),
        provenance: Provenance::synthetic(seed),
    })
}

/// Time series under homogeneous full-surface heating, as a single
/// measurement. Each pixel is a point source of unit weight plus its defect
/// weight; sources spread with the `n_dim = 3` kernel. The uniform part is
/// the plane integral of the kernel per pixel area, which carries the
/// one-dimensional through-thickness decay.
pub fn simulate_flash_series(
    plate: &PlateSpec,
    excitation: &ExcitationTemporal,
    defects: &DefectMap,
    axis: TimeAxis,
    noise_sigma: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    let grid = defects.grid;
    defects.validate()?;
    if axis.n_t == 0 || !(axis.frame_rate > 0.0) || !(axis.t_start > 0.0) {
        return Err(Error::Parameter(format!(
            "time axis needs n_t >= 1, a positive frame rate and a positive start time, got {axis:?}"
        )));
    }
    let mut data = Array3::<f32>::zeros((axis.n_t, grid.n_y, grid.n_x));
    let slices: Vec<Array2<f64>> = (0..axis.n_t)
        .map(|k| -> Result<Array2<f64>> {
            let t = axis.time(k);
            let (kernel, center) = extended_kernel(plate, excitation, &grid, t, 3)?;
            let uniform = thermal::pulse_response(plate, excitation, 0.0, t, 1, thermal::DEFAULT_SERIES_TERMS)
                / (grid.dx * grid.dy);
            let mut frame = convolve_same(&defects.weights, &kernel, center);
            frame += uniform;
            Ok(frame)
        })
        .collect::<Result<_>>()?;
    let mut rng = measurement_rng(seed, 0);
    for (k, mut frame) in slices.into_iter().enumerate() {
        add_noise(&mut frame, noise_sigma, &mut rng);
        data.index_axis_mut(Axis(0), k).assign(&frame.mapv(|v| v as f32));
    }
    let roi = super::Rect::new(0.0, 0.0, grid.width(), grid.height());
    Ok(MeasurementSet {
        grid,
        plate: *plate,
        excitation: *excitation,
        excitations: ScanPlan {
            positions: Vec::new(),
            spot_diameter: 0.0,
            pitch: 0.0,
            rows: 0,
            roi,
            degenerate: false,
        },
        eval_time: axis.t_start,
        noise_sigma,
        frames: Frames::Series { axis, data: vec![data] },
        provenance: Provenance::synthetic(seed),
    })
}
