//! Synthetic experiments: defect phantoms, triangular scan plans, the
//! sequential-spot forward model and the excitation homogeneity check.

mod forward;
mod homogeneity;
mod plan;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::thermal::{ExcitationTemporal, PlateSpec};

pub use forward::{
    disc_kernel, forward_simulate, noise_sigma_for_snr, simulate_flash_series, splat_bilinear,
};
pub use homogeneity::{homogeneity_check, Footprint, HomogeneityReport, HOMOGENEITY_CV_LIMIT};
pub use plan::{plan_triangular_grid, required_measurements_2d};

/// Axis-aligned rectangle in metres. `(x, y)` is the lower corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Rect { x, y, width, height }
    }

    /// Rectangle covering whole pixels `[ix, ix + nx) x [iy, iy + ny)` of `grid`.
    pub fn from_pixels(grid: &Grid2D, ix: usize, iy: usize, nx: usize, ny: usize) -> Self {
        Rect {
            x: ix as f64 * grid.dx,
            y: iy as f64 * grid.dy,
            width: nx as f64 * grid.dx,
            height: ny as f64 * grid.dy,
        }
    }

    /// Whether a pixel node lies in `[x, x + width) x [y, y + height)`.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let eps = 1e-9 * (self.width.abs() + self.height.abs()).max(1e-12);
        px >= self.x - eps
            && px < self.x + self.width - eps
            && py >= self.y - eps
            && py < self.y + self.height - eps
    }

    /// Edge-to-edge distance between two rectangles (0 when they touch or overlap).
    pub fn gap(&self, other: &Rect) -> f64 {
        let gx = (other.x - (self.x + self.width)).max(self.x - (other.x + other.width)).max(0.0);
        let gy = (other.y - (self.y + self.height)).max(self.y - (other.y + other.height)).max(0.0);
        gx.hypot(gy)
    }

    pub fn is_empty(&self) -> bool {
        !(self.width > 0.0 && self.height > 0.0)
    }
}

/// Ground-truth internal apparent heat sources.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectMap {
    pub grid: Grid2D,
    /// Per-pixel weight in `[0, 1)`, shape `(n_y, n_x)`.
    pub weights: Array2<f64>,
    pub defect_rects: Vec<Rect>,
}

impl DefectMap {
    pub fn empty(grid: Grid2D) -> Self {
        DefectMap {
            grid,
            weights: grid.zeros(),
            defect_rects: Vec::new(),
        }
    }

    /// Rasterises rectangles of uniform weight onto `grid`.
    pub fn from_rects(grid: Grid2D, rects: &[(Rect, f64)]) -> Result<Self> {
        grid.validate()?;
        let mut weights = grid.zeros();
        for (i, (rect, zeta)) in rects.iter().enumerate() {
            if !(0.0..1.0).contains(zeta) {
                return Err(Error::Parameter(format!(
                    "defect {i}: zeta must lie in [0, 1), got {zeta}"
                )));
            }
            if rect.is_empty() {
                return Err(Error::Parameter(format!("defect {i}: rectangle has no area")));
            }
            let mut covered = 0;
            for ((iy, ix), w) in weights.indexed_iter_mut() {
                let (px, py) = grid.position(iy, ix);
                if rect.contains(px, py) {
                    *w = *zeta;
                    covered += 1;
                }
            }
            if covered == 0 {
                return Err(Error::Parameter(format!(
                    "defect {i}: rectangle covers no pixel node of the grid"
                )));
            }
        }
        let map = DefectMap {
            grid,
            weights,
            defect_rects: rects.iter().map(|(r, _)| *r).collect(),
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.check_field(&self.weights)?;
        for ((iy, ix), &w) in self.weights.indexed_iter() {
            if !(0.0..1.0).contains(&w) {
                return Err(Error::Parameter(format!(
                    "defect weight at ({iy}, {ix}) is {w}, outside [0, 1)"
                )));
            }
            if w != 0.0 {
                let (px, py) = self.grid.position(iy, ix);
                if !self.defect_rects.iter().any(|r| r.contains(px, py)) {
                    return Err(Error::Parameter(format!(
                        "defect weight at ({iy}, {ix}) lies outside every ground-truth rectangle"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Pixel mask of one ground-truth rectangle.
    pub fn rect_mask(&self, index: usize) -> Array2<bool> {
        let rect = self.defect_rects[index];
        Array2::from_shape_fn(self.grid.shape(), |(iy, ix)| {
            let (px, py) = self.grid.position(iy, ix);
            rect.contains(px, py)
        })
    }

    /// Union of all rectangle masks.
    pub fn truth_mask(&self) -> Array2<bool> {
        let mut mask = Array2::from_elem(self.grid.shape(), false);
        for i in 0..self.defect_rects.len() {
            mask.zip_mut_with(&self.rect_mask(i), |a, &b| *a |= b);
        }
        mask
    }

    /// Centroid (metres) of the pixel nodes covered by rectangle `index`.
    pub fn rect_centroid(&self, index: usize) -> (f64, f64) {
        let mask = self.rect_mask(index);
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for ((iy, ix), &m) in mask.indexed_iter() {
            if m {
                let (px, py) = self.grid.position(iy, ix);
                sx += px;
                sy += py;
                n += 1;
            }
        }
        if n == 0 {
            let r = self.defect_rects[index];
            return (r.x + 0.5 * r.width, r.y + 0.5 * r.height);
        }
        (sx / n as f64, sy / n as f64)
    }
}

/// Rectangular region of interest in metres.
pub type Roi = Rect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    /// Laser-spot centres in metres, in acquisition order.
    pub positions: Vec<(f64, f64)>,
    pub spot_diameter: f64,
    /// Lattice pitch `r_d`.
    pub pitch: f64,
    pub rows: usize,
    pub roi: Roi,
    /// Set when the pitch exceeded the ROI and a single central spot was planned.
    #[serde(default)]
    pub degenerate: bool,
}

impl ScanPlan {
    pub fn with_spot_diameter(mut self, spot_diameter: f64) -> Self {
        self.spot_diameter = spot_diameter;
        self
    }

    /// Moves every position (and the ROI) by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut plan = self.clone();
        for p in &mut plan.positions {
            p.0 += dx;
            p.1 += dy;
        }
        plan.roi.x += dx;
        plan.roi.y += dy;
        plan
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Sampling of a stored temperature time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub n_t: usize,
    pub frame_rate: f64,
    /// Time of the first sample, seconds after pulse onset.
    pub t_start: f64,
}

impl TimeAxis {
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 / self.frame_rate
    }

    /// Index of the sample at `t`, if one lies within a millionth of a frame period.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t_start) * self.frame_rate).round();
        if k < 0.0 || k >= self.n_t as f64 {
            return None;
        }
        let k = k as usize;
        ((self.time(k) - t).abs() * self.frame_rate < 1e-6).then_some(k)
    }
}

/// Per-measurement temperature increase `T_diff`, either one frame at the
/// evaluation time or a full time series.
#[derive(Debug, Clone, PartialEq)]
pub enum Frames {
    Slice(Vec<Array2<f32>>),
    Series { axis: TimeAxis, data: Vec<Array3<f32>> },
}

/// Provenance recorded alongside a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    /// Generator name and version, or `"experimental"`.
    pub generator: String,
}

impl Provenance {
    pub fn synthetic(seed: u64) -> Self {
        Provenance {
            seed: Some(seed),
            generator: format!("psr-core {}", env!("CARGO_PKG_VERSION")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub grid: Grid2D,
    pub plate: PlateSpec,
    pub excitation: ExcitationTemporal,
    pub excitations: ScanPlan,
    pub eval_time: f64,
    pub noise_sigma: f64,
    pub frames: Frames,
    pub provenance: Provenance,
}

impl MeasurementSet {
    pub fn n_m(&self) -> usize {
        match &self.frames {
            Frames::Slice(f) => f.len(),
            Frames::Series { data, .. } => data.len(),
        }
    }

    pub fn time_axis(&self) -> Option<TimeAxis> {
        match &self.frames {
            Frames::Slice(_) => None,
            Frames::Series { axis, .. } => Some(*axis),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.grid.shape();
        match &self.frames {
            Frames::Slice(frames) => {
                for (m, f) in frames.iter().enumerate() {
                    if f.dim() != shape {
                        return Err(Error::shape(
                            format!("frame {m} of shape {shape:?}"),
                            format!("{:?}", f.dim()),
                        ));
                    }
                }
            }
            Frames::Series { axis, data } => {
                for (m, s) in data.iter().enumerate() {
                    if s.dim() != (axis.n_t, shape.0, shape.1) {
                        return Err(Error::shape(
                            format!("series {m} of shape {:?}", (axis.n_t, shape.0, shape.1)),
                            format!("{:?}", s.dim()),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Frames at time `t` as `f64`, one per measurement.
    pub fn slice_at(&self, t: f64) -> Result<Vec<Array2<f64>>> {
        match &self.frames {
            Frames::Slice(frames) => {
                if (t - self.eval_time).abs() > 1e-9 * self.eval_time.abs().max(1.0) {
                    return Err(Error::MissingSlice(format!(
                        "dataset holds only t = {} s, requested {t} s",
                        self.eval_time
                    )));
                }
                Ok(frames.iter().map(|f| f.mapv(f64::from)).collect())
            }
            Frames::Series { axis, data } => {
                let k = axis.index_of(t).ok_or_else(|| {
                    Error::MissingSlice(format!(
                        "no sample at t = {t} s in a series of {} frames at {} Hz from {} s",
                        axis.n_t, axis.frame_rate, axis.t_start
                    ))
                })?;
                Ok(data
                    .iter()
                    .map(|s| s.index_axis(Axis(0), k).mapv(f64::from))
                    .collect())
            }
        }
    }

    /// Frames at the dataset's own evaluation time.
    pub fn eval_frames(&self) -> Result<Vec<Array2<f64>>> {
        self.slice_at(self.eval_time)
    }

    /// Time series of measurement `m` as `f64` `[n_t, n_y, n_x]`.
    pub fn series(&self, m: usize) -> Option<Array3<f64>> {
        match &self.frames {
            Frames::Slice(_) => None,
            Frames::Series { data, .. } => data.get(m).map(|s| s.mapv(f64::from)),
        }
    }
}
