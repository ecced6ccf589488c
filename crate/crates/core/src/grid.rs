use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular pixel grid. Pixel `(iy, ix)` sits at `(ix * dx, iy * dy)` metres;
/// 2-D arrays on the grid are stored row-major with shape `(n_y, n_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub n_x: usize,
    pub n_y: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid2D {
    pub fn new(n_x: usize, n_y: usize, dx: f64, dy: f64) -> Result<Self> {
        let grid = Grid2D { n_x, n_y, dx, dy };
        grid.validate()?;
        Ok(grid)
    }

    /// Square pixels of pitch `pitch`.
    pub fn square(n_x: usize, n_y: usize, pitch: f64) -> Result<Self> {
        Self::new(n_x, n_y, pitch, pitch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(Error::Parameter(format!(
                "grid must have at least one pixel, got {}x{}",
                self.n_x, self.n_y
            )));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dx.is_finite() && self.dy.is_finite()) {
            return Err(Error::Parameter(format!(
                "pixel pitch must be positive, got dx={} dy={}",
                self.dx, self.dy
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_y, self.n_x)
    }

    pub fn width(&self) -> f64 {
        (self.n_x - 1) as f64 * self.dx
    }

    pub fn height(&self) -> f64 {
        (self.n_y - 1) as f64 * self.dy
    }

    /// Position of the centre node used for kernels, `(floor(n_x/2), floor(n_y/2))`.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.n_x / 2) as f64 * self.dx,
            (self.n_y / 2) as f64 * self.dy,
        )
    }

    pub fn position(&self, iy: usize, ix: usize) -> (f64, f64) {
        (ix as f64 * self.dx, iy as f64 * self.dy)
    }

    /// True when `(x, y)` lies inside the grid extent (node to node).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-9;
        x >= -tol && y >= -tol && x <= self.width() + tol && y <= self.height() + tol
    }

    pub fn zeros(&self) -> Array2<f64> {
        Array2::zeros(self.shape())
    }

    pub(crate) fn check_field<T>(&self, field: &Array2<T>) -> Result<()> {
        if field.dim() != self.shape() {
            return Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", field.dim()),
            ));
        }
        Ok(())
    }
}
