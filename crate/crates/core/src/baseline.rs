//! Conventional references: difference thermogram and pulse-phase
//! thermography (PPT).

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `data - reference`, elementwise.
pub fn difference_thermogram(data: &Array2<f64>, reference: &Array2<f64>) -> Result<Array2<f64>> {
    if data.dim() != reference.dim() {
        return Err(Error::shape(format!("{:?}", data.dim()), format!("{:?}", reference.dim())));
    }
    Ok(data - reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PptWindow {
    #[default]
    None,
    /// `cos(pi t / (2 (n_t - 1)))`, falling from 1 at the first sample to 0 at the last.
    HalfCosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PptResult {
    /// Single-sided amplitude `2 |X_k| / n_t` (`|X_k| / n_t` at DC and Nyquist).
    pub amplitude: Array2<f64>,
    /// `arg X_k` in `(-pi, pi]`.
    pub phase: Array2<f64>,
    /// Frequency of the bin actually used, Hz.
    pub frequency: f64,
    pub bin: usize,
}

/// Per-pixel temporal DFT of `data` (`[n_t, n_y, n_x]`) evaluated at the bin
/// nearest to `frequency`, without windowing.
pub fn ppt(data: &Array3<f64>, frame_rate: f64, frequency: f64) -> Result<PptResult> {
    ppt_windowed(data, frame_rate, frequency, PptWindow::None)
}

pub fn ppt_windowed(data: &Array3<f64>, frame_rate: f64, frequency: f64, window: PptWindow) -> Result<PptResult> {
    let n_t = data.len_of(Axis(0));
    if n_t < 2 {
        return Err(Error::Parameter(format!("ppt needs at least 2 samples, got {n_t}")));
    }
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(Error::Parameter(format!("frame rate must be positive, got {frame_rate}")));
    }
    if !(frequency >= 0.0) || frequency > 0.5 * frame_rate {
        return Err(Error::Parameter(format!(
            "frequency {frequency} Hz is outside [0, {}] Hz (Nyquist)",
            0.5 * frame_rate
        )));
    }
    let bin = ((frequency * n_t as f64 / frame_rate).round() as usize).min(n_t / 2);

    // twiddles with the argument reduced mod n_t to keep them exact-ish
    let weights: Vec<(f64, f64)> = (0..n_t)
        .map(|t| {
            let w = match window {
                PptWindow::None => 1.0,
                PptWindow::HalfCosine => (0.5 * PI * t as f64 / (n_t - 1) as f64).cos(),
            };
            let angle = -2.0 * PI * ((bin * t) % n_t) as f64 / n_t as f64;
            (w * angle.cos(), w * angle.sin())
        })
        .collect();
    let one_sided = bin != 0 && 2 * bin != n_t;
    let norm = if one_sided { 2.0 } else { 1.0 } / n_t as f64;

    let (_, ny, nx) = data.dim();
    let mut amplitude = Array2::zeros((ny, nx));
    let mut phase = Array2::zeros((ny, nx));
    Zip::from(&mut amplitude)
        .and(&mut phase)
        .and(data.lanes(Axis(0)))
        .for_each(|a, p, lane| {
            let (mut re, mut im) = (0.0, 0.0);
            for (&v, &(c, s)) in lane.iter().zip(&weights) {
                re += v * c;
                im += v * s;
            }
            *a = norm * re.hypot(im);
            let phi = im.atan2(re);
            *p = if phi <= -PI { PI } else { phi };
        });

    Ok(PptResult {
        amplitude,
        phase,
        frequency: bin as f64 * frame_rate / n_t as f64,
        bin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n_t: usize, rate: f64, f: f64, amp: f64, phi: f64) -> Array3<f64> {
        Array3::from_shape_fn((n_t, 2, 3), |(t, y, x)| {
            amp * (1.0 + 0.1 * (y + x) as f64) * (2.0 * PI * f * t as f64 / rate + phi).cos()
        })
    }

    #[test]
    fn single_tone_identity() {
        // 10 s record: 0.1 Hz falls exactly on bin 1
        let data = tone(1000, 100.0, 0.1, 2.0, 0.3);
        let r = ppt(&data, 100.0, 0.1).unwrap();
        assert_eq!(r.bin, 1);
        assert!((r.frequency - 0.1).abs() < 1e-15);
        assert!((r.amplitude[[0, 0]] - 2.0).abs() < 1e-9);
        assert!((r.amplitude[[1, 2]] - 2.6).abs() < 1e-9);
        assert!(r.phase.iter().all(|p| (p - 0.3).abs() < 1e-9));
    }

    #[test]
    fn nearest_bin_reported() {
        let data = tone(64, 10.0, 1.0, 1.0, 0.0);
        let r = ppt(&data, 10.0, 0.1).unwrap();
        assert_eq!(r.bin, 1);
        assert!((r.frequency - 10.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn constant_series_has_no_ac_amplitude() {
        let data = Array3::from_elem((50, 3, 3), 4.2);
        let r = ppt(&data, 25.0, 1.0).unwrap();
        assert!(r.amplitude.iter().all(|a| a.abs() < 1e-12));
        let dc = ppt(&data, 25.0, 0.0).unwrap();
        assert!(dc.amplitude.iter().all(|a| (a - 4.2).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_arguments() {
        let data = Array3::zeros((10, 2, 2));
        assert!(ppt(&data, 10.0, 5.1).is_err());
        assert!(ppt(&data, 10.0, -1.0).is_err());
        assert!(ppt(&Array3::zeros((1, 2, 2)), 10.0, 1.0).is_err());
        assert!(ppt(&data, 0.0, 0.0).is_err());
    }

    #[test]
    fn phase_range() {
        // a pure -cos has phase pi, never -pi
        let data = tone(40, 40.0, 4.0, -1.0, 0.0);
        let r = ppt(&data, 40.0, 4.0).unwrap();
        assert!(r.phase.iter().all(|p| (p - PI).abs() < 1e-9 && *p > -PI));
    }

    #[test]
    fn window_changes_only_scaling_of_a_constant_lane() {
        let data = tone(128, 32.0, 2.0, 1.0, 0.4);
        let r = ppt_windowed(&data, 32.0, 2.0, PptWindow::HalfCosine).unwrap();
        assert!(r.amplitude.iter().all(|a| *a > 0.0 && *a < 2.6));
    }

    #[test]
    fn difference() {
        let a = Array2::from_shape_fn((3, 4), |(y, x)| (y * 4 + x) as f64);
        assert!(difference_thermogram(&a, &a).unwrap().iter().all(|v| *v == 0.0));
        assert!(difference_thermogram(&a, &Array2::zeros((4, 3))).is_err());
    }
}
