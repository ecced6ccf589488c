//! Phantoms shared by the integration tests.
#![allow(dead_code)]

use psr_core::phantom::{
    forward_simulate, noise_sigma_for_snr, plan_triangular_grid, Rect, ScanPlan,
};
use psr_core::thermal::{fwhm_diameter, synth_centered_psf};
use psr_core::*;

/// 316L plate, a short low-power pulse and the 0.5 s slice. The pixel pitch
/// puts eight pixels across the thermal footprint.
pub struct Desk {
    pub plate: PlateSpec,
    pub excitation: ExcitationTemporal,
    pub eval_time: f64,
    pub dx: f64,
}

pub fn desk() -> Desk {
    let plate = PlateSpec::steel_316l();
    let eval_time = 0.5;
    Desk {
        plate,
        excitation: ExcitationTemporal { pulse_duration: 0.05, peak_power: 15.0, frame_rate: 100.0 },
        eval_time,
        dx: fwhm_diameter(&plate, eval_time).unwrap() / 8.0,
    }
}

pub struct Phantom {
    pub truth: DefectMap,
    pub plan: ScanPlan,
    pub data: MeasurementSet,
    pub psf: PsfField,
}

/// Triangular plan of pitch `rd_px` whose lattice has `rows` rows of `cols`
/// spots, centred on pixel coordinates `(cx, cy)`.
pub fn lattice(d: &Desk, rd_px: f64, rows: usize, cols: usize, cx: f64, cy: f64, spot_px: f64) -> ScanPlan {
    // widths chosen strictly between the lattice breakpoints
    let w = (cols as f64 - 0.4) * rd_px;
    let h = ((rows - 1) as f64 * 0.75f64.sqrt() + 0.1) * rd_px;
    let roi = Rect::new((cx - 0.5 * w) * d.dx, (cy - 0.5 * h) * d.dx, w * d.dx, h * d.dx);
    plan_triangular_grid(roi, rd_px * d.dx).unwrap().with_spot_diameter(spot_px * d.dx)
}

pub fn simulate(d: &Desk, truth: DefectMap, plan: ScanPlan, snr_db: Option<f64>, seed: u64) -> Phantom {
    let sigma = match snr_db {
        Some(db) => {
            let clean = forward_simulate(&d.plate, &d.excitation, &plan, &truth, d.eval_time, 0.0, seed).unwrap();
            let peak = clean.eval_frames().unwrap().iter().flat_map(|f| f.iter().copied()).fold(0.0, f64::max);
            noise_sigma_for_snr(peak, db)
        }
        None => 0.0,
    };
    let data = forward_simulate(&d.plate, &d.excitation, &plan, &truth, d.eval_time, sigma, seed).unwrap();
    let psf = synth_centered_psf(&d.plate, &d.excitation, &truth.grid, d.eval_time).unwrap();
    Phantom { truth, plan, data, psf }
}

/// 64x16 grid, four 6x12 px defects forming a pair with a 1 px gap and a pair
/// with a 4 px gap, 24 spots on a 3 x 8 lattice of pitch 4 px, 40 dB.
pub fn pairs_phantom(seed: u64) -> Phantom {
    let d = desk();
    let grid = Grid2D::square(64, 16, d.dx).unwrap();
    let rect = |x| (Rect::from_pixels(&grid, x, 2, 6, 12), 0.5);
    let truth = DefectMap::from_rects(grid, &[rect(14), rect(21), rect(30), rect(40)]).unwrap();
    let plan = lattice(&d, 4.0, 3, 8, 29.0, 7.5, 1.5);
    simulate(&d, truth, plan, Some(40.0), seed)
}

pub fn pairs_config() -> ReconConfig {
    ReconConfig {
        lambda_21: 0.2,
        lambda_2: 5e-4,
        rho: 3e-2,
        n_iter: 400,
        eval_time: desk().eval_time,
        ..ReconConfig::default()
    }
}

/// 32x32 grid with all sources inside the central 12x12 px, so the frames
/// have decayed to a negligible level at the borders and circular and
/// linear convolution agree.
pub fn padded_phantom(seed: u64) -> Phantom {
    let d = desk();
    let grid = Grid2D::square(32, 32, d.dx).unwrap();
    let truth = DefectMap::from_rects(
        grid,
        &[(Rect::from_pixels(&grid, 12, 13, 3, 6), 0.5), (Rect::from_pixels(&grid, 18, 13, 3, 6), 0.5)],
    )
    .unwrap();
    let plan = lattice(&d, 4.0, 3, 3, 16.0, 16.0, 1.5);
    simulate(&d, truth, plan, Some(40.0), seed)
}

/// `n x n` grid with 16 spots on a 4 x 4 lattice around the centre and one defect.
pub fn timing_fixture(n: usize) -> Phantom {
    let d = desk();
    let grid = Grid2D::square(n, n, d.dx).unwrap();
    let c = n / 2;
    let truth = DefectMap::from_rects(grid, &[(Rect::from_pixels(&grid, c - 2, c - 2, 4, 4), 0.5)]).unwrap();
    let plan = lattice(&d, 3.0, 4, 4, c as f64, c as f64, 1.5);
    simulate(&d, truth, plan, Some(40.0), 1)
}

pub fn pearson(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Shared by both methods on [`padded_phantom`]; no edge taper since the
/// frames already vanish at the borders.
pub fn padded_config() -> ReconConfig {
    ReconConfig { lambda_21: 0.2, lambda_2: 3e-3, rho: 0.1, taper: false, ..pairs_config() }
}
