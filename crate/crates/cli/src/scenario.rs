//! Synthetic scenario files (TOML) for `psr synth`.

use std::ops::Range;

use psr_core::phantom::{
    forward_simulate, noise_sigma_for_snr, plan_triangular_grid, simulate_flash_series, Rect, ScanPlan, TimeAxis,
};
use psr_core::{DefectMap, ExcitationTemporal, Grid2D, MeasurementSet, PlateSpec};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::units::{Length, Time};

/// Scenarios shipped with the binary, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("pairs-gap-sweep", include_str!("../scenarios/pairs-gap-sweep.toml")),
    ("flash-pairs", include_str!("../scenarios/flash-pairs.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub grid: GridSpec,
    #[serde(default)]
    pub plate: PlateSection,
    pub excitation: ExcitationSpec,
    pub acquisition: Acquisition,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
    #[serde(default, rename = "defect")]
    pub defects: Vec<DefectSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_x: usize,
    pub n_y: usize,
    pub pitch: Length,
}

/// Defaults to the 316L plate; any field given overrides it.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateSection {
    pub thickness: Option<Length>,
    /// m²/s
    pub diffusivity: Option<f64>,
    /// W/(m K)
    pub conductivity: Option<f64>,
    /// kg/m³
    pub density: Option<f64>,
    /// J/(kg K)
    pub heat_capacity: Option<f64>,
    pub reflection_coeff: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSpec {
    pub pulse_duration: Time,
    /// W; in flash mode, the power absorbed by each pixel.
    pub peak_power: f64,
    /// Hz
    pub frame_rate: f64,
    #[serde(default)]
    pub spot_diameter: Option<Length>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One frame per laser-spot position at `eval_time`.
    Spots,
    /// Homogeneous flash heating, one full time series.
    Flash,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    pub mode: Mode,
    #[serde(default)]
    pub eval_time: Option<Time>,
    /// Noise relative to the peak of the clean frames, 20 log10 amplitude ratio.
    #[serde(default)]
    pub snr_db: Option<Spanned<f64>>,
    /// Absolute noise standard deviation, K.
    #[serde(default)]
    pub noise_sigma: Option<Spanned<f64>>,
    /// Flash mode: number of frames.
    #[serde(default)]
    pub n_t: Option<usize>,
    /// Flash mode: time of the first frame.
    #[serde(default)]
    pub t_start: Option<Time>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub roi: RoiSpec,
    /// Lattice side `r_d`.
    pub pitch: Length,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSpec {
    pub x: Length,
    pub y: Length,
    pub width: Length,
    pub height: Length,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpec {
    pub x: Length,
    pub y: Length,
    pub width: Length,
    pub height: Length,
    pub zeta: Spanned<f64>,
}

/// A validation failure pointing at a field and, when known, a line.
#[derive(Debug)]
pub struct Diagnostic {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

/// Everything `synth` needs, checked.
#[derive(Debug)]
pub struct Built {
    pub truth: DefectMap,
    pub plate: PlateSpec,
    pub excitation: ExcitationTemporal,
    pub plan: Option<ScanPlan>,
    pub mode: Mode,
    pub seed: u64,
}

impl Scenario {
    /// Parses and validates `text`. Syntax and schema errors come back as a
    /// single message from the TOML reader, which names line and field.
    pub fn parse(text: &str) -> Result<Self, Vec<Diagnostic>> {
        toml::from_str(text).map_err(|e| {
            vec![Diagnostic {
                field: "<file>".into(),
                line: e.span().map(|s| line_of(text, s)),
                message: e.message().to_string(),
            }]
        })
    }

    pub fn build(&self, text: &str) -> Result<Built, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let mut bad = |field: String, line: Option<usize>, message: String| {
            diags.push(Diagnostic { field, line, message });
        };

        let grid = Grid2D::square(self.grid.n_x, self.grid.n_y, self.grid.pitch.0);
        if let Err(e) = &grid {
            bad("grid".into(), None, e.to_string());
        }

        let base = PlateSpec::steel_316l();
        let p = &self.plate;
        let diffusivity = p.diffusivity.unwrap_or(base.diffusivity);
        let density = p.density.unwrap_or(base.density);
        let heat_capacity = p.heat_capacity.unwrap_or(base.heat_capacity);
        let plate = PlateSpec {
            thickness: p.thickness.map_or(base.thickness, |l| l.0),
            diffusivity,
            // a changed diffusivity without a conductivity keeps the plate consistent
            conductivity: p.conductivity.unwrap_or(
                if (diffusivity, density, heat_capacity) == (base.diffusivity, base.density, base.heat_capacity) {
                    base.conductivity
                } else {
                    diffusivity * density * heat_capacity
                },
            ),
            density,
            heat_capacity,
            reflection_coeff: p.reflection_coeff.unwrap_or(base.reflection_coeff),
        };
        if let Err(e) = plate.validate() {
            bad("plate".into(), None, e.to_string());
        }

        let excitation = ExcitationTemporal {
            pulse_duration: self.excitation.pulse_duration.0,
            peak_power: self.excitation.peak_power,
            frame_rate: self.excitation.frame_rate,
        };
        if let Err(e) = excitation.validate() {
            bad("excitation".into(), None, e.to_string());
        }

        let acq = &self.acquisition;
        if let (Some(a), Some(_)) = (&acq.snr_db, &acq.noise_sigma) {
            bad(
                "acquisition.noise_sigma".into(),
                Some(line_of(text, a.span())),
                "give either snr_db or noise_sigma, not both".into(),
            );
        }
        if let Some(s) = &acq.noise_sigma {
            if !(*s.get_ref() >= 0.0) {
                bad("acquisition.noise_sigma".into(), Some(line_of(text, s.span())), format!("must be >= 0, got {}", s.get_ref()));
            }
        }
        if let Some(s) = &acq.snr_db {
            if !s.get_ref().is_finite() {
                bad("acquisition.snr_db".into(), Some(line_of(text, s.span())), "must be finite".into());
            }
        }
        match acq.mode {
            Mode::Spots => {
                if acq.eval_time.is_none() {
                    bad("acquisition.eval_time".into(), None, "required in spots mode".into());
                }
                if self.scan.is_none() {
                    bad("scan".into(), None, "a [scan] table is required in spots mode".into());
                }
                if self.excitation.spot_diameter.is_none() {
                    bad("excitation.spot_diameter".into(), None, "required in spots mode".into());
                }
            }
            Mode::Flash => {
                if acq.n_t.is_none_or(|n| n == 0) {
                    bad("acquisition.n_t".into(), None, "flash mode needs n_t >= 1".into());
                }
                if acq.t_start.is_none_or(|t| !(t.0 > 0.0)) {
                    bad("acquisition.t_start".into(), None, "flash mode needs a positive t_start".into());
                }
            }
        }

        let mut rects = Vec::new();
        for (i, d) in self.defects.iter().enumerate() {
            let z = *d.zeta.get_ref();
            if !(0.0..1.0).contains(&z) {
                let why = if z < 0.0 {
                    "apparent heat sinks (negative zeta) are not allowed in phantoms; zeta must lie in [0, 1)"
                } else {
                    "zeta must lie in [0, 1)"
                };
                bad(format!("defect[{i}].zeta"), Some(line_of(text, d.zeta.span())), format!("{why}, got {z}"));
                continue;
            }
            rects.push((Rect::new(d.x.0, d.y.0, d.width.0, d.height.0), z));
        }

        let truth = match &grid {
            Ok(g) if diags.is_empty() => {
                if rects.is_empty() {
                    Ok(DefectMap::empty(*g))
                } else {
                    DefectMap::from_rects(*g, &rects)
                }
            }
            _ => return Err(diags),
        };
        let truth = truth.map_err(|e| vec![Diagnostic { field: "defect".into(), line: None, message: e.to_string() }])?;

        let plan = match (&self.scan, acq.mode) {
            (Some(s), Mode::Spots) => {
                let roi = Rect::new(s.roi.x.0, s.roi.y.0, s.roi.width.0, s.roi.height.0);
                let plan = plan_triangular_grid(roi, s.pitch.0)
                    .map_err(|e| vec![Diagnostic { field: "scan".into(), line: None, message: e.to_string() }])?;
                Some(plan.with_spot_diameter(self.excitation.spot_diameter.map_or(0.0, |l| l.0)))
            }
            _ => None,
        };

        Ok(Built { truth, plate, excitation, plan, mode: acq.mode, seed: self.seed })
    }
}

impl Built {
    /// Runs the forward model, resolving `snr_db` against the clean frames.
    pub fn simulate(&self, acq: &Acquisition) -> psr_core::Result<MeasurementSet> {
        let run = |sigma: f64| match self.mode {
            Mode::Spots => forward_simulate(
                &self.plate,
                &self.excitation,
                self.plan.as_ref().expect("spots mode has a plan"),
                &self.truth,
                acq.eval_time.expect("checked").0,
                sigma,
                self.seed,
            ),
            Mode::Flash => simulate_flash_series(
                &self.plate,
                &self.excitation,
                &self.truth,
                TimeAxis {
                    n_t: acq.n_t.expect("checked"),
                    frame_rate: self.excitation.frame_rate,
                    t_start: acq.t_start.expect("checked").0,
                },
                sigma,
                self.seed,
            ),
        };
        if let Some(s) = &acq.noise_sigma {
            return run(*s.get_ref());
        }
        match &acq.snr_db {
            None => run(0.0),
            Some(db) => {
                let clean = run(0.0)?;
                let peak = match &clean.frames {
                    psr_core::phantom::Frames::Slice(f) => f.iter().flat_map(|a| a.iter()).fold(0f32, |m, v| m.max(*v)),
                    psr_core::phantom::Frames::Series { data, .. } => {
                        data.iter().flat_map(|a| a.iter()).fold(0f32, |m, v| m.max(*v))
                    }
                };
                run(noise_sigma_for_snr(peak as f64, *db.get_ref()))
            }
        }
    }
}
