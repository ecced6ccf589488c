//! On-disk formats.
//!
//! A dataset is a directory:
//!
//! ```text
//! manifest.json          structured metadata, see DatasetManifest
//! frames/m00000.f32      one payload per measurement
//! frames/m00001.f32
//! ...
//! truth.json             optional ground-truth sidecar (synthetic data)
//! ```
//!
//! Payloads are raw little-endian IEEE-754 binary32, row-major with x
//! fastest: a slice dataset stores `n_y * n_x` values per file, a series
//! dataset `n_t * n_y * n_x` (time slowest). There is no header. Writers hold
//! `.lock` in the directory for the duration of the write.
//!
//! Reconstructions are stored the same way with binary64 payloads
//! (`a_rec.f64`, optional `maps/m00000.f64`) next to `result.json`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::phantom::{DefectMap, Frames, MeasurementSet, Provenance, Rect, ScanPlan, TimeAxis};
use crate::recon::{Method, ReconResult};
use crate::solver::{LCurveSelection, ReconConfig, SolveDiagnostics};
use crate::thermal::{ExcitationTemporal, PlateSpec};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const RESULT_FILE: &str = "result.json";
pub const LOCK_FILE: &str = ".lock";
const FRAMES_DIR: &str = "frames";
const MAPS_DIR: &str = "maps";
const A_REC_FILE: &str = "a_rec.f64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationManifest {
    pub pulse_duration: f64,
    pub peak_power: f64,
    pub frame_rate: f64,
    pub spot_diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub grid: Grid2D,
    pub n_m: usize,
    pub eval_time: f64,
    /// Present for time-series datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_axis: Option<TimeAxis>,
    pub plate: PlateSpec,
    pub excitation: ExcitationManifest,
    pub scan: ScanPlan,
    pub noise_sigma: f64,
    pub provenance: Provenance,
}

impl DatasetManifest {
    pub fn from_set(set: &MeasurementSet) -> Self {
        DatasetManifest {
            format_version: FORMAT_VERSION,
            grid: set.grid,
            n_m: set.n_m(),
            eval_time: set.eval_time,
            time_axis: set.time_axis(),
            plate: set.plate,
            excitation: ExcitationManifest {
                pulse_duration: set.excitation.pulse_duration,
                peak_power: set.excitation.peak_power,
                frame_rate: set.excitation.frame_rate,
                spot_diameter: set.excitations.spot_diameter,
            },
            scan: set.excitations.clone(),
            noise_sigma: set.noise_sigma,
            provenance: set.provenance.clone(),
        }
    }

    /// Values per payload file.
    pub fn frame_len(&self) -> usize {
        self.grid.len() * self.time_axis.map_or(1, |a| a.n_t)
    }

    pub fn excitation_temporal(&self) -> ExcitationTemporal {
        ExcitationTemporal {
            pulse_duration: self.excitation.pulse_duration,
            peak_power: self.excitation.peak_power,
            frame_rate: self.excitation.frame_rate,
        }
    }
}

pub fn frame_path(dir: &Path, m: usize) -> PathBuf {
    dir.join(FRAMES_DIR).join(format!("m{m:05}.f32"))
}

fn corrupt(file: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptDataset { file: file.to_path_buf(), reason: reason.into() }
}

/// Exclusive writer lock on a directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    // temp file + rename so readers never see half a manifest
    let tmp = path.with_extension("json.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_f32(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn write_f64(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads exactly `n` little-endian binary64 values from `path`.
fn read_f64(path: &Path, n: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| corrupt(path, format!("cannot read payload: {e}")))?;
    if bytes.len() != n * 8 {
        return Err(corrupt(path, format!("payload holds {} bytes, expected {}", bytes.len(), n * 8)));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Writes `set` into directory `path`, creating it if needed.
pub fn write_dataset(set: &MeasurementSet, path: &Path) -> Result<DatasetManifest> {
    set.validate()?;
    fs::create_dir_all(path.join(FRAMES_DIR))?;
    let _lock = DirLock::acquire(path)?;
    let manifest = DatasetManifest::from_set(set);

    // drop payloads of a previous, larger dataset in the same place
    if let Ok(old) = fs::read_dir(path.join(FRAMES_DIR)) {
        for entry in old.flatten() {
            fs::remove_file(entry.path())?;
        }
    }
    match &set.frames {
        Frames::Slice(frames) => {
            for (m, f) in frames.iter().enumerate() {
                write_f32(&frame_path(path, m), f.iter().copied())?;
            }
        }
        Frames::Series { data, .. } => {
            for (m, s) in data.iter().enumerate() {
                write_f32(&frame_path(path, m), s.iter().copied())?;
            }
        }
    }
    write_json(&path.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Streaming access to a dataset directory. Opening validates the manifest
/// and every payload size; frames are read one at a time.
#[derive(Debug, Clone)]
pub struct DatasetReader {
    dir: PathBuf,
    manifest: DatasetManifest,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        if path.join(LOCK_FILE).exists() {
            return Err(Error::Locked(path.join(LOCK_FILE)));
        }
        let manifest_path = path.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| corrupt(&manifest_path, format!("cannot read manifest: {e}")))?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| corrupt(&manifest_path, e.to_string()))?;
        // check the version before the schema so a future layout reports as such
        let found = raw.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| {
            corrupt(&manifest_path, "missing or non-integer format_version")
        })?;
        if found != FORMAT_VERSION as u64 {
            return Err(Error::Version { found: found.min(u32::MAX as u64) as u32, expected: FORMAT_VERSION });
        }
        let manifest: DatasetManifest =
            serde_json::from_value(raw).map_err(|e| corrupt(&manifest_path, e.to_string()))?;
        manifest.grid.validate().map_err(|e| corrupt(&manifest_path, e.to_string()))?;
        // full-surface heating: one measurement, no spot positions
        let flash = manifest.scan.is_empty() && manifest.n_m == 1;
        if manifest.scan.len() != manifest.n_m && !flash {
            return Err(corrupt(
                &manifest_path,
                format!("n_m = {} but the scan lists {} positions", manifest.n_m, manifest.scan.len()),
            ));
        }
        if let Some(axis) = manifest.time_axis {
            if axis.n_t < 1 || !(axis.frame_rate > 0.0) {
                return Err(corrupt(&manifest_path, "time axis needs n_t >= 1 and a positive frame rate"));
            }
        }

        let expected = (manifest.frame_len() * 4) as u64;
        for m in 0..manifest.n_m {
            let p = frame_path(path, m);
            let len = fs::metadata(&p).map_err(|_| corrupt(&p, "payload file is missing"))?.len();
            if len != expected {
                return Err(corrupt(&p, format!("payload holds {len} bytes, manifest implies {expected}")));
            }
        }
        let extra = frame_path(path, manifest.n_m);
        if extra.exists() {
            return Err(corrupt(&extra, format!("payload beyond the declared n_m = {}", manifest.n_m)));
        }
        Ok(DatasetReader { dir: path.to_path_buf(), manifest })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn n_m(&self) -> usize {
        self.manifest.n_m
    }

    fn read_values(&self, m: usize, offset: usize, n: usize) -> Result<Vec<f32>> {
        if m >= self.manifest.n_m {
            return Err(Error::Parameter(format!("measurement {m} out of range (n_m = {})", self.manifest.n_m)));
        }
        let p = frame_path(&self.dir, m);
        let mut f = BufReader::new(File::open(&p).map_err(|e| corrupt(&p, e.to_string()))?);
        f.seek(SeekFrom::Start((offset * 4) as u64))?;
        let mut bytes = vec![0u8; n * 4];
        f.read_exact(&mut bytes).map_err(|e| corrupt(&p, format!("short payload: {e}")))?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    /// Whole payload of measurement `m` (one frame, or one full series).
    pub fn payload(&self, m: usize) -> Result<Vec<f32>> {
        self.read_values(m, 0, self.manifest.frame_len())
    }

    /// Frame of measurement `m` at time `t`, reading only that frame.
    pub fn frame_at(&self, m: usize, t: f64) -> Result<Array2<f32>> {
        let grid = self.manifest.grid;
        let k = match self.manifest.time_axis {
            None => {
                let te = self.manifest.eval_time;
                if (t - te).abs() > 1e-9 * te.abs().max(1.0) {
                    return Err(Error::MissingSlice(format!("dataset holds only t = {te} s, requested {t} s")));
                }
                0
            }
            Some(axis) => axis.index_of(t).ok_or_else(|| {
                Error::MissingSlice(format!(
                    "no sample at t = {t} s in a series of {} frames at {} Hz from {} s",
                    axis.n_t, axis.frame_rate, axis.t_start
                ))
            })?,
        };
        let v = self.read_values(m, k * grid.len(), grid.len())?;
        Ok(Array2::from_shape_vec(grid.shape(), v).expect("length checked"))
    }

    /// Every measurement at time `t` as `f64`.
    pub fn slice_at(&self, t: f64) -> Result<Vec<Array2<f64>>> {
        (0..self.n_m()).map(|m| self.frame_at(m, t).map(|f| f.mapv(f64::from))).collect()
    }

    pub fn read_all(&self) -> Result<MeasurementSet> {
        let grid = self.manifest.grid;
        let frames = match self.manifest.time_axis {
            None => Frames::Slice(
                (0..self.n_m())
                    .map(|m| Ok(Array2::from_shape_vec(grid.shape(), self.payload(m)?).expect("length checked")))
                    .collect::<Result<_>>()?,
            ),
            Some(axis) => Frames::Series {
                axis,
                data: (0..self.n_m())
                    .map(|m| {
                        Ok(Array3::from_shape_vec((axis.n_t, grid.n_y, grid.n_x), self.payload(m)?)
                            .expect("length checked"))
                    })
                    .collect::<Result<_>>()?,
            },
        };
        Ok(MeasurementSet {
            grid,
            plate: self.manifest.plate,
            excitation: self.manifest.excitation_temporal(),
            excitations: self.manifest.scan.clone(),
            eval_time: self.manifest.eval_time,
            noise_sigma: self.manifest.noise_sigma,
            frames,
            provenance: self.manifest.provenance.clone(),
        })
    }
}

pub fn read_dataset(path: &Path) -> Result<MeasurementSet> {
    DatasetReader::open(path)?.read_all()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDefect {
    pub rect: Rect,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub format_version: u32,
    pub grid: Grid2D,
    pub defects: Vec<TruthDefect>,
}

/// Writes the ground-truth sidecar. The weight of each rectangle is taken
/// from its first covered pixel.
pub fn write_truth(truth: &DefectMap, path: &Path) -> Result<()> {
    let defects = (0..truth.defect_rects.len())
        .map(|i| {
            let mask = truth.rect_mask(i);
            let zeta = mask
                .indexed_iter()
                .find(|(_, m)| **m)
                .map_or(0.0, |(idx, _)| truth.weights[idx]);
            TruthDefect { rect: truth.defect_rects[i], zeta }
        })
        .collect();
    write_json(path, &TruthFile { format_version: FORMAT_VERSION, grid: truth.grid, defects })
}

/// Reads a truth sidecar from a file, or from `truth.json` inside a directory.
pub fn read_truth(path: &Path) -> Result<DefectMap> {
    let file = if path.is_dir() { path.join(TRUTH_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| corrupt(&file, format!("cannot read truth: {e}")))?;
    let t: TruthFile = serde_json::from_str(&text).map_err(|e| corrupt(&file, e.to_string()))?;
    if t.format_version != FORMAT_VERSION {
        return Err(Error::Version { found: t.format_version, expected: FORMAT_VERSION });
    }
    let rects: Vec<(Rect, f64)> = t.defects.iter().map(|d| (d.rect, d.zeta)).collect();
    DefectMap::from_rects(t.grid, &rects)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub format_version: u32,
    pub method: Method,
    pub grid: Grid2D,
    pub config: ReconConfig,
    pub diagnostics: SolveDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lcurve: Option<LCurveSelection>,
    /// Number of per-measurement maps stored under `maps/` (0 when omitted).
    pub n_maps: usize,
}

/// Writes a reconstruction into directory `dir`.
pub fn write_result(result: &ReconResult, dir: &Path, per_measurement: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let _lock = DirLock::acquire(dir)?;
    write_f64(&dir.join(A_REC_FILE), result.a_rec.iter().copied())?;
    let n_maps = if per_measurement { result.per_measurement.len() } else { 0 };
    if n_maps > 0 {
        fs::create_dir_all(dir.join(MAPS_DIR))?;
        for (m, map) in result.per_measurement.iter().enumerate() {
            write_f64(&dir.join(MAPS_DIR).join(format!("m{m:05}.f64")), map.iter().copied())?;
        }
    }
    let manifest = ResultManifest {
        format_version: FORMAT_VERSION,
        method: result.method,
        grid: result.grid,
        config: result.config.clone(),
        diagnostics: result.diagnostics.clone(),
        lcurve: result.lcurve.clone(),
        n_maps,
    };
    write_json(&dir.join(RESULT_FILE), &manifest)
}

/// Reads a reconstruction directory. `per_measurement` is empty unless the
/// maps were stored.
pub fn read_result(dir: &Path) -> Result<ReconResult> {
    let file = dir.join(RESULT_FILE);
    let text = fs::read_to_string(&file).map_err(|e| corrupt(&file, format!("cannot read result: {e}")))?;
    let m: ResultManifest = serde_json::from_str(&text).map_err(|e| corrupt(&file, e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Version { found: m.format_version, expected: FORMAT_VERSION });
    }
    let shape = m.grid.shape();
    let a_rec = Array2::from_shape_vec(shape, read_f64(&dir.join(A_REC_FILE), m.grid.len())?)
        .expect("length checked");
    let per_measurement = (0..m.n_maps)
        .map(|k| {
            let v = read_f64(&dir.join(MAPS_DIR).join(format!("m{k:05}.f64")), m.grid.len())?;
            Ok(Array2::from_shape_vec(shape, v).expect("length checked"))
        })
        .collect::<Result<_>>()?;
    Ok(ReconResult {
        method: m.method,
        grid: m.grid,
        a_rec,
        per_measurement,
        diagnostics: m.diagnostics,
        config: m.config,
        lcurve: m.lcurve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    /// Binary 8-bit portable graymap plus a `.scale.txt` sidecar.
    Pgm,
    /// Comma-separated values, one grid row per line.
    Csv,
}

impl std::str::FromStr for RenderFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(RenderFormat::Pgm),
            "csv" => Ok(RenderFormat::Csv),
            _ => Err(Error::Parameter(format!("unknown render format `{s}` (expected pgm or csv)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub path: PathBuf,
    pub sidecar: Option<PathBuf>,
    /// Set when the field was constant and rendered as mid-gray.
    pub warning: Option<String>,
}

pub const PGM_MAX: u8 = 255;

/// Sidecar path used for a graymap at `path`.
pub fn scale_sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scale.txt");
    PathBuf::from(s)
}

/// Gray levels of `field` normalised min -> 0, max -> 255.
pub fn gray_levels(field: &Array2<f64>) -> (Vec<u8>, f64, f64) {
    let min = field.iter().copied().fold(f64::INFINITY, f64::min);
    let max = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let levels = field
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - min) / range * PGM_MAX as f64).round() as u8
            } else {
                PGM_MAX / 2 + 1
            }
        })
        .collect();
    (levels, min, max)
}

pub fn render_map(field: &Array2<f64>, path: &Path, format: RenderFormat) -> Result<RenderOutput> {
    if field.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("cannot render a field with non-finite values".into()));
    }
    if field.is_empty() {
        return Err(Error::Parameter("cannot render an empty field".into()));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let (ny, nx) = field.dim();
    match format {
        RenderFormat::Csv => {
            let mut w = BufWriter::new(File::create(path)?);
            for row in field.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{}", line.join(","))?;
            }
            w.flush()?;
            Ok(RenderOutput { path: path.to_path_buf(), sidecar: None, warning: None })
        }
        RenderFormat::Pgm => {
            let (levels, min, max) = gray_levels(field);
            let mut w = BufWriter::new(File::create(path)?);
            write!(w, "P5\n{nx} {ny}\n{PGM_MAX}\n")?;
            w.write_all(&levels)?;
            w.flush()?;

            let sidecar = scale_sidecar_path(path);
            let warning = (max <= min).then(|| format!("field is constant ({min}); rendered as mid-gray"));
            let mut s = BufWriter::new(File::create(&sidecar)?);
            writeln!(s, "min = {min:e}")?;
            writeln!(s, "max = {max:e}")?;
            writeln!(s, "max_gray = {PGM_MAX}")?;
            match &warning {
                Some(_) => writeln!(s, "range = degenerate")?,
                None => writeln!(s, "value = min + gray / max_gray * (max - min)")?,
            }
            s.flush()?;
            if let Some(msg) = &warning {
                log::warn!("{}: {msg}", path.display());
            }
            Ok(RenderOutput { path: path.to_path_buf(), sidecar: Some(sidecar), warning })
        }
    }
}

/// Reads a field written by [`render_map`] in CSV form.
pub fn read_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut n_x = None;
    let mut n_y = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| corrupt(path, format!("line {}: {e}", i + 1)))?;
        if *n_x.get_or_insert(row.len()) != row.len() {
            return Err(corrupt(path, format!("line {} has {} values, expected {}", i + 1, row.len(), n_x.unwrap())));
        }
        values.extend(row);
        n_y += 1;
    }
    Array2::from_shape_vec((n_y, n_x.unwrap_or(0)), values).map_err(|e| corrupt(path, e.to_string()))
}

/// Reads an 8-bit binary graymap, returning `(n_y, n_x)` levels.
pub fn read_pgm(path: &Path) -> Result<Array2<u8>> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt(path, "truncated graymap header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let bad = || corrupt(path, "malformed graymap header");
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad());
    }
    let nx: usize = fields[1].parse().map_err(|_| bad())?;
    let ny: usize = fields[2].parse().map_err(|_| bad())?;
    let data = bytes.get(pos..).filter(|d| d.len() == nx * ny).ok_or_else(|| corrupt(path, "graymap payload size"))?;
    Ok(Array2::from_shape_vec((ny, nx), data.to_vec()).expect("length checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::Provenance;
    use crate::thermal::PlateSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plan(n: usize) -> ScanPlan {
        ScanPlan {
            positions: (0..n).map(|i| (i as f64 * 1e-4, 2e-4)).collect(),
            spot_diameter: 1e-4,
            pitch: 1e-4,
            rows: 1,
            roi: Rect::new(0.0, 0.0, 1e-3, 1e-3),
            degenerate: false,
        }
    }

    fn set(n_m: usize, series: Option<usize>, seed: u64) -> MeasurementSet {
        let grid = Grid2D::new(5, 3, 5.2e-5, 5.2e-5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = match series {
            None => Frames::Slice((0..n_m).map(|_| Array2::from_shape_fn((3, 5), |_| rng.random::<f32>())).collect()),
            Some(n_t) => Frames::Series {
                axis: TimeAxis { n_t, frame_rate: 100.0, t_start: 0.01 },
                data: (0..n_m).map(|_| Array3::from_shape_fn((n_t, 3, 5), |_| rng.random::<f32>() - 0.5)).collect(),
            },
        };
        MeasurementSet {
            grid,
            plate: PlateSpec::steel_316l(),
            excitation: ExcitationTemporal { pulse_duration: 0.1, peak_power: 500.0, frame_rate: 100.0 },
            excitations: plan(n_m),
            eval_time: 0.5,
            noise_sigma: 1e-3,
            frames,
            provenance: Provenance::synthetic(seed),
        }
    }

    #[test]
    fn round_trip_slice_and_series() {
        let dir = tempfile::tempdir().unwrap();
        for (i, s) in [set(3, None, 1), set(2, Some(4), 2)].into_iter().enumerate() {
            let p = dir.path().join(format!("d{i}"));
            write_dataset(&s, &p).unwrap();
            let back = read_dataset(&p).unwrap();
            assert_eq!(back, s);
            assert!(!p.join(LOCK_FILE).exists());
        }
    }

    #[test]
    fn payload_layout() {
        let dir = tempfile::tempdir().unwrap();
        let s = set(1, None, 3);
        write_dataset(&s, dir.path()).unwrap();
        let bytes = fs::read(frame_path(dir.path(), 0)).unwrap();
        assert_eq!(bytes.len(), 15 * 4);
        let Frames::Slice(f) = &s.frames else { unreachable!() };
        // second value is (y=0, x=1)
        assert_eq!(&bytes[4..8], &f[0][[0, 1]].to_le_bytes());
    }

    #[test]
    fn series_slice_reads_one_frame() {
        let dir = tempfile::tempdir().unwrap();
        let s = set(2, Some(5), 4);
        write_dataset(&s, dir.path()).unwrap();
        let r = DatasetReader::open(dir.path()).unwrap();
        let f = r.frame_at(1, 0.03).unwrap();
        let Frames::Series { data, .. } = &s.frames else { unreachable!() };
        assert_eq!(f, data[1].index_axis(ndarray::Axis(0), 2));
        assert!(matches!(r.frame_at(0, 0.035), Err(Error::MissingSlice(_))));
    }

    #[test]
    fn corrupt_cases() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        write_dataset(&set(4, None, 5), p).unwrap();

        // manifest claims 5
        let text = fs::read_to_string(p.join(MANIFEST_FILE)).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["n_m"] = 5.into();
        v["scan"]["positions"].as_array_mut().unwrap().push(serde_json::json!([0.0, 0.0]));
        fs::write(p.join(MANIFEST_FILE), v.to_string()).unwrap();
        match read_dataset(p) {
            Err(Error::CorruptDataset { file, .. }) => assert_eq!(file, frame_path(p, 4)),
            other => panic!("{other:?}"),
        }
        fs::write(p.join(MANIFEST_FILE), &text).unwrap();

        // truncated payload
        let f2 = frame_path(p, 2);
        let bytes = fs::read(&f2).unwrap();
        fs::write(&f2, &bytes[..bytes.len() - 3]).unwrap();
        match read_dataset(p) {
            Err(Error::CorruptDataset { file, .. }) => assert_eq!(file, f2),
            other => panic!("{other:?}"),
        }
        fs::write(&f2, &bytes).unwrap();
        assert!(read_dataset(p).is_ok());

        v["n_m"] = 4.into();
        v["format_version"] = 7.into();
        fs::write(p.join(MANIFEST_FILE), v.to_string()).unwrap();
        assert!(matches!(read_dataset(p), Err(Error::Version { found: 7, expected: 1 })));

        fs::write(p.join(MANIFEST_FILE), "{ not json").unwrap();
        assert!(matches!(read_dataset(p), Err(Error::CorruptDataset { .. })));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(write_dataset(&set(1, None, 6), dir.path()), Err(Error::Locked(_))));
        drop(lock);
        write_dataset(&set(1, None, 6), dir.path()).unwrap();
    }

    #[test]
    fn rewrite_with_fewer_measurements() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&set(4, None, 7), dir.path()).unwrap();
        let s = set(2, None, 8);
        write_dataset(&s, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), s);
    }

    #[test]
    fn truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2D::square(20, 10, 1e-4).unwrap();
        let truth = DefectMap::from_rects(
            grid,
            &[(Rect::from_pixels(&grid, 2, 2, 3, 3), 0.4), (Rect::from_pixels(&grid, 10, 4, 2, 5), 0.7)],
        )
        .unwrap();
        write_truth(&truth, &dir.path().join(TRUTH_FILE)).unwrap();
        assert_eq!(read_truth(dir.path()).unwrap(), truth);
    }

    #[test]
    fn graymap_levels() {
        let dir = tempfile::tempdir().unwrap();
        let field = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let p = dir.path().join("m.pgm");
        let out = render_map(&field, &p, RenderFormat::Pgm).unwrap();
        assert!(out.warning.is_none());
        assert_eq!(read_pgm(&p).unwrap().into_raw_vec_and_offset().0, vec![0, 85, 170, 255]);
        let scale = fs::read_to_string(out.sidecar.unwrap()).unwrap();
        assert!(scale.contains("max = 3e0"));
    }

    #[test]
    fn constant_field_warns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        let out = render_map(&Array2::from_elem((3, 3), 1.5), &p, RenderFormat::Pgm).unwrap();
        assert!(out.warning.is_some());
        assert!(read_pgm(&p).unwrap().iter().all(|g| *g == 128));
        assert!(fs::read_to_string(out.sidecar.unwrap()).unwrap().contains("degenerate"));
        assert!(render_map(&Array2::from_elem((1, 1), f64::NAN), &p, RenderFormat::Pgm).is_err());
    }

    #[test]
    fn csv_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let field = Array2::from_shape_fn((4, 7), |_| (rng.random::<f64>() - 0.5) * 1e-7);
        let p = dir.path().join("m.csv");
        render_map(&field, &p, RenderFormat::Csv).unwrap();
        assert_eq!(read_csv(&p).unwrap(), field);
    }
}
