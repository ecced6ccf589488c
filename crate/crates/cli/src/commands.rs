use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Array3};
use psr_core::baseline::{difference_thermogram, ppt_windowed, PptWindow};
use psr_core::dataset::{
    read_csv, read_result, read_truth, render_map, write_dataset, write_result, write_truth, DatasetReader, RenderFormat,
    TRUTH_FILE,
};
use psr_core::evaluation::{separability, support_metrics};
use psr_core::phantom::HOMOGENEITY_CV_LIMIT;
use psr_core::phantom::{homogeneity_check, plan_triangular_grid, Footprint, Rect};
use psr_core::recon::reconstruct_frames;
use psr_core::solver::{default_rho_candidates, SmsOperator};
use psr_core::thermal::{fwhm_diameter, synth_centered_psf};
use psr_core::{Grid2D, Method, PlateSpec, ReconConfig, RhoMode};
use serde_json::json;

use crate::record::RunRecord;
use crate::scenario::{self, Scenario};
use crate::{
    BaselineArgs, BaselineMethod, CmdResult, Failure, FormatArg, MethodArg, MetricsArgs, PlanArgs, Preset,
    ReconstructArgs, RenderArgs, SmsOperatorArg, SynthArgs, WindowArg,
};

fn same_dir(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

pub fn synth(args: SynthArgs, threads: Option<usize>) -> CmdResult {
    if args.list {
        for (name, _) in scenario::BUNDLED {
            println!("{name}");
        }
        return Ok(());
    }
    let out = args.out.expect("required by the parser");
    let (text, source) = match (&args.scenario, &args.bundled) {
        (Some(path), _) => (
            fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?,
            path.display().to_string(),
        ),
        (None, Some(name)) => {
            let text = scenario::bundled(name).ok_or_else(|| {
                let names: Vec<_> = scenario::BUNDLED.iter().map(|(n, _)| *n).collect();
                Failure::usage(format!("no bundled scenario `{name}` (have: {})", names.join(", ")))
            })?;
            (text.to_string(), format!("bundled:{name}"))
        }
        (None, None) => unreachable!("required by the parser"),
    };

    let report = |diags: Vec<scenario::Diagnostic>| {
        for d in &diags {
            eprintln!("{source}: {d}");
        }
        Failure::usage(format!("invalid scenario {source} ({} problem(s))", diags.len()))
    };
    let mut sc = Scenario::parse(&text).map_err(report)?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    let built = sc.build(&text).map_err(report)?;

    let start = Instant::now();
    let set = built.simulate(&sc.acquisition)?;
    let t_sim = secs(start);
    let start = Instant::now();
    let manifest = write_dataset(&set, &out)?;
    write_truth(&built.truth, &out.join(TRUTH_FILE))?;
    let t_write = secs(start);

    let mut rec = RunRecord::new(
        "synth",
        json!({
            "scenario": source,
            "name": sc.name,
            "scenario_text": text,
            "mode": sc.acquisition.mode,
            "noise_sigma": set.noise_sigma,
        }),
    );
    if let Some(p) = &args.scenario {
        rec.inputs.push(p.clone());
    }
    rec.outputs.push(out.clone());
    rec.timings.insert("simulate".into(), t_sim);
    rec.timings.insert("write".into(), t_write);
    rec.seed = Some(sc.seed);
    rec.threads = threads;
    rec.write(&out)?;

    println!(
        "wrote {}: {} measurement(s) on a {}x{} grid, noise sigma {:.3e} K, {} defect(s)",
        out.display(),
        manifest.n_m,
        manifest.grid.n_x,
        manifest.grid.n_y,
        set.noise_sigma,
        built.truth.defect_rects.len()
    );
    Ok(())
}

pub fn plan(args: PlanArgs, threads: Option<usize>) -> CmdResult {
    let (w, h) = args.roi;
    let roi = Rect::new(0.0, 0.0, w, h);
    let plan = plan_triangular_grid(roi, args.rd)?.with_spot_diameter(args.spot);
    let plate = PlateSpec::steel_316l();
    let fwhm = fwhm_diameter(&plate, args.t_eval)?;

    // footprint sampled at eight pixels per FWHM, one FWHM of margin around the roi
    let dx = fwhm / 8.0;
    let grid = Grid2D::square(((w + 2.0 * fwhm) / dx).ceil() as usize + 1, ((h + 2.0 * fwhm) / dx).ceil() as usize + 1, dx)?;
    let shifted = plan.translated(fwhm, fwhm);
    let homog = homogeneity_check(&shifted, Footprint::TopHat { diameter: args.spot, fwhm }, &grid);

    println!("rows: {}", plan.rows);
    println!("n_m: {}", plan.len());
    println!("d_fwhm: {:.4} mm at {} ms (316L)", fwhm * 1e3, args.t_eval * 1e3);
    println!("r_d / d_fwhm: {:.3}", args.rd / fwhm);
    let cv = match &homog {
        Ok(r) => {
            println!(
                "homogeneity_cv: {:.4} ({} the {HOMOGENEITY_CV_LIMIT} limit)",
                r.coefficient_of_variation,
                if r.is_uniform() { "below" } else { "above" }
            );
            Some(r.coefficient_of_variation)
        }
        Err(psr_core::Error::RoiTooSmall(_)) => {
            println!("homogeneity_cv: n/a (roi is narrower than 2 d_fwhm = {:.3} mm, no interior to check)", 2e3 * fwhm);
            None
        }
        Err(e) => return Err(Failure::from(psr_core::Error::Numerical(e.to_string()))),
    };
    if plan.degenerate {
        println!("note: pitch exceeds the roi; a single central spot was planned");
    }

    if let Some(out) = args.out {
        fs::create_dir_all(&out)?;
        let mut text = serde_json::to_string_pretty(&json!({
            "plan": plan,
            "d_fwhm": fwhm,
            "homogeneity_cv": cv,
        }))
        .map_err(anyhow::Error::from)?;
        text.push('\n');
        fs::write(out.join("plan.json"), text)?;
        let mut rec = RunRecord::new(
            "plan",
            json!({ "roi": [w, h], "rd": args.rd, "spot": args.spot, "t_eval": args.t_eval }),
        );
        rec.outputs.push(out.join("plan.json"));
        rec.threads = threads;
        rec.write(&out)?;
    }
    Ok(())
}

/// Weights for temperature-increase data in kelvin from a ~15 W spot, as in
/// the bundled scenarios. The published presets belong to camera data on a
/// different scale and wipe such maps out.
fn desk_config(eval_time: f64) -> ReconConfig {
    ReconConfig { lambda_21: 0.2, lambda_2: 5e-4, rho: 3e-2, eval_time, ..ReconConfig::paper_sms() }
}

fn resolve_config(args: &ReconstructArgs, dataset_eval_time: f64) -> Result<(ReconConfig, Method), Failure> {
    let method = match (args.method, args.preset) {
        (Some(MethodArg::Sms), _) | (None, Some(Preset::PaperSms)) | (None, None) => Method::Sms,
        (Some(MethodArg::Fft), _) | (None, Some(Preset::PaperFft)) => Method::Fft,
    };
    let mut config = match (args.preset, method) {
        (Some(Preset::PaperSms), _) => ReconConfig::paper_sms(),
        (Some(Preset::PaperFft), _) => ReconConfig::paper_fft(),
        (None, _) => desk_config(dataset_eval_time),
    };
    if let Some(v) = args.lambda21 {
        config.lambda_21 = v;
    }
    if let Some(v) = args.lambda2 {
        config.lambda_2 = v;
    }
    if let Some(v) = args.iters {
        config.n_iter = v;
    }
    if let Some(v) = args.t_eval {
        config.eval_time = v;
    }
    if let Some(v) = args.seed {
        config.init_seed = v;
    }
    match args.rho.as_deref() {
        None => {}
        Some("auto") => config.rho_mode = RhoMode::LCurve { candidates: default_rho_candidates() },
        Some(s) => {
            config.rho = s
                .parse()
                .map_err(|_| Failure::usage(format!("--rho expects a number or `auto`, got `{s}`")))?;
        }
    }
    if let Some(op) = args.sms_operator {
        config.sms_operator = match op {
            SmsOperatorArg::Flattened => SmsOperator::Flattened,
            SmsOperatorArg::Strict2d => SmsOperator::Strict2d,
        };
    }
    if args.no_taper {
        config.taper = false;
    }
    config.early_stop |= args.early_stop;
    config.validate()?;
    Ok((config, method))
}

pub fn reconstruct(args: ReconstructArgs, threads: Option<usize>) -> CmdResult {
    if same_dir(&args.dataset, &args.out) {
        return Err(Failure::usage("--out must not be the dataset directory"));
    }
    let start = Instant::now();
    let reader = DatasetReader::open(&args.dataset)?;
    let manifest = reader.manifest().clone();
    let (config, method) = resolve_config(&args, manifest.eval_time)?;
    let frames = reader.slice_at(config.eval_time)?;
    let t_read = secs(start);

    let start = Instant::now();
    let psf = synth_centered_psf(&manifest.plate, &manifest.excitation_temporal(), &manifest.grid, config.eval_time)?;
    let t_psf = secs(start);

    let start = Instant::now();
    let result = reconstruct_frames(&frames, &psf, &config, method)?;
    let t_solve = secs(start);
    write_result(&result, &args.out, args.per_measurement)?;

    let mut rec = RunRecord::new(
        "reconstruct",
        json!({ "method": method, "config": result.config, "per_measurement": args.per_measurement }),
    );
    rec.inputs.push(args.dataset.clone());
    rec.outputs.push(args.out.clone());
    rec.timings.insert("read".into(), t_read);
    rec.timings.insert("psf".into(), t_psf);
    rec.timings.insert("solve".into(), t_solve);
    rec.seed = Some(config.init_seed);
    rec.threads = threads;
    rec.write(&args.out)?;

    let d = &result.diagnostics;
    println!("method: {method}");
    println!("measurements: {}", frames.len());
    println!("t_eval: {} ms", config.eval_time * 1e3);
    println!(
        "lambda21: {}  lambda2: {}  rho: {}{}",
        result.config.lambda_21,
        result.config.lambda_2,
        result.config.rho,
        if result.lcurve.is_some() { " (L-curve)" } else { "" }
    );
    println!("iterations: {}", d.iterations());
    println!("objective: {:.6e} -> {:.6e}", d.initial_objective, d.final_objective().unwrap_or(f64::NAN));
    if let Some(r) = d.primal_relative_per_iter.last() {
        println!("primal residual (relative): {r:.3e}");
    }
    println!("solve time: {t_solve:.3} s");
    println!("wrote {}", args.out.display());
    Ok(())
}

fn frame_sum(reader: &DatasetReader, t: f64) -> Result<Array2<f64>, Failure> {
    let grid = reader.manifest().grid;
    let mut sum = grid.zeros();
    for f in reader.slice_at(t)? {
        sum += &f;
    }
    Ok(sum)
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn baseline(args: BaselineArgs, threads: Option<usize>) -> CmdResult {
    if same_dir(&args.dataset, &args.out) {
        return Err(Failure::usage("--out must not be the dataset directory"));
    }
    let start = Instant::now();
    let reader = DatasetReader::open(&args.dataset)?;
    let manifest = reader.manifest().clone();
    let grid = manifest.grid;
    fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();

    let config = match args.method {
        BaselineMethod::Diff => {
            let t_eval = args.t_eval.unwrap_or(manifest.eval_time);
            let data = frame_sum(&reader, t_eval)?;
            // without a reference slice, subtract the defect-free level (frame median)
            let (reference, label) = match args.t_ref {
                Some(t) => (frame_sum(&reader, t)?, format!("frame at {t} s")),
                None => {
                    let level = median(data.iter().copied());
                    (Array2::from_elem(grid.shape(), level), format!("frame median {level:e}"))
                }
            };
            let diff = difference_thermogram(&data, &reference)?;
            let path = args.out.join("diff.csv");
            render_map(&diff, &path, RenderFormat::Csv)?;
            outputs.push(path);
            println!("difference thermogram at {} ms minus {label}", t_eval * 1e3);
            json!({ "method": "diff", "t_eval": t_eval, "t_ref": args.t_ref })
        }
        BaselineMethod::Ppt => {
            let freq = args.freq.ok_or_else(|| Failure::usage("--method ppt needs --freq <Hz>"))?;
            let axis = manifest.time_axis.ok_or_else(|| {
                Failure::from(psr_core::Error::MissingSlice(
                    "pulse-phase thermography needs a time series; the dataset holds a single slice".into(),
                ))
            })?;
            let mut series = Array3::<f64>::zeros((axis.n_t, grid.n_y, grid.n_x));
            for m in 0..reader.n_m() {
                let p = reader.payload(m)?;
                series.iter_mut().zip(p).for_each(|(s, v)| *s += v as f64);
            }
            let window = match args.window {
                WindowArg::None => PptWindow::None,
                WindowArg::HalfCosine => PptWindow::HalfCosine,
            };
            let r = ppt_windowed(&series, axis.frame_rate, freq, window)?;
            for (name, map) in [("amplitude.csv", &r.amplitude), ("phase.csv", &r.phase)] {
                let path = args.out.join(name);
                render_map(map, &path, RenderFormat::Csv)?;
                outputs.push(path);
            }
            println!("ppt at {} Hz (bin {} of {} frames at {} Hz)", r.frequency, r.bin, axis.n_t, axis.frame_rate);
            json!({ "method": "ppt", "requested_frequency": freq, "frequency": r.frequency, "bin": r.bin, "window": window })
        }
    };

    let mut rec = RunRecord::new("baseline", config);
    rec.inputs.push(args.dataset.clone());
    rec.outputs = outputs;
    rec.timings.insert("total".into(), secs(start));
    rec.threads = threads;
    rec.write(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn load_map(path: &Path) -> Result<(Array2<f64>, Vec<Array2<f64>>), Failure> {
    if path.is_dir() {
        let r = read_result(path)?;
        Ok((r.a_rec, r.per_measurement))
    } else {
        Ok((read_csv(path)?, Vec::new()))
    }
}

pub fn metrics(args: MetricsArgs, threads: Option<usize>) -> CmdResult {
    let (map, _) = load_map(&args.recon)?;
    let truth_path = if args.truth.is_dir() { args.truth.join(TRUTH_FILE) } else { args.truth.clone() };
    let truth = read_truth(&truth_path)?;
    if map.dim() != truth.grid.shape() {
        return Err(Failure::from(psr_core::Error::Shape {
            expected: format!("{:?}", truth.grid.shape()),
            actual: format!("{:?}", map.dim()),
        }));
    }
    let sep = separability(&map, &truth, args.valley_threshold)?;
    let support = support_metrics(&map, &truth, args.activation_frac)?;
    let report = json!({
        "valley_threshold": args.valley_threshold,
        "activation_frac": args.activation_frac,
        "pairs": sep.pairs,
        "baseline": sep.baseline,
        "noise_floor": sep.noise_floor,
        "support_iou": support.support_iou,
        "localization_error": support.localization_error,
    });
    let mut text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    text.push('\n');
    print!("{text}");

    if let Some(out) = args.out {
        fs::create_dir_all(&out)?;
        fs::write(out.join("metrics.json"), &text)?;
        let mut rec = RunRecord::new(
            "metrics",
            json!({ "valley_threshold": args.valley_threshold, "activation_frac": args.activation_frac }),
        );
        rec.inputs = vec![args.recon.clone(), truth_path];
        rec.outputs.push(out.join("metrics.json"));
        rec.threads = threads;
        rec.write(&out)?;
    }
    Ok(())
}

pub fn render(args: RenderArgs, threads: Option<usize>) -> CmdResult {
    let (map, per_measurement) = load_map(&args.input)?;
    if args.per_measurement && per_measurement.is_empty() {
        return Err(Failure::usage("--per-measurement given but the input stores no per-measurement maps"));
    }
    let (format, ext) = match args.format {
        FormatArg::Pgm => (RenderFormat::Pgm, "pgm"),
        FormatArg::Csv => (RenderFormat::Csv, "csv"),
    };
    fs::create_dir_all(&args.out)?;
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut emit = |field: &Array2<f64>, stem: &str| -> CmdResult {
        let r = render_map(field, &args.out.join(format!("{stem}.{ext}")), format)?;
        if let Some(w) = &r.warning {
            eprintln!("warning: {stem}: {w}");
        }
        outputs.push(r.path);
        outputs.extend(r.sidecar);
        Ok(())
    };
    emit(&map, "a_rec")?;
    if args.per_measurement {
        for (m, f) in per_measurement.iter().enumerate() {
            emit(f, &format!("m{m:05}"))?;
        }
    }
    let mut rec = RunRecord::new("render", json!({ "format": ext, "per_measurement": args.per_measurement }));
    rec.inputs.push(args.input.clone());
    rec.outputs = outputs;
    rec.threads = threads;
    rec.write(&args.out)?;
    println!("wrote {} file(s) to {}", rec.outputs.len(), args.out.display());
    Ok(())
}
