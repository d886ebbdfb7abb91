use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gsloc::evaluation::{self, ErrorReport, ExperimentConfig, Testbed};
use gsloc::interpolation::{self, InterpolationOptions, SamplingStrategy, DEFAULT_LAMBDA};
use gsloc::localization::{ApMethod, Diagnostics, Localizer, LocalizerConfig, Mode};
use gsloc::radio_map::{load_online, load_radio_map, load_tensor, save_online, save_radio_map, save_tensor};
use gsloc::simulator::SyntheticScene;

use crate::args::{Command, EvaluateArgs, FileConfig, InterpolateArgs, LocalizeArgs, SimulateArgs, SweepArgs};
use crate::CliError;

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub strict: bool,
}

impl Context {
    fn output(&self, explicit: Option<PathBuf>, default_name: &str) -> Result<PathBuf, CliError> {
        let path = explicit.unwrap_or_else(|| self.out_dir.join(default_name));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| gsloc::Error::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
        Ok(path)
    }
}

pub fn run(command: Command, file: FileConfig, ctx: &Context) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => simulate(a.overlay(file.simulate), ctx),
        Command::Localize(a) => localize(a.overlay(file.localize), ctx),
        Command::Interpolate(a) => interpolate(a.overlay(file.interpolate), ctx),
        Command::Evaluate(a) => evaluate(a.overlay(file.evaluate), ctx),
        Command::Sweep(a) => sweep(a.overlay(file.sweep), ctx),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| {
        CliError::Data(gsloc::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Usage(format!("cannot serialize output: {e}")))
}

fn simulate(a: SimulateArgs, ctx: &Context) -> Result<(), CliError> {
    let mut scene = match &a.scene {
        Some(p) => SyntheticScene::from_path(p)?,
        None => SyntheticScene::desk_scale(a.num_aps.unwrap_or(21), ctx.seed),
    };
    if let Some(s) = a.sigma {
        scene.shadowing_sigma_db = s;
    }
    let samples = a.samples.unwrap_or(evaluation::DEFAULT_NUM_SAMPLES);
    let points = a.test_points.unwrap_or(evaluation::DEFAULT_NUM_TEST_POINTS);
    let fraction = a.outlier_fraction.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CliError::Usage(format!("--outlier-fraction must lie in [0, 1], got {fraction}")));
    }

    let bed = Testbed::new(scene, samples)?;
    let queries = bed.queries(points, ctx.seed, fraction)?;
    let online_dir = ctx.out_dir.join("online");
    fs::create_dir_all(&online_dir).map_err(|e| gsloc::Error::Io {
        path: online_dir.clone(),
        source: e,
    })?;
    save_tensor(&bed.tensor, &bed.map.rps, ctx.output(None, "tensor.csv")?)?;
    save_radio_map(&bed.map, ctx.output(None, "map.csv")?)?;
    write_file(&ctx.output(None, "scene.json")?, &to_json(&bed.scene)?)?;
    let ids = bed.map.ap_ids.clone();
    for (i, q) in queries.iter().enumerate() {
        save_online(&q.measurement, &ids, &q.corrupted, online_dir.join(format!("point_{i:03}.csv")))?;
    }
    println!(
        "simulated {} APs x {} RPs x {} samples and {} test readings into {}",
        bed.map.num_aps(),
        bed.map.num_rps(),
        samples,
        points,
        ctx.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizeOutput {
    pub online: String,
    pub mode: Mode,
    pub position: (f64, f64),
    pub truth: Option<(f64, f64)>,
    pub detected_outlier_aps: Vec<String>,
    pub corrupted_aps: Vec<String>,
    pub diagnostics: Diagnostics,
}

fn localize(a: LocalizeArgs, ctx: &Context) -> Result<(), CliError> {
    let map_path = required(a.map.clone(), "map")?;
    if a.online.is_empty() {
        return Err(CliError::Usage("missing required --online".into()));
    }
    let mode = a.mode.map(Mode::from).unwrap_or(Mode::Gs);
    let mut cfg = LocalizerConfig::for_mode(mode);
    cfg.k = a.k.unwrap_or(cfg.k);
    cfg.num_aps = a.num_aps.unwrap_or(cfg.num_aps);
    cfg.lambda1 = a.lambda1.unwrap_or(cfg.lambda1);
    cfg.lambda2 = a.lambda2.unwrap_or(cfg.lambda2);
    cfg.lambda3 = a.lambda3.unwrap_or(cfg.lambda3);
    cfg.gamma_dbm = a.gamma.unwrap_or(cfg.gamma_dbm);
    cfg.ap_method = match (a.ap_method, &a.tensor) {
        (Some(m), _) => m.into(),
        (None, Some(_)) => ApMethod::Fisher,
        (None, None) => ApMethod::Strongest,
    };
    cfg.validate()?;

    let map = load_radio_map(&map_path)?;
    let tensor = a.tensor.as_ref().map(load_tensor).transpose()?.map(|(t, _)| t);
    let localizer = Localizer::new(&map, tensor.as_ref())?;
    let mut outputs = Vec::with_capacity(a.online.len());
    for path in &a.online {
        let record = load_online(path)?;
        let y = record.align(&map.ap_ids)?;
        let res = localizer.localize(&y, &cfg)?;
        outputs.push(LocalizeOutput {
            online: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            mode,
            position: res.position,
            truth: record.truth,
            detected_outlier_aps: res.detected_outlier_aps.iter().map(|&i| map.ap_ids[i].clone()).collect(),
            corrupted_aps: record.corrupted.clone(),
            diagnostics: res.diagnostics,
        });
    }
    let out = ctx.output(a.out, "localization.json")?;
    write_file(&out, &to_json(&outputs)?)?;
    println!("localized {} readings into {}", outputs.len(), out.display());
    let stalled: Vec<&str> = outputs
        .iter()
        .filter(|o| !o.diagnostics.converged)
        .map(|o| o.online.as_str())
        .collect();
    if ctx.strict && !stalled.is_empty() {
        return Err(CliError::NotConverged(format!(
            "solver did not converge for {} reading(s): {}",
            stalled.len(),
            stalled.join(" ")
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReconstructionReport {
    plan: String,
    num_samples: usize,
    lambda1: f64,
    re_dbm: f64,
}

fn interpolate(a: InterpolateArgs, ctx: &Context) -> Result<(), CliError> {
    let map_path = required(a.map, "map")?;
    let plan_text = required(a.plan, "plan")?;
    let plan_text = match plan_text.split(':').count() {
        2 if plan_text.starts_with("random") => format!("{plan_text}:{}", ctx.seed),
        _ => plan_text,
    };
    let strategy: SamplingStrategy = plan_text.parse().map_err(|e: gsloc::Error| CliError::Usage(e.to_string()))?;
    let map = load_radio_map(&map_path)?;
    let plan = interpolation::make_sampling(strategy, map.num_rps())?;
    let opts = InterpolationOptions {
        lambda1: a.lambda1.unwrap_or(DEFAULT_LAMBDA),
        outlier_lambda: a.outlier_lambda,
        pin_samples: a.pin_samples.unwrap_or(false),
        ..InterpolationOptions::default()
    };
    let rec = interpolation::interpolate_map(&map, &plan, &opts)?;
    let out = ctx.output(a.out, "dense.csv")?;
    save_radio_map(&rec.map, &out)?;
    println!("interpolated {} APs from {} of {} RPs into {}", map.num_aps(), plan.len(), map.num_rps(), out.display());

    if let Some(truth_path) = a.truth {
        let truth = load_radio_map(&truth_path)?;
        let report = ReconstructionReport {
            plan: strategy.to_string(),
            num_samples: plan.len(),
            lambda1: opts.lambda1,
            re_dbm: evaluation::reconstruction_error(&truth, &rec.map)?,
        };
        write_file(&ctx.output(None, "reconstruction.json")?, &to_json(&report)?)?;
        println!("RE {} dB", report.re_dbm);
    }
    let stalled = rec.rows.iter().filter(|r| !r.converged).count();
    if ctx.strict && stalled > 0 {
        return Err(CliError::NotConverged(format!("solver did not converge for {stalled} AP row(s)")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvaluationSummary {
    num_points: usize,
    report: ErrorReport,
    outlier_recall: Option<f64>,
}

fn evaluate(a: EvaluateArgs, ctx: &Context) -> Result<(), CliError> {
    if let (Some(t), Some(e)) = (&a.truth_map, &a.estimate_map) {
        let re = evaluation::reconstruction_error(&load_radio_map(t)?, &load_radio_map(e)?)?;
        write_file(&ctx.output(None, "reconstruction_error.csv")?, &format!("re_dbm\n{re}\n"))?;
        println!("RE {re} dB");
        if a.results.is_none() {
            return Ok(());
        }
    }
    let path = a
        .results
        .ok_or_else(|| CliError::Usage("missing required --results (or --truth-map with --estimate-map)".into()))?;
    let text = fs::read_to_string(&path).map_err(|e| gsloc::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let outputs: Vec<LocalizeOutput> = serde_json::from_str(&text).map_err(|e| gsloc::Error::Parse {
        path: path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let scored: Vec<(&LocalizeOutput, (f64, f64))> = outputs.iter().filter_map(|o| o.truth.map(|t| (o, t))).collect();
    if scored.is_empty() {
        return Err(gsloc::Error::Parse {
            path,
            line: 0,
            message: "no result carries a ground-truth position".into(),
        }
        .into());
    }
    let estimates: Vec<(f64, f64)> = scored.iter().map(|(o, _)| o.position).collect();
    let truths: Vec<(f64, f64)> = scored.iter().map(|(_, t)| *t).collect();
    let report = evaluation::mae(&estimates, &truths)?;

    let (mut hit, mut total) = (0usize, 0usize);
    for (o, _) in &scored {
        if o.mode != Mode::Mgs {
            continue;
        }
        for c in &o.corrupted_aps {
            total += 1;
            hit += usize::from(o.detected_outlier_aps.contains(c));
        }
    }

    let mut csv = String::from("online,error_ft\n");
    for ((o, _), e) in scored.iter().zip(&report.errors) {
        let _ = writeln!(csv, "{},{e}", o.online);
    }
    write_file(&ctx.output(None, "errors.csv")?, &csv)?;
    let summary = EvaluationSummary {
        num_points: report.errors.len(),
        outlier_recall: (total > 0).then(|| hit as f64 / total as f64),
        report,
    };
    write_file(&ctx.output(None, "evaluation.json")?, &to_json(&summary)?)?;
    let r = &summary.report;
    println!(
        "MAE {} ft, median {} ft, p75 {} ft, max {} ft over {} points",
        r.mae, r.p50, r.p75, r.p100, summary.num_points
    );
    Ok(())
}

fn sweep(a: SweepArgs, ctx: &Context) -> Result<(), CliError> {
    let mut cfg = match &a.experiment {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig {
            seeds: vec![ctx.seed],
            ..ExperimentConfig::default()
        },
    };
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds.clone();
    }
    if !a.axes.is_empty() {
        cfg.sweeps = a.axes.iter().map(|&x| x.into()).collect();
    }
    if let Some(n) = a.test_points {
        cfg.trial.num_test_points = n;
    }
    if a.no_tune == Some(true) {
        cfg.trial.tune = false;
    }
    cfg.validate()?;
    let results = evaluation::run_experiment(&cfg)?;
    fs::create_dir_all(&ctx.out_dir).map_err(|e| gsloc::Error::Io {
        path: ctx.out_dir.clone(),
        source: e,
    })?;
    write_file(&ctx.out_dir.join("experiment.json"), &to_json(&cfg)?)?;
    for p in evaluation::write_results(&results, &ctx.out_dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
