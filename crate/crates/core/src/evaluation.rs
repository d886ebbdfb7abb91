//! Accuracy metrics and desk-scale experiment drivers on synthetic scenes.
//!
//! Percentiles use the nearest-rank convention: the `p`-th percentile of `n`
//! sorted errors is the entry at rank `max(1, ceil(p n / 100))`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::{interpolate_map, make_sampling, InterpolationOptions, SamplingStrategy, DEFAULT_LAMBDA};
use crate::localization::{LocalizationResult, Localizer, LocalizerConfig, Mode, DEFAULT_LAMBDA_RATIO};
use crate::radio_map::{build_radio_map, FingerprintTensor, RadioMap};
use crate::simulator::{generate_online, generate_tensor, random_positions, OutlierSpec, SimulatedOnline, SyntheticScene};

/// Time samples per (AP, RP) pair in the synthetic fingerprinting campaign.
pub const DEFAULT_NUM_SAMPLES: usize = 20;
pub const DEFAULT_NUM_TEST_POINTS: usize = 100;
pub const NUM_TRAINING_SAMPLES: usize = 10;
/// Candidate `lambda2` values for GS tuning; `lambda1` follows the ratio.
pub const GS_LAMBDA_GRID: [f64; 6] = [1.0, 10.0, 30.0, 100.0, 300.0, 1000.0];
/// Candidate `lambda1 = lambda2` values for MGS tuning.
pub const MGS_LAMBDA_GRID: [f64; 3] = [30.0, 100.0, 300.0];
/// Candidate `lambda3 / lambda1` values for MGS tuning.
pub const MGS_LAMBDA3_RATIOS: [f64; 6] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub errors: Vec<f64>,
    pub mae: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p100: f64,
    /// Errors in ascending order.
    pub cdf: Vec<f64>,
}

/// Nearest-rank percentile of an ascending slice.
///
/// # Panics
/// If `sorted` is empty.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

impl ErrorReport {
    pub fn from_errors(errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::invalid("errors", "need at least one test point"));
        }
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("localization errors"));
        }
        let mut cdf = errors.clone();
        cdf.sort_by(f64::total_cmp);
        Ok(Self {
            mae: errors.iter().sum::<f64>() / errors.len() as f64,
            p25: percentile(&cdf, 25.0),
            p50: percentile(&cdf, 50.0),
            p75: percentile(&cdf, 75.0),
            p100: percentile(&cdf, 100.0),
            errors,
            cdf,
        })
    }

    pub fn median(&self) -> f64 {
        self.p50
    }
}

pub fn euclidean(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

pub fn mae(estimates: &[(f64, f64)], truths: &[(f64, f64)]) -> Result<ErrorReport> {
    if estimates.len() != truths.len() {
        return Err(Error::Dimension {
            axis: "test points",
            expected: truths.len(),
            actual: estimates.len(),
        });
    }
    ErrorReport::from_errors(estimates.iter().zip(truths).map(|(&e, &t)| euclidean(e, t)).collect())
}

/// Mean absolute entrywise difference over all `N x L` entries.
pub fn reconstruction_error(truth: &RadioMap, estimate: &RadioMap) -> Result<f64> {
    if truth.psi.shape() != estimate.psi.shape() {
        return Err(Error::Dimension {
            axis: "radio map entries",
            expected: truth.psi.len(),
            actual: estimate.psi.len(),
        });
    }
    if truth.psi.is_empty() {
        return Err(Error::invalid("radio map", "empty"));
    }
    let total: f64 = truth.psi.iter().zip(estimate.psi.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / truth.psi.len() as f64)
}

/// A simulated floor with its fingerprint tensor and time-averaged map.
#[derive(Debug, Clone)]
pub struct Testbed {
    pub scene: SyntheticScene,
    pub tensor: FingerprintTensor,
    pub map: RadioMap,
}

impl Testbed {
    pub fn new(scene: SyntheticScene, num_samples: usize) -> Result<Self> {
        let (tensor, rps) = generate_tensor(&scene, num_samples)?;
        let map = build_radio_map(&tensor, &rps)?;
        Ok(Self { scene, tensor, map })
    }

    /// `count` online readings at uniform random positions, with
    /// `outlier_fraction` of the APs corrupted by +30 dB when positive.
    pub fn queries(&self, count: usize, seed: u64, outlier_fraction: f64) -> Result<Vec<SimulatedOnline>> {
        let positions = random_positions(&self.scene, count, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a11_1ae5);
        let seeds: Vec<(u64, u64)> = (0..count).map(|_| (rng.next_u64(), rng.next_u64())).collect();
        positions
            .iter()
            .zip(&seeds)
            .map(|(&p, &(noise, outliers))| {
                let spec = OutlierSpec::additive(outlier_fraction, outliers);
                generate_online(&self.scene, p, (outlier_fraction > 0.0).then_some(&spec), noise)
            })
            .collect()
    }

    pub fn localizer(&self) -> Result<Localizer<'_>> {
        Localizer::new(&self.map, Some(&self.tensor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub report: ErrorReport,
    /// Share of corrupted selected APs flagged as outliers; `None` when
    /// nothing was corrupted or the mode has no outlier block.
    pub recall: Option<f64>,
    pub fallbacks: usize,
    pub unconverged: usize,
}

/// Localizes every query and scores the positions against their truths.
pub fn evaluate_localizer(localizer: &Localizer<'_>, queries: &[SimulatedOnline], cfg: &LocalizerConfig) -> Result<RunSummary> {
    let results: Vec<LocalizationResult> = queries
        .par_iter()
        .map(|q| localizer.localize(&q.measurement, cfg))
        .collect::<Result<_>>()?;
    let mut errors = Vec::with_capacity(queries.len());
    let (mut hit, mut total) = (0usize, 0usize);
    for (q, r) in queries.iter().zip(&results) {
        let truth = q
            .measurement
            .truth
            .ok_or_else(|| Error::invalid("queries", "every test point needs a ground-truth position"))?;
        errors.push(euclidean(r.position, truth));
        if r.kappa.is_some() {
            for c in q.corrupted.iter().filter(|c| r.diagnostics.selected_aps.contains(c)) {
                total += 1;
                hit += usize::from(r.detected_outlier_aps.contains(c));
            }
        }
    }
    Ok(RunSummary {
        report: ErrorReport::from_errors(errors)?,
        recall: (total > 0).then(|| hit as f64 / total as f64),
        fallbacks: results.iter().filter(|r| r.diagnostics.fallback.is_some()).count(),
        unconverged: results.iter().filter(|r| !r.diagnostics.converged).count(),
    })
}

/// Candidate configurations scanned by [`tune_localizer`] for `base.mode`.
pub fn tuning_candidates(base: &LocalizerConfig) -> Vec<LocalizerConfig> {
    match base.mode {
        Mode::Gs => {
            let ratio = if base.lambda2 > 0.0 {
                base.lambda1 / base.lambda2
            } else {
                DEFAULT_LAMBDA_RATIO
            };
            GS_LAMBDA_GRID
                .iter()
                .map(|&l2| LocalizerConfig {
                    lambda1: ratio * l2,
                    lambda2: l2,
                    ..base.clone()
                })
                .collect()
        }
        Mode::Mgs => MGS_LAMBDA_GRID
            .iter()
            .flat_map(|&l| {
                MGS_LAMBDA3_RATIOS.iter().map(move |&r| LocalizerConfig {
                    lambda1: l,
                    lambda2: l,
                    lambda3: r * l,
                    ..base.clone()
                })
            })
            .collect(),
        Mode::Cs => vec![base.clone()],
    }
}

/// Picks the candidate with the smallest MAE on `training`; ties keep the
/// earlier candidate. CS keeps its fixed weight.
pub fn tune_localizer(localizer: &Localizer<'_>, training: &[SimulatedOnline], base: &LocalizerConfig) -> Result<LocalizerConfig> {
    let candidates = tuning_candidates(base);
    if candidates.len() == 1 {
        return Ok(base.clone());
    }
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| evaluate_localizer(localizer, training, c).map(|s| s.report.mae))
        .collect::<Result<_>>()?;
    let best = (0..scores.len()).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });
    log::debug!(
        "tuned {:?}: lambda1={} lambda2={} lambda3={} (training MAE {:.3})",
        base.mode,
        candidates[best].lambda1,
        candidates[best].lambda2,
        candidates[best].lambda3,
        scores[best]
    );
    Ok(candidates[best].clone())
}

/// One localization trial: a fresh testbed per seed, optional tuning on
/// separate training points, then `num_test_points` scored queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub num_aps_total: usize,
    pub sigma_db: f64,
    pub num_samples: usize,
    pub num_test_points: usize,
    pub outlier_fraction: f64,
    pub tune: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            num_aps_total: 21,
            sigma_db: 4.0,
            num_samples: DEFAULT_NUM_SAMPLES,
            num_test_points: DEFAULT_NUM_TEST_POINTS,
            outlier_fraction: 0.0,
            tune: true,
        }
    }
}

/// Seed layout shared by every trial: the scene uses `seed`, training and
/// test queries use disjoint streams derived from it.
fn trial_seeds(seed: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_5eed);
    (rng.next_u64(), rng.next_u64())
}

pub fn testbed_for(trial: &TrialConfig, seed: u64) -> Result<Testbed> {
    Testbed::new(SyntheticScene::desk_scale(trial.num_aps_total, seed).with_sigma(trial.sigma_db), trial.num_samples)
}

/// Runs each configuration of `configs` on the same testbed and queries.
pub fn run_trial(trial: &TrialConfig, seed: u64, configs: &[LocalizerConfig]) -> Result<Vec<RunSummary>> {
    let bed = testbed_for(trial, seed)?;
    let localizer = bed.localizer()?;
    let (train_seed, test_seed) = trial_seeds(seed);
    let training = bed.queries(NUM_TRAINING_SAMPLES, train_seed, trial.outlier_fraction)?;
    let test = bed.queries(trial.num_test_points, test_seed, trial.outlier_fraction)?;
    configs
        .iter()
        .map(|c| {
            let cfg = if trial.tune {
                tune_localizer(&localizer, &training, c)?
            } else {
                c.clone()
            };
            evaluate_localizer(&localizer, &test, &cfg)
        })
        .collect()
}

/// Mean reconstruction error of random plans keeping `num_rps / denominator`
/// RPs, one plan per seed.
pub fn sampling_trial(trial: &TrialConfig, seed: u64, denominator: usize, lambda1: f64) -> Result<f64> {
    if denominator == 0 {
        return Err(Error::invalid("sampling fraction", "denominator must be positive"));
    }
    let bed = testbed_for(trial, seed)?;
    let n = bed.map.num_rps();
    let plan = make_sampling(
        SamplingStrategy::Random {
            count: (n / denominator).max(1),
            seed: trial_seeds(seed).0,
        },
        n,
    )?;
    let opts = InterpolationOptions {
        lambda1,
        ..InterpolationOptions::default()
    };
    let rec = interpolate_map(&bed.map, &plan, &opts)?;
    reconstruction_error(&bed.map, &rec.map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NumAps,
    OutlierFraction,
    K,
    LambdaRatio,
    SamplingFraction,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        SweepAxis::NumAps,
        SweepAxis::OutlierFraction,
        SweepAxis::K,
        SweepAxis::LambdaRatio,
        SweepAxis::SamplingFraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NumAps => "num_aps",
            SweepAxis::OutlierFraction => "outlier_fraction",
            SweepAxis::K => "k",
            SweepAxis::LambdaRatio => "lambda_ratio",
            SweepAxis::SamplingFraction => "sampling_fraction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub trial: TrialConfig,
    /// GS settings every sweep starts from.
    pub localizer: LocalizerConfig,
    pub sweeps: Vec<SweepAxis>,
    pub num_aps: Vec<usize>,
    pub outlier_fractions: Vec<f64>,
    pub group_counts: Vec<usize>,
    pub lambda_ratios: Vec<f64>,
    /// Denominators `d` of the kept share `1/d` of RPs.
    pub sampling_denominators: Vec<usize>,
    pub interpolation_lambda: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1],
            trial: TrialConfig::default(),
            localizer: LocalizerConfig::gs(),
            sweeps: SweepAxis::ALL.to_vec(),
            num_aps: vec![4, 6, 8, 10, 12, 15, 18, 21],
            outlier_fractions: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            group_counts: vec![1, 5, 10, 15, 20, 25],
            lambda_ratios: vec![0.1, 0.25, 0.5, 1.0, 2.0, 4.0],
            sampling_denominators: vec![2, 3, 4, 5],
            interpolation_lambda: DEFAULT_LAMBDA,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(parsed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "need at least one seed"));
        }
        if self.trial.num_test_points == 0 {
            return Err(Error::invalid("num_test_points", "must be at least 1"));
        }
        self.localizer.validate()
    }
}

/// One aggregated point of a sweep: means over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub method: String,
    pub mae: f64,
    pub p50: f64,
    pub p75: f64,
    pub p100: f64,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfCurve {
    pub method: String,
    /// Pooled errors over all seeds, ascending.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub tables: Vec<SweepTable>,
    pub cdf: Vec<CdfCurve>,
}

fn method_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Gs => "gs",
        Mode::Mgs => "mgs",
        Mode::Cs => "cs",
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn aggregate(value: f64, method: &str, runs: &[&RunSummary]) -> SweepRow {
    let recalls: Vec<f64> = runs.iter().filter_map(|r| r.recall).collect();
    SweepRow {
        value,
        method: method.to_string(),
        mae: mean(runs.iter().map(|r| r.report.mae)),
        p50: mean(runs.iter().map(|r| r.report.p50)),
        p75: mean(runs.iter().map(|r| r.report.p75)),
        p100: mean(runs.iter().map(|r| r.report.p100)),
        recall: (!recalls.is_empty()).then(|| mean(recalls.into_iter())),
    }
}

/// For each sweep value, the configurations compared and the trial they run in.
fn localization_points(cfg: &ExperimentConfig, axis: SweepAxis) -> Vec<(f64, TrialConfig, Vec<LocalizerConfig>)> {
    let base = &cfg.localizer;
    let cs = LocalizerConfig {
        k: base.k,
        num_aps: base.num_aps,
        ap_method: base.ap_method,
        ..LocalizerConfig::cs()
    };
    let mgs = LocalizerConfig {
        k: base.k,
        ap_method: base.ap_method,
        ..LocalizerConfig::mgs()
    };
    match axis {
        SweepAxis::NumAps => cfg
            .num_aps
            .iter()
            .map(|&s| {
                let gs = LocalizerConfig { num_aps: s, ..base.clone() };
                let cs = LocalizerConfig { num_aps: s, ..cs.clone() };
                (s as f64, cfg.trial.clone(), vec![gs, cs])
            })
            .collect(),
        SweepAxis::OutlierFraction => cfg
            .outlier_fractions
            .iter()
            .map(|&f| {
                let all = cfg.trial.num_aps_total;
                let trial = TrialConfig {
                    outlier_fraction: f,
                    ..cfg.trial.clone()
                };
                let mgs = LocalizerConfig { num_aps: all, ..mgs.clone() };
                let cs = LocalizerConfig { num_aps: all, ..cs.clone() };
                (f, trial, vec![mgs, cs])
            })
            .collect(),
        SweepAxis::K => cfg
            .group_counts
            .iter()
            .map(|&k| (k as f64, cfg.trial.clone(), vec![LocalizerConfig { k, ..base.clone() }]))
            .collect(),
        SweepAxis::LambdaRatio => cfg
            .lambda_ratios
            .iter()
            .map(|&r| {
                let gs = LocalizerConfig {
                    lambda1: r * base.lambda2,
                    ..base.clone()
                };
                (r, cfg.trial.clone(), vec![gs])
            })
            .collect(),
        SweepAxis::SamplingFraction => Vec::new(),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let mut tables = Vec::new();
    let mut cdf = Vec::new();
    for &axis in &cfg.sweeps {
        let mut rows = Vec::new();
        if axis == SweepAxis::SamplingFraction {
            for &d in &cfg.sampling_denominators {
                let res: Vec<f64> = cfg
                    .seeds
                    .iter()
                    .map(|&s| sampling_trial(&cfg.trial, s, d, cfg.interpolation_lambda))
                    .collect::<Result<_>>()?;
                rows.push(SweepRow {
                    value: 1.0 / d as f64,
                    method: "interpolation".into(),
                    mae: mean(res.iter().copied()),
                    p50: f64::NAN,
                    p75: f64::NAN,
                    p100: f64::NAN,
                    recall: None,
                });
            }
        } else {
            for (value, trial, configs) in localization_points(cfg, axis) {
                let per_seed: Vec<Vec<RunSummary>> = cfg
                    .seeds
                    .iter()
                    .map(|&s| run_trial(&trial, s, &configs))
                    .collect::<Result<_>>()?;
                for (m, c) in configs.iter().enumerate() {
                    let runs: Vec<&RunSummary> = per_seed.iter().map(|r| &r[m]).collect();
                    rows.push(aggregate(value, method_name(c.mode), &runs));
                    if axis == SweepAxis::NumAps && c.num_aps == cfg.localizer.num_aps {
                        let mut errors: Vec<f64> = runs.iter().flat_map(|r| r.report.errors.iter().copied()).collect();
                        errors.sort_by(f64::total_cmp);
                        cdf.push(CdfCurve {
                            method: method_name(c.mode).into(),
                            errors,
                        });
                    }
                }
            }
        }
        tables.push(SweepTable { axis, rows });
    }
    Ok(ExperimentResults { tables, cdf })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finite_or_empty(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Writes `sweep_<axis>.csv` per table and `cdf.csv`; returns the paths in
/// write order.
pub fn write_results(results: &ExperimentResults, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for t in &results.tables {
        let path = dir.join(format!("sweep_{}.csv", t.axis.name()));
        let mut out = String::new();
        if t.axis == SweepAxis::SamplingFraction {
            out.push_str("fraction,method,re_dbm\n");
            for r in &t.rows {
                let _ = writeln!(out, "{},{},{}", r.value, r.method, r.mae);
            }
        } else {
            let _ = writeln!(out, "{},method,mae_ft,p50_ft,p75_ft,p100_ft,recall", t.axis.name());
            for r in &t.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.value,
                    r.method,
                    r.mae,
                    finite_or_empty(r.p50),
                    finite_or_empty(r.p75),
                    finite_or_empty(r.p100),
                    opt(r.recall)
                );
            }
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    if !results.cdf.is_empty() {
        let path = dir.join("cdf.csv");
        let mut out = String::from("method,error_ft,probability\n");
        for c in &results.cdf {
            let n = c.errors.len();
            for (i, e) in c.errors.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", c.method, e, (i + 1) as f64 / n as f64);
            }
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
