//! Online localization: coverage, layered clustering, AP selection, a sparse
//! group lasso solve on `H = Phi Psi`, and the centroid of the recovered
//! location vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ap_selection::{fisher_scores, select_strongest, SelectionMatrix};
use crate::clustering::{
    build_coverage_with, layered_cluster, online_coverage, CoverageProfile, Grouping, DEFAULT_AVAILABILITY, DEFAULT_GAMMA_DBM,
};
use crate::error::{Error, Result};
use crate::radio_map::{FingerprintTensor, OnlineMeasurement, RadioMap, ReferencePoint};
use crate::solver::{self, DenseOperator, GroupPenalty, OutlierBlock, SglProblem, SolverOptions};

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_NUM_APS: usize = 12;
pub const DEFAULT_LAMBDA_RATIO: f64 = 0.5;
pub const DEFAULT_GS_LAMBDA2: f64 = 300.0;
pub const DEFAULT_MGS_LAMBDA: f64 = 100.0;
pub const DEFAULT_LAMBDA3: f64 = 30.0;
pub const DEFAULT_CS_LAMBDA: f64 = 1e-3;
pub const OUTLIER_MEDIAN_FACTOR: f64 = 3.0;
pub const OUTLIER_FLOOR_DB: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    Fisher,
    Strongest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gs,
    Mgs,
    Cs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerConfig {
    pub k: usize,
    pub gamma_dbm: f64,
    pub availability: f64,
    pub ap_method: ApMethod,
    pub num_aps: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub mode: Mode,
    pub solver: SolverOptions,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self::gs()
    }
}

impl LocalizerConfig {
    pub fn gs() -> Self {
        Self {
            k: DEFAULT_K,
            gamma_dbm: DEFAULT_GAMMA_DBM,
            availability: DEFAULT_AVAILABILITY,
            ap_method: ApMethod::Fisher,
            num_aps: DEFAULT_NUM_APS,
            lambda1: DEFAULT_LAMBDA_RATIO * DEFAULT_GS_LAMBDA2,
            lambda2: DEFAULT_GS_LAMBDA2,
            lambda3: DEFAULT_LAMBDA3,
            mode: Mode::Gs,
            solver: SolverOptions::default(),
        }
    }

    pub fn mgs() -> Self {
        Self {
            lambda1: DEFAULT_MGS_LAMBDA,
            lambda2: DEFAULT_MGS_LAMBDA,
            mode: Mode::Mgs,
            ..Self::gs()
        }
    }

    pub fn cs() -> Self {
        Self {
            lambda1: DEFAULT_CS_LAMBDA,
            lambda2: 0.0,
            mode: Mode::Cs,
            ..Self::gs()
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Gs => Self::gs(),
            Mode::Mgs => Self::mgs(),
            Mode::Cs => Self::cs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("K", "must be at least 1"));
        }
        if self.num_aps == 0 {
            return Err(Error::invalid("S", "must be at least 1"));
        }
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::invalid(name, format!("must be finite and non-negative, got {l}")));
            }
        }
        if !self.gamma_dbm.is_finite() {
            return Err(Error::NonFinite("gamma"));
        }
        if !(0.0..=1.0).contains(&self.availability) {
            return Err(Error::invalid("availability", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// No positive coefficient; the RP with the largest `|theta|` was used.
    LargestMagnitude,
    /// All coefficients zero; the RP with the closest fingerprint was used.
    NearestFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub objective_value: f64,
    pub selected_aps: Vec<usize>,
    pub outlier_threshold: Option<f64>,
    pub fallback: Option<Fallback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub position: (f64, f64),
    pub theta: Vec<f64>,
    /// Outlier estimate per selected AP, in selection order.
    pub kappa: Option<Vec<f64>>,
    /// Indices into the radio map's AP list.
    pub detected_outlier_aps: Vec<usize>,
    pub grouping: Grouping,
    pub diagnostics: Diagnostics,
}

/// Weighted mean of RP coordinates over the positive part of `theta`.
pub fn centroid(theta: &[f64], rps: &[ReferencePoint]) -> Result<(f64, f64)> {
    if theta.len() != rps.len() {
        return Err(Error::Dimension {
            axis: "theta",
            expected: rps.len(),
            actual: theta.len(),
        });
    }
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (t, p) in theta.iter().zip(rps) {
        if *t > 0.0 {
            sw += t;
            sx += t * p.x;
            sy += t * p.y;
        }
    }
    if !(sw > 0.0) || !sw.is_finite() {
        return Err(Error::invalid("theta", "no positive coefficient to average"));
    }
    Ok((sx / sw, sy / sw))
}

/// `max(3 median |kappa|, 5 dB)`.
pub fn outlier_threshold(kappa: &[f64]) -> f64 {
    let mut mags: Vec<f64> = kappa.iter().map(|k| k.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let median = match mags.len() {
        0 => 0.0,
        n if n % 2 == 1 => mags[n / 2],
        n => 0.5 * (mags[n / 2 - 1] + mags[n / 2]),
    };
    (OUTLIER_MEDIAN_FACTOR * median).max(OUTLIER_FLOOR_DB)
}

/// Offline state reused across online queries: the radio map, its coverage
/// profile and, when a fingerprint tensor is available, the Fisher scores.
#[derive(Debug, Clone)]
pub struct Localizer<'a> {
    map: &'a RadioMap,
    tensor: Option<&'a FingerprintTensor>,
    fisher: Option<Vec<f64>>,
    coverage: CoverageProfile,
    coverage_key: (u64, u64),
}

impl<'a> Localizer<'a> {
    /// Without a tensor the map doubles as a single-sample tensor for
    /// coverage and Fisher selection is unavailable.
    pub fn new(map: &'a RadioMap, tensor: Option<&'a FingerprintTensor>) -> Result<Self> {
        if let Some(t) = tensor {
            if t.num_aps() != map.num_aps() {
                return Err(Error::Dimension {
                    axis: "AP",
                    expected: map.num_aps(),
                    actual: t.num_aps(),
                });
            }
            if t.num_rps() != map.num_rps() {
                return Err(Error::Dimension {
                    axis: "RP",
                    expected: map.num_rps(),
                    actual: t.num_rps(),
                });
            }
        }
        let fisher = match tensor {
            Some(t) if t.num_samples() >= 2 => Some(fisher_scores(t)?),
            _ => None,
        };
        let mut me = Self {
            map,
            tensor,
            fisher,
            coverage: CoverageProfile {
                rp_coverage: Vec::new(),
                threshold_gamma_dbm: DEFAULT_GAMMA_DBM,
                availability_fraction: DEFAULT_AVAILABILITY,
            },
            coverage_key: (0, 0),
        };
        me.coverage = me.build_coverage(DEFAULT_GAMMA_DBM, DEFAULT_AVAILABILITY)?;
        me.coverage_key = (DEFAULT_GAMMA_DBM.to_bits(), DEFAULT_AVAILABILITY.to_bits());
        Ok(me)
    }

    pub fn map(&self) -> &RadioMap {
        self.map
    }

    fn build_coverage(&self, gamma: f64, availability: f64) -> Result<CoverageProfile> {
        match self.tensor {
            Some(t) => build_coverage_with(t, gamma, availability),
            None => build_coverage_with(&FingerprintTensor::from_radio_map(self.map), gamma, availability),
        }
    }

    fn coverage_for(&self, cfg: &LocalizerConfig) -> Result<std::borrow::Cow<'_, CoverageProfile>> {
        if (cfg.gamma_dbm.to_bits(), cfg.availability.to_bits()) == self.coverage_key {
            Ok(std::borrow::Cow::Borrowed(&self.coverage))
        } else {
            Ok(std::borrow::Cow::Owned(self.build_coverage(cfg.gamma_dbm, cfg.availability)?))
        }
    }

    pub fn select_aps(&self, y: &OnlineMeasurement, cfg: &LocalizerConfig) -> Result<SelectionMatrix> {
        let l = self.map.num_aps();
        if cfg.num_aps > l {
            return Err(Error::invalid("S", format!("cannot select {} of {l} APs", cfg.num_aps)));
        }
        match cfg.ap_method {
            ApMethod::Strongest => select_strongest(y, cfg.num_aps),
            ApMethod::Fisher => {
                let scores = self
                    .fisher
                    .as_ref()
                    .ok_or_else(|| Error::invalid("ap_method", "Fisher selection needs fingerprints with at least two samples"))?;
                let mut order: Vec<usize> = (0..l).collect();
                order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                order.truncate(cfg.num_aps);
                SelectionMatrix::new(order, l)
            }
        }
    }

    /// Runs the pipeline in the mode named by `cfg.mode`.
    pub fn localize(&self, y: &OnlineMeasurement, cfg: &LocalizerConfig) -> Result<LocalizationResult> {
        cfg.validate()?;
        y.check_against(self.map)?;
        let coverage = self.coverage_for(cfg)?;
        let grouping = layered_cluster(&coverage, &online_coverage(y, cfg.gamma_dbm), cfg.k)?;
        let selection = self.select_aps(y, cfg)?;
        let h = selection.apply_matrix(&self.map.psi)?;
        let obs = selection.apply_vector(&y.y)?;

        let (theta, kappa, stats) = match cfg.mode {
            Mode::Gs | Mode::Mgs => {
                let mut problem = SglProblem::new(
                    DenseOperator::new(h)?,
                    obs,
                    cfg.lambda1,
                    cfg.lambda2,
                    GroupPenalty::from(&grouping),
                )
                .with_options(cfg.solver.clone());
                if cfg.mode == Mode::Mgs {
                    problem.outlier = Some(OutlierBlock {
                        lambda: cfg.lambda3,
                        rows: selection.len(),
                    });
                }
                let sol = solver::solve(&problem)?;
                let stats = (sol.iterations, sol.converged, sol.kkt_residual, sol.objective_value);
                (sol.theta, sol.kappa, stats)
            }
            Mode::Cs => {
                let (theta, stats) = orthogonalized_lasso(&h, &obs, cfg)?;
                (theta, None, stats)
            }
        };

        let (position, fallback) = match centroid(&theta, &self.map.rps) {
            Ok(p) => (p, None),
            Err(_) => self.fallback_position(&theta, y)?,
        };
        if fallback.is_some() {
            log::warn!("localization fell back to {fallback:?}");
        }

        let (detected_outlier_aps, threshold) = match &kappa {
            Some(k) => {
                let thr = outlier_threshold(k);
                let mut hits: Vec<usize> = k
                    .iter()
                    .zip(selection.selected())
                    .filter(|(v, _)| v.abs() > thr)
                    .map(|(_, &ap)| ap)
                    .collect();
                hits.sort_unstable();
                (hits, Some(thr))
            }
            None => (Vec::new(), None),
        };

        Ok(LocalizationResult {
            position,
            theta,
            kappa,
            detected_outlier_aps,
            grouping,
            diagnostics: Diagnostics {
                iterations: stats.0,
                converged: stats.1,
                kkt_residual: stats.2,
                objective_value: stats.3,
                selected_aps: selection.selected().to_vec(),
                outlier_threshold: threshold,
                fallback,
            },
        })
    }

    fn fallback_position(&self, theta: &[f64], y: &OnlineMeasurement) -> Result<((f64, f64), Option<Fallback>)> {
        let best = theta
            .iter()
            .enumerate()
            .filter(|(_, t)| **t != 0.0)
            .fold(None::<(usize, f64)>, |b, (j, t)| match b {
                Some((_, m)) if m >= t.abs() => b,
                _ => Some((j, t.abs())),
            });
        if let Some((j, _)) = best {
            return Ok((self.map.rps[j].position(), Some(Fallback::LargestMagnitude)));
        }
        let yv = DVector::from_column_slice(&y.y);
        let nearest = (0..self.map.num_rps())
            .map(|j| (j, (self.map.psi.column(j) - &yv).norm_squared()))
            .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
            .0;
        Ok((self.map.rps[nearest].position(), Some(Fallback::NearestFingerprint)))
    }
}

/// Lasso on the row-orthogonalized system: with `H^T = Q R`, solve
/// `min 1/2 ||R^-T y - Q^T theta||^2 + lambda1 ||theta||_1`.
/// Iterations, convergence flag, KKT residual and objective value.
type SolveStats = (usize, bool, f64, f64);

fn orthogonalized_lasso(h: &DMatrix<f64>, y: &[f64], cfg: &LocalizerConfig) -> Result<(Vec<f64>, SolveStats)> {
    let (s, n) = h.shape();
    let qr = h.transpose().qr();
    let q = qr.q();
    let r = qr.r();
    let rank = s.min(n);
    let y = DVector::from_column_slice(y);
    let rt = r.transpose();
    let z = rt
        .solve_lower_triangular(&y)
        .filter(|z| z.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::invalid("H", "selected radio map rows are linearly dependent"))?;
    let design = q.columns(0, rank).transpose();
    let problem = SglProblem::new(
        DenseOperator::new(design)?,
        z.iter().copied().collect(),
        cfg.lambda1,
        0.0,
        GroupPenalty::singletons(n),
    )
    .with_options(cfg.solver.clone());
    let sol = solver::solve(&problem)?;
    let stats = (sol.iterations, sol.converged, sol.kkt_residual, sol.objective_value);
    Ok((sol.theta, stats))
}

pub fn localize(map: &RadioMap, tensor: Option<&FingerprintTensor>, y: &OnlineMeasurement, cfg: &LocalizerConfig) -> Result<LocalizationResult> {
    Localizer::new(map, tensor)?.localize(y, cfg)
}

/// Same pipeline with the group term off and the design orthogonalized.
pub fn cs_baseline(map: &RadioMap, tensor: Option<&FingerprintTensor>, y: &OnlineMeasurement, cfg: &LocalizerConfig) -> Result<LocalizationResult> {
    let cfg = LocalizerConfig {
        mode: Mode::Cs,
        lambda2: 0.0,
        ..cfg.clone()
    };
    localize(map, tensor, y, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio_map::build_radio_map;
    use crate::simulator::{generate_tensor, SyntheticScene};

    fn rps(points: &[(f64, f64)]) -> Vec<ReferencePoint> {
        points.iter().enumerate().map(|(i, &(x, y))| ReferencePoint::new(i, x, y)).collect()
    }

    #[test]
    fn centroid_examples() {
        let r = rps(&[(0.0, 0.0), (3.0, 4.0), (6.0, 0.0)]);
        assert_eq!(centroid(&[0.0, 1.0, 0.0], &r).unwrap(), (3.0, 4.0));
        let two = rps(&[(0.0, 0.0), (2.0, 0.0)]);
        assert_eq!(centroid(&[0.5, 0.5], &two).unwrap(), (1.0, 0.0));
        let a = centroid(&[0.2, 0.3, 0.5], &r).unwrap();
        let b = centroid(&[0.6, 0.9, 1.5], &r).unwrap();
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        assert_eq!(centroid(&[-1.0, 1.0, 0.0], &r).unwrap(), (3.0, 4.0));
        assert!(centroid(&[0.0, -1.0, 0.0], &r).is_err());
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(outlier_threshold(&[0.0, 0.0, 30.0]), 5.0);
        assert_eq!(outlier_threshold(&[4.0, 4.0, 4.0, 30.0]), 12.0);
    }

    fn scene() -> (RadioMap, FingerprintTensor) {
        let scene = SyntheticScene::desk_scale(21, 7).with_sigma(0.0);
        let (tensor, rps) = generate_tensor(&scene, 2).unwrap();
        (build_radio_map(&tensor, &rps).unwrap(), tensor)
    }

    #[test]
    fn exact_fingerprint_replay_lands_near_rp() {
        let (map, _) = scene();
        let loc = Localizer::new(&map, None).unwrap();
        let cfg = LocalizerConfig {
            ap_method: ApMethod::Strongest,
            num_aps: 21,
            lambda1: 1e-3,
            lambda2: 1e-5,
            ..LocalizerConfig::gs()
        };
        for j in [0, 37, 100, 191] {
            let y = OnlineMeasurement::new(map.fingerprint(j), None).unwrap();
            let res = loc.localize(&y, &cfg).unwrap();
            let p = map.rps[j];
            let err = ((res.position.0 - p.x).powi(2) + (res.position.1 - p.y).powi(2)).sqrt();
            assert!(err <= 1.5, "rp {j}: error {err}");
        }
    }

    #[test]
    fn fisher_requires_tensor() {
        let (map, tensor) = scene();
        let y = OnlineMeasurement::new(map.fingerprint(5), None).unwrap();
        assert!(localize(&map, None, &y, &LocalizerConfig::gs()).is_err());
        assert!(localize(&map, Some(&tensor), &y, &LocalizerConfig::gs()).is_ok());
    }

    #[test]
    fn position_stays_in_bounding_box() {
        let (map, tensor) = scene();
        let loc = Localizer::new(&map, Some(&tensor)).unwrap();
        let (xmax, ymax) = map.rps.iter().fold((f64::MIN, f64::MIN), |m, p| (m.0.max(p.x), m.1.max(p.y)));
        for mode in [Mode::Gs, Mode::Mgs, Mode::Cs] {
            let y = OnlineMeasurement::new(vec![-70.0; 21], None).unwrap();
            let res = loc.localize(&y, &LocalizerConfig::for_mode(mode)).unwrap();
            assert!(res.position.0 >= 0.0 && res.position.0 <= xmax);
            assert!(res.position.1 >= 0.0 && res.position.1 <= ymax);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (map, tensor) = scene();
        let y = OnlineMeasurement::new(vec![-70.0; 21], None).unwrap();
        for cfg in [
            LocalizerConfig { k: 0, ..LocalizerConfig::gs() },
            LocalizerConfig { num_aps: 0, ..LocalizerConfig::gs() },
            LocalizerConfig { num_aps: 22, ..LocalizerConfig::gs() },
            LocalizerConfig { lambda1: -1.0, ..LocalizerConfig::gs() },
        ] {
            assert!(localize(&map, Some(&tensor), &y, &cfg).is_err());
        }
    }
}
