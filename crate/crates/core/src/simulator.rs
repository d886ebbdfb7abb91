//! Synthetic fingerprint generator.
//!
//! RSS follows a log-distance path-loss model with i.i.d. Gaussian shadowing
//! per sample, clipped to `[MISSING_RSS_DBM, tx_power_dbm]`:
//!
//! `rss = tx_power - 10 n log10(max(d, d0)) + N(0, sigma^2)`
//!
//! Reference points lie on a `grid_rows x grid_cols` lattice and are numbered
//! in serpentine order (row 0 left to right, row 1 right to left, ...), so
//! consecutive RP indices are always spatial neighbours.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio_map::{FingerprintTensor, OnlineMeasurement, ReferencePoint, MISSING_RSS_DBM};

/// Reference distance of the path-loss model, in feet.
pub const REFERENCE_DISTANCE_FT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScene {
    #[serde(rename = "aps")]
    pub ap_positions: Vec<(f64, f64)>,
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: f64,
    #[serde(default = "default_exponent")]
    pub path_loss_exponent: f64,
    #[serde(default = "default_sigma")]
    pub shadowing_sigma_db: f64,
    #[serde(default = "default_rows")]
    pub grid_rows: usize,
    #[serde(default = "default_cols")]
    pub grid_cols: usize,
    #[serde(default = "default_spacing")]
    pub spacing_ft: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_tx_power() -> f64 {
    -30.0
}
fn default_exponent() -> f64 {
    3.0
}
fn default_sigma() -> f64 {
    4.0
}
fn default_rows() -> usize {
    12
}
fn default_cols() -> usize {
    16
}
fn default_spacing() -> f64 {
    3.0
}

impl SyntheticScene {
    /// 12 x 16 grid at 3 ft (192 RPs) with `num_aps` APs scattered over the
    /// floor and a 15 ft margin around it.
    pub fn desk_scale(num_aps: usize, seed: u64) -> Self {
        let rows = default_rows();
        let cols = default_cols();
        let spacing = default_spacing();
        let width = (cols - 1) as f64 * spacing;
        let height = (rows - 1) as f64 * spacing;
        let margin = 15.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce_e5ce);
        let ap_positions = (0..num_aps)
            .map(|_| {
                (
                    rng.random_range(-margin..width + margin),
                    rng.random_range(-margin..height + margin),
                )
            })
            .collect();
        Self {
            ap_positions,
            tx_power_dbm: default_tx_power(),
            path_loss_exponent: default_exponent(),
            shadowing_sigma_db: default_sigma(),
            grid_rows: rows,
            grid_cols: cols,
            spacing_ft: spacing,
            seed,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.shadowing_sigma_db = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ap_positions.is_empty() {
            return Err(Error::invalid("aps", "at least one AP is required"));
        }
        if self.ap_positions.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite("AP positions"));
        }
        if !(self.spacing_ft > 0.0) {
            return Err(Error::invalid("spacing_ft", "must be positive"));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(Error::invalid("shadowing_sigma_db", "must be non-negative"));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::invalid("path_loss_exponent", "must be positive"));
        }
        if !(self.tx_power_dbm <= 0.0) {
            return Err(Error::invalid("tx_power_dbm", "must be finite and <= 0 dBm"));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::invalid("grid", "grid must have at least one row and column"));
        }
        Ok(())
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn ap_ids(&self) -> Vec<String> {
        (0..self.num_aps()).map(|i| format!("02:00:00:00:{:02x}:{:02x}", i >> 8, i & 0xff)).collect()
    }

    /// RPs in serpentine order.
    pub fn reference_points(&self) -> Vec<ReferencePoint> {
        let mut rps = Vec::with_capacity(self.grid_rows * self.grid_cols);
        for r in 0..self.grid_rows {
            for c in 0..self.grid_cols {
                let col = if r % 2 == 0 { c } else { self.grid_cols - 1 - c };
                rps.push(ReferencePoint::new(
                    rps.len(),
                    col as f64 * self.spacing_ft,
                    r as f64 * self.spacing_ft,
                ));
            }
        }
        rps
    }

    pub fn bounding_box(&self) -> ((f64, f64), (f64, f64)) {
        (
            (0.0, 0.0),
            (
                (self.grid_cols - 1) as f64 * self.spacing_ft,
                (self.grid_rows - 1) as f64 * self.spacing_ft,
            ),
        )
    }

    /// Noise-free mean RSS of AP `ap` at `pos`, before clipping.
    pub fn mean_rss(&self, ap: usize, pos: (f64, f64)) -> f64 {
        let (ax, ay) = self.ap_positions[ap];
        let d = (pos.0 - ax).hypot(pos.1 - ay).max(REFERENCE_DISTANCE_FT);
        self.tx_power_dbm - 10.0 * self.path_loss_exponent * (d / REFERENCE_DISTANCE_FT).log10()
    }

    fn clip(&self, v: f64) -> f64 {
        v.clamp(MISSING_RSS_DBM, self.tx_power_dbm)
    }

    fn noise(&self) -> Result<Normal<f64>> {
        Normal::new(0.0, self.shadowing_sigma_db)
            .map_err(|e| Error::invalid("shadowing_sigma_db", e.to_string()))
    }
}

/// Draws `M` samples per (AP, RP) pair.
pub fn generate_tensor(scene: &SyntheticScene, num_samples: usize) -> Result<(FingerprintTensor, Vec<ReferencePoint>)> {
    scene.validate()?;
    if num_samples == 0 {
        return Err(Error::invalid("num_samples", "must be at least 1"));
    }
    let rps = scene.reference_points();
    let noise = scene.noise()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let mut rss = Vec::with_capacity(scene.num_aps() * rps.len() * num_samples);
    for ap in 0..scene.num_aps() {
        for rp in &rps {
            let mean = scene.mean_rss(ap, rp.position());
            for _ in 0..num_samples {
                rss.push(scene.clip(mean + noise.sample(&mut rng)));
            }
        }
    }
    let tensor = FingerprintTensor::new(scene.ap_ids(), rps.len(), num_samples, rss)?;
    Ok((tensor, rps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    Additive,
    DropoutToSentinel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub fraction_of_aps: f64,
    pub magnitude_db: f64,
    pub mode: OutlierMode,
    pub rng_seed: u64,
}

impl OutlierSpec {
    pub fn additive(fraction_of_aps: f64, rng_seed: u64) -> Self {
        Self {
            fraction_of_aps,
            magnitude_db: 30.0,
            mode: OutlierMode::Additive,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction_of_aps) {
            return Err(Error::invalid("fraction_of_aps", "must lie in [0, 1]"));
        }
        if !self.magnitude_db.is_finite() {
            return Err(Error::NonFinite("outlier magnitude"));
        }
        Ok(())
    }

    /// `ceil(fraction * L)`, guarded against products like `0.1 * 30` landing
    /// one ulp above an integer.
    pub fn corrupted_count(&self, num_aps: usize) -> usize {
        let raw = self.fraction_of_aps * num_aps as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(num_aps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedOnline {
    pub measurement: OnlineMeasurement,
    pub clean: Vec<f64>,
    /// Sorted indices of corrupted APs.
    pub corrupted: Vec<usize>,
}

/// One online reading at `position`. Outliers, when requested, are applied on
/// top of the noisy clean reading and are not clipped to 0 dBm.
pub fn generate_online(
    scene: &SyntheticScene,
    position: (f64, f64),
    outliers: Option<&OutlierSpec>,
    seed: u64,
) -> Result<SimulatedOnline> {
    scene.validate()?;
    let ((x0, y0), (x1, y1)) = scene.bounding_box();
    if position.0 < x0 || position.0 > x1 || position.1 < y0 || position.1 > y1 {
        log::warn!("online position {position:?} lies outside the RP bounding box");
    }
    let noise = scene.noise()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean: Vec<f64> = (0..scene.num_aps())
        .map(|ap| scene.clip(scene.mean_rss(ap, position) + noise.sample(&mut rng)))
        .collect();
    let mut y = clean.clone();
    let mut corrupted = Vec::new();
    if let Some(spec) = outliers {
        spec.validate()?;
        let count = spec.corrupted_count(y.len());
        let mut orng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        corrupted = sample(&mut orng, y.len(), count).into_vec();
        corrupted.sort_unstable();
        for &i in &corrupted {
            y[i] = match spec.mode {
                OutlierMode::Additive => y[i] + spec.magnitude_db,
                OutlierMode::DropoutToSentinel => MISSING_RSS_DBM,
            };
        }
    }
    Ok(SimulatedOnline {
        measurement: OnlineMeasurement::new(y, Some(position))?,
        clean,
        corrupted,
    })
}

/// Uniform random positions inside the RP bounding box.
pub fn random_positions(scene: &SyntheticScene, count: usize, seed: u64) -> Vec<(f64, f64)> {
    let ((x0, y0), (x1, y1)) = scene.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (x0 + (x1 - x0) * rng.random::<f64>(), y0 + (y1 - y0) * rng.random::<f64>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio_map::build_radio_map;

    fn one_ap(at: (f64, f64), sigma: f64) -> SyntheticScene {
        SyntheticScene {
            ap_positions: vec![at],
            tx_power_dbm: -30.0,
            path_loss_exponent: 3.0,
            shadowing_sigma_db: sigma,
            grid_rows: 2,
            grid_cols: 3,
            spacing_ft: 3.0,
            seed: 7,
        }
    }

    #[test]
    fn colocated_noise_free_reads_tx_power() {
        let scene = one_ap((0.0, 0.0), 0.0);
        let (t, _) = generate_tensor(&scene, 4).unwrap();
        assert!(t.samples(0, 0).iter().all(|&v| v == -30.0));
    }

    #[test]
    fn doubling_distance_drops_by_closed_form() {
        let scene = one_ap((0.0, 0.0), 0.0);
        let near = scene.mean_rss(0, (5.0, 0.0));
        let far = scene.mean_rss(0, (10.0, 0.0));
        let expected = 10.0 * 3.0 * 2f64.log10();
        assert!((near - far - expected).abs() < 1e-12);
        assert!((expected - 9.0309).abs() < 1e-4);
    }

    #[test]
    fn same_seed_same_tensor() {
        let scene = SyntheticScene::desk_scale(5, 11);
        assert_eq!(generate_tensor(&scene, 3).unwrap(), generate_tensor(&scene, 3).unwrap());
    }

    #[test]
    fn tensor_values_in_range() {
        let scene = SyntheticScene::desk_scale(8, 3).with_sigma(10.0);
        let (t, _) = generate_tensor(&scene, 5).unwrap();
        for ap in 0..t.num_aps() {
            for rp in 0..t.num_rps() {
                assert!(t.samples(ap, rp).iter().all(|&v| (MISSING_RSS_DBM..=-30.0).contains(&v)));
            }
        }
    }

    #[test]
    fn noise_free_map_reproduces_model() {
        let scene = SyntheticScene::desk_scale(4, 2).with_sigma(0.0);
        let (t, rps) = generate_tensor(&scene, 3).unwrap();
        let map = build_radio_map(&t, &rps).unwrap();
        for ap in 0..4 {
            for rp in &rps {
                let model = scene.mean_rss(ap, rp.position()).max(MISSING_RSS_DBM);
                assert!((map.psi[(ap, rp.index)] - model).abs() < 1e-12);
                assert!(t.samples(ap, rp.index).iter().all(|&v| v == t.get(ap, rp.index, 0)));
            }
        }
    }

    #[test]
    fn rss_non_increasing_in_distance() {
        let scene = one_ap((0.0, 0.0), 0.0);
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let v = scene.mean_rss(0, (0.37 * k as f64, 0.0));
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn serpentine_neighbours_are_adjacent() {
        let scene = SyntheticScene::desk_scale(1, 0);
        let rps = scene.reference_points();
        assert_eq!(rps.len(), 192);
        for w in rps.windows(2) {
            let d = (w[0].x - w[1].x).hypot(w[0].y - w[1].y);
            assert!((d - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_fraction_is_clean() {
        let scene = SyntheticScene::desk_scale(21, 1);
        let spec = OutlierSpec::additive(0.0, 9);
        let s = generate_online(&scene, (10.0, 10.0), Some(&spec), 4).unwrap();
        assert_eq!(s.measurement.y, s.clean);
        assert!(s.corrupted.is_empty());
    }

    #[test]
    fn full_corruption_shifts_everything() {
        let scene = SyntheticScene::desk_scale(21, 1);
        let spec = OutlierSpec::additive(1.0, 9);
        let s = generate_online(&scene, (10.0, 10.0), Some(&spec), 4).unwrap();
        for (y, c) in s.measurement.y.iter().zip(&s.clean) {
            assert_eq!(*y, c + 30.0);
        }
    }

    #[test]
    fn forty_percent_of_21_is_nine() {
        let scene = SyntheticScene::desk_scale(21, 1);
        let spec = OutlierSpec::additive(0.4, 5);
        let a = generate_online(&scene, (1.0, 1.0), Some(&spec), 2).unwrap();
        let b = generate_online(&scene, (1.0, 1.0), Some(&spec), 2).unwrap();
        assert_eq!(a.corrupted.len(), 9);
        assert_eq!(a.corrupted, b.corrupted);
        assert_eq!(OutlierSpec::additive(0.1, 0).corrupted_count(30), 3);
    }

    #[test]
    fn dropout_mode_writes_sentinel() {
        let scene = SyntheticScene::desk_scale(10, 1);
        let spec = OutlierSpec {
            fraction_of_aps: 0.3,
            magnitude_db: 30.0,
            mode: OutlierMode::DropoutToSentinel,
            rng_seed: 1,
        };
        let s = generate_online(&scene, (1.0, 1.0), Some(&spec), 2).unwrap();
        assert_eq!(s.corrupted.len(), 3);
        for &i in &s.corrupted {
            assert_eq!(s.measurement.y[i], MISSING_RSS_DBM);
        }
    }

    #[test]
    fn scene_config_keys() {
        let toml_text = "aps = [[0.0, 0.0], [10.0, 5.0]]\ntx_power_dbm = -30.0\npath_loss_exponent = 3.0\nshadowing_sigma_db = 4.0\ngrid_rows = 2\ngrid_cols = 2\nspacing_ft = 3.0\nseed = 1\n";
        let s: SyntheticScene = toml::from_str(toml_text).unwrap();
        assert_eq!(s.num_aps(), 2);
        assert!(toml::from_str::<SyntheticScene>("aps = [[0.0, 0.0]]\nbogus = 1\n").is_err());
    }

    #[test]
    fn invalid_scene_rejected() {
        let mut s = one_ap((0.0, 0.0), 1.0);
        s.spacing_ft = 0.0;
        assert!(generate_tensor(&s, 1).is_err());
        let mut s = one_ap((0.0, 0.0), 1.0);
        s.shadowing_sigma_db = -1.0;
        assert!(generate_tensor(&s, 1).is_err());
        assert!(generate_tensor(&one_ap((0.0, 0.0), 1.0), 0).is_err());
    }
}
