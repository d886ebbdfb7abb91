//! Online layered clustering of reference points.
//!
//! Each RP carries a binary coverage vector (which APs it hears reliably).
//! For an online reading, RPs are binned into `K` equal-width layers of
//! Hamming distance between their coverage vector and the reading's, and each
//! layer gets the weight `2 / (d_{k-1} + d_k)`.
//!
//! Layer boundaries are `d_k = d_min + k (d_max - d_min) / K`, compared in
//! exact integer arithmetic after scaling by `K`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio_map::{FingerprintTensor, OnlineMeasurement, MISSING_RSS_DBM};

pub const DEFAULT_GAMMA_DBM: f64 = -85.0;
pub const DEFAULT_AVAILABILITY: f64 = 0.90;

/// Weight used when a layer's boundaries sum to zero.
const DEGENERATE_WEIGHT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageProfile {
    /// `rp_coverage[j][i]` is true when AP `i` covers RP `j`.
    pub rp_coverage: Vec<Vec<bool>>,
    pub threshold_gamma_dbm: f64,
    pub availability_fraction: f64,
}

impl CoverageProfile {
    pub fn num_rps(&self) -> usize {
        self.rp_coverage.len()
    }

    pub fn num_aps(&self) -> usize {
        self.rp_coverage.first().map_or(0, Vec::len)
    }
}

pub fn build_coverage(tensor: &FingerprintTensor, gamma: f64) -> Result<CoverageProfile> {
    build_coverage_with(tensor, gamma, DEFAULT_AVAILABILITY)
}

/// AP `i` covers RP `j` when at least `availability` of its samples there are
/// strictly above `gamma`.
pub fn build_coverage_with(tensor: &FingerprintTensor, gamma: f64, availability: f64) -> Result<CoverageProfile> {
    if !(gamma > MISSING_RSS_DBM) {
        return Err(Error::invalid("gamma", format!("must exceed the {MISSING_RSS_DBM} dBm sentinel")));
    }
    if !(0.0..=1.0).contains(&availability) {
        return Err(Error::invalid("availability_fraction", "must lie in [0, 1]"));
    }
    let needed = availability * tensor.num_samples() as f64 - 1e-9;
    let rp_coverage = (0..tensor.num_rps())
        .map(|j| {
            (0..tensor.num_aps())
                .map(|i| {
                    let above = tensor.samples(i, j).iter().filter(|&&v| v > gamma).count();
                    above as f64 >= needed
                })
                .collect()
        })
        .collect();
    Ok(CoverageProfile {
        rp_coverage,
        threshold_gamma_dbm: gamma,
        availability_fraction: availability,
    })
}

pub fn online_coverage(y: &OnlineMeasurement, gamma: f64) -> Vec<bool> {
    y.y.iter().map(|&v| v > gamma).collect()
}

pub fn hamming(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            axis: "coverage vector",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// How an RP sitting exactly on a shared boundary `d_k` picks its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Always the lower layer `k`.
    #[default]
    LowerGroup,
    /// Uniformly between `k` and `k + 1`.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub groups: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    /// `d_0 ..= d_K`.
    pub boundaries: Vec<f64>,
    pub d_min: usize,
    pub d_max: usize,
}

impl Grouping {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// A single group holding `0..n` with the given weight.
    pub fn single(n: usize, weight: f64) -> Self {
        Self {
            groups: vec![(0..n).collect()],
            weights: vec![weight],
            boundaries: vec![0.0, 0.0],
            d_min: 0,
            d_max: 0,
        }
    }

    pub fn group_of(&self) -> Vec<usize> {
        let n = self.groups.iter().map(Vec::len).sum();
        let mut owner = vec![usize::MAX; n];
        for (k, g) in self.groups.iter().enumerate() {
            for &j in g {
                owner[j] = k;
            }
        }
        owner
    }
}

pub fn layered_cluster(profile: &CoverageProfile, online: &[bool], k: usize) -> Result<Grouping> {
    layered_cluster_with(profile, online, k, TieRule::LowerGroup)
}

pub fn layered_cluster_with(profile: &CoverageProfile, online: &[bool], k: usize, tie: TieRule) -> Result<Grouping> {
    if k == 0 {
        return Err(Error::invalid("K", "at least one group is required"));
    }
    if profile.num_rps() == 0 {
        return Err(Error::invalid("profile", "no reference points"));
    }
    let distances = profile
        .rp_coverage
        .iter()
        .map(|c| hamming(online, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(cluster_distances(&distances, k, tie))
}

/// Layering step on precomputed Hamming distances.
pub fn cluster_distances(distances: &[usize], k: usize, tie: TieRule) -> Grouping {
    assert!(k >= 1 && !distances.is_empty());
    let d_min = *distances.iter().min().unwrap();
    let d_max = *distances.iter().max().unwrap();
    let range = (d_max - d_min) as u128;
    let kk = k as u128;
    let mut rng = match tie {
        TieRule::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        TieRule::LowerGroup => None,
    };

    let mut groups = vec![Vec::new(); k];
    for (j, &d) in distances.iter().enumerate() {
        // smallest layer index g (1-based) with K (d - d_min) <= g * range
        let scaled = kk * (d - d_min) as u128;
        let layer = if range == 0 {
            1
        } else {
            scaled.div_ceil(range).max(1) as usize
        };
        let on_shared_boundary = range != 0 && layer < k && scaled == layer as u128 * range && d != d_min;
        let bump = on_shared_boundary && rng.as_mut().is_some_and(|r| r.random_bool(0.5));
        let layer = if bump { layer + 1 } else { layer };
        groups[layer - 1].push(j);
    }

    let boundaries: Vec<f64> = (0..=k)
        .map(|g| d_min as f64 + g as f64 * (d_max - d_min) as f64 / k as f64)
        .collect();
    let weights = (1..=k)
        .map(|g| {
            // d_{g-1} + d_g = 2 d_min + (2g - 1) range / K, kept exact
            let num = 2 * kk * d_min as u128 + (2 * g as u128 - 1) * range;
            if num == 0 {
                DEGENERATE_WEIGHT
            } else {
                2.0 * k as f64 / num as f64
            }
        })
        .collect();

    Grouping {
        groups,
        weights,
        boundaries,
        d_min,
        d_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(l: usize) -> Vec<String> {
        (0..l).map(|i| i.to_string()).collect()
    }

    #[test]
    fn coverage_examples() {
        let t = FingerprintTensor::new(ids(1), 1, 3, vec![-40.0; 3]).unwrap();
        assert!(build_coverage(&t, -80.0).unwrap().rp_coverage[0][0]);

        let mut eighty = vec![-40.0; 8];
        eighty.extend([-90.0, -90.0]);
        let t = FingerprintTensor::new(ids(1), 1, 10, eighty).unwrap();
        assert!(!build_coverage(&t, -80.0).unwrap().rp_coverage[0][0]);

        let mut ninety = vec![-40.0; 9];
        ninety.push(-90.0);
        let t = FingerprintTensor::new(ids(1), 1, 10, ninety).unwrap();
        assert!(build_coverage(&t, -80.0).unwrap().rp_coverage[0][0]);

        let t = FingerprintTensor::new(ids(1), 1, 4, vec![-95.0; 4]).unwrap();
        assert!(!build_coverage(&t, -80.0).unwrap().rp_coverage[0][0]);
    }

    #[test]
    fn gamma_must_exceed_sentinel() {
        let t = FingerprintTensor::new(ids(1), 1, 1, vec![-40.0]).unwrap();
        assert!(build_coverage(&t, -95.0).is_err());
    }

    #[test]
    fn online_examples() {
        let y = OnlineMeasurement::new(vec![-40.0, -95.0], None).unwrap();
        assert_eq!(online_coverage(&y, -80.0), vec![true, false]);
        let y = OnlineMeasurement::new(vec![-90.0, -95.0], None).unwrap();
        assert_eq!(online_coverage(&y, -80.0), vec![false, false]);
        let y = OnlineMeasurement::new(vec![-80.0], None).unwrap();
        assert_eq!(online_coverage(&y, -80.0), vec![false]);
    }

    #[test]
    fn hamming_examples() {
        let a = [true, true, false];
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        assert_eq!(hamming(&a, &[false, true, true]).unwrap(), 2);
        let c: Vec<bool> = a.iter().map(|b| !b).collect();
        assert_eq!(hamming(&a, &c).unwrap(), 3);
        assert!(hamming(&a, &[true]).is_err());
    }

    #[test]
    fn single_layer_collapses() {
        let g = cluster_distances(&[1, 4, 2, 3], 1, TieRule::LowerGroup);
        assert_eq!(g.groups, vec![vec![0, 1, 2, 3]]);
        assert_eq!(g.weights, vec![2.0 / 5.0]);
    }

    #[test]
    fn four_rp_two_layers() {
        // r = 1.5: d_0 = 0, d_1 = 1.5, d_2 = 3
        let g = cluster_distances(&[0, 1, 2, 3], 2, TieRule::LowerGroup);
        assert_eq!(g.boundaries, vec![0.0, 1.5, 3.0]);
        assert_eq!(g.groups, vec![vec![0, 1], vec![2, 3]]);
        assert!((g.weights[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((g.weights[1] - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn equidistant_rps() {
        let g = cluster_distances(&[3, 3, 3], 4, TieRule::LowerGroup);
        assert_eq!(g.groups[0], vec![0, 1, 2]);
        assert!(g.groups[1..].iter().all(Vec::is_empty));
        assert!(g.weights.iter().all(|&w| (w - 2.0 / 6.0).abs() < 1e-15));

        let g = cluster_distances(&[0, 0], 3, TieRule::LowerGroup);
        assert_eq!(g.weights, vec![DEGENERATE_WEIGHT; 3]);
    }

    #[test]
    fn boundary_tie_goes_low_unless_random() {
        // range 4, K = 2: d = 2 sits on d_1
        let g = cluster_distances(&[0, 2, 4], 2, TieRule::LowerGroup);
        assert_eq!(g.groups, vec![vec![0, 1], vec![2]]);
        let mut moved = false;
        for seed in 0..32 {
            let g = cluster_distances(&[0, 2, 4], 2, TieRule::Random { seed });
            assert!(g.groups[0].contains(&0) && g.groups[1].contains(&2));
            moved |= g.groups[1].contains(&1);
        }
        assert!(moved);
    }

    #[test]
    fn k_larger_than_distinct_distances() {
        let g = cluster_distances(&[0, 1], 5, TieRule::LowerGroup);
        assert_eq!(g.groups.iter().map(Vec::len).sum::<usize>(), 2);
        assert!(g.groups.iter().any(Vec::is_empty));
        assert!(g.weights.iter().all(|w| *w > 0.0 && w.is_finite()));
    }

    #[test]
    fn profile_path_uses_hamming() {
        let profile = CoverageProfile {
            rp_coverage: vec![vec![true, true], vec![true, false], vec![false, false]],
            threshold_gamma_dbm: -85.0,
            availability_fraction: 0.9,
        };
        let g = layered_cluster(&profile, &[true, true], 2).unwrap();
        assert_eq!(g.d_min, 0);
        assert_eq!(g.d_max, 2);
        assert_eq!(g.groups, vec![vec![0, 1], vec![2]]);
        assert!(layered_cluster(&profile, &[true, true], 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_monotone_weights(ds in prop::collection::vec(0usize..30, 1..80), k in 1usize..30) {
            let g = cluster_distances(&ds, k, TieRule::LowerGroup);
            let mut seen = vec![false; ds.len()];
            for grp in &g.groups {
                for &j in grp {
                    prop_assert!(!seen[j]);
                    seen[j] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            prop_assert!(g.weights.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(g.weights.iter().all(|&w| w > 0.0));
            // every member satisfies d_{k-1} <= d <= d_k
            for (layer, grp) in g.groups.iter().enumerate() {
                for &j in grp {
                    let d = ds[j] as f64;
                    prop_assert!(g.boundaries[layer] - 1e-9 <= d && d <= g.boundaries[layer + 1] + 1e-9);
                }
            }
        }

        #[test]
        fn hamming_triangle(bits in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 0..64)) {
            let a: Vec<bool> = bits.iter().map(|t| t.0).collect();
            let b: Vec<bool> = bits.iter().map(|t| t.1).collect();
            let c: Vec<bool> = bits.iter().map(|t| t.2).collect();
            let ab = hamming(&a, &b).unwrap();
            prop_assert_eq!(ab, hamming(&b, &a).unwrap());
            prop_assert!(hamming(&a, &c).unwrap() <= ab + hamming(&b, &c).unwrap());
            prop_assert_eq!(ab == 0, a == b);
        }

        #[test]
        fn ordering_invariance(ds in prop::collection::vec(0usize..20, 1..40), k in 1usize..8, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut perm: Vec<usize> = (0..ds.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<usize> = perm.iter().map(|&p| ds[p]).collect();
            let a = cluster_distances(&ds, k, TieRule::LowerGroup);
            let b = cluster_distances(&permuted, k, TieRule::LowerGroup);
            prop_assert_eq!(&a.weights, &b.weights);
            for (ga, gb) in a.groups.iter().zip(&b.groups) {
                let mut mapped: Vec<usize> = gb.iter().map(|&j| perm[j]).collect();
                mapped.sort_unstable();
                prop_assert_eq!(ga, &mapped);
            }
        }
    }
}
