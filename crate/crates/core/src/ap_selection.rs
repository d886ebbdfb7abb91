//! AP selection: rank APs and gather the chosen rows.
//!
//! A [`SelectionMatrix`] is the S x L row-selection matrix with a single one
//! per row, stored as the list of chosen AP indices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio_map::{FingerprintTensor, OnlineMeasurement};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMatrix {
    selected: Vec<usize>,
    num_aps: usize,
}

impl SelectionMatrix {
    pub fn new(selected: Vec<usize>, num_aps: usize) -> Result<Self> {
        if selected.len() > num_aps {
            return Err(Error::invalid("S", format!("cannot select {} of {num_aps} APs", selected.len())));
        }
        let mut seen = vec![false; num_aps];
        for &i in &selected {
            if i >= num_aps {
                return Err(Error::invalid("selected", format!("AP index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("selected", format!("AP index {i} selected twice")));
            }
        }
        Ok(Self { selected, num_aps })
    }

    pub fn identity(num_aps: usize) -> Self {
        Self {
            selected: (0..num_aps).collect(),
            num_aps,
        }
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn apply_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.num_aps {
            return Err(Error::Dimension {
                axis: "AP vector",
                expected: self.num_aps,
                actual: v.len(),
            });
        }
        Ok(self.selected.iter().map(|&i| v[i]).collect())
    }

    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.num_aps {
            return Err(Error::Dimension {
                axis: "AP rows",
                expected: self.num_aps,
                actual: m.nrows(),
            });
        }
        Ok(m.select_rows(self.selected.iter()))
    }

    /// The dense S x L matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut phi = DMatrix::zeros(self.selected.len(), self.num_aps);
        for (r, &c) in self.selected.iter().enumerate() {
            phi[(r, c)] = 1.0;
        }
        phi
    }
}

fn check_count(s: usize, l: usize) -> Result<()> {
    if s == 0 || s > l {
        return Err(Error::invalid("S", format!("must lie in [1, {l}], got {s}")));
    }
    Ok(())
}

/// Indices of the `s` largest scores, descending; ties go to the lower index.
fn top_s(scores: &[f64], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(s);
    order
}

pub fn select_strongest(y: &OnlineMeasurement, s: usize) -> Result<SelectionMatrix> {
    check_count(s, y.y.len())?;
    SelectionMatrix::new(top_s(&y.y, s), y.y.len())
}

/// Strongest-AP selection restricted to readings above `floor_dbm`; may
/// return fewer than `s` APs, but never none.
pub fn select_strongest_above(y: &OnlineMeasurement, s: usize, floor_dbm: f64) -> Result<SelectionMatrix> {
    check_count(s, y.y.len())?;
    let mut picked: Vec<usize> = top_s(&y.y, s).into_iter().filter(|&i| y.y[i] > floor_dbm).collect();
    if picked.is_empty() {
        picked = top_s(&y.y, 1);
    }
    SelectionMatrix::new(picked, y.y.len())
}

/// Fisher score per AP: spread of the time-averaged fingerprint across RPs
/// over the pooled temporal variance at each RP.
///
/// `0/0` scores 0 (an AP that never changes carries no information) and
/// `x/0` with `x > 0` scores `+inf`.
pub fn fisher_scores(tensor: &FingerprintTensor) -> Result<Vec<f64>> {
    let m = tensor.num_samples();
    if m < 2 {
        return Err(Error::invalid("M", "Fisher scores need at least two time samples"));
    }
    let n = tensor.num_rps();
    let scores = (0..tensor.num_aps())
        .map(|i| {
            let means: Vec<f64> = (0..n)
                .map(|j| tensor.samples(i, j).iter().sum::<f64>() / m as f64)
                .collect();
            let grand = means.iter().sum::<f64>() / n as f64;
            let between: f64 = means.iter().map(|p| (p - grand).powi(2)).sum();
            let within: f64 = (0..n)
                .map(|j| tensor.samples(i, j).iter().map(|r| (r - means[j]).powi(2)).sum::<f64>())
                .sum::<f64>()
                / (m - 1) as f64;
            if within > 0.0 {
                between / within
            } else if between > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores)
}

pub fn select_fisher(tensor: &FingerprintTensor, s: usize) -> Result<SelectionMatrix> {
    check_count(s, tensor.num_aps())?;
    let scores = fisher_scores(tensor)?;
    SelectionMatrix::new(top_s(&scores, s), tensor.num_aps())
}
