//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use gsloc::solver::{DenseOperator, GroupPenalty, SglProblem};

/// Dense sparse-group-lasso instance held in plain row-major storage.
#[derive(Debug, Clone)]
pub struct Instance {
    pub rows: usize,
    pub cols: usize,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub groups: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    pub lambda3: Option<f64>,
}

impl Instance {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.cols + j]
    }

    pub fn problem(&self) -> SglProblem<DenseOperator> {
        let m = nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.h);
        let p = SglProblem::new(
            DenseOperator::new(m).unwrap(),
            self.y.clone(),
            self.lambda1,
            self.lambda2,
            GroupPenalty::new(self.groups.clone(), self.weights.clone()),
        );
        match self.lambda3 {
            Some(l3) => p.with_outliers(l3),
            None => p,
        }
    }

    fn residual(&self, theta: &[f64], kappa: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                let fit: f64 = (0..self.cols).map(|j| self.at(i, j) * theta[j]).sum();
                self.y[i] - fit - kappa.get(i).copied().unwrap_or(0.0)
            })
            .collect()
    }

    /// Objective written out term by term.
    pub fn objective(&self, theta: &[f64], kappa: &[f64]) -> f64 {
        let r = self.residual(theta, kappa);
        let fit = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        let l1 = self.lambda1 * theta.iter().map(|v| v.abs()).sum::<f64>();
        let group: f64 = self
            .groups
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| w * g.iter().map(|&j| theta[j] * theta[j]).sum::<f64>().sqrt())
            .sum();
        let out = self.lambda3.map_or(0.0, |l3| l3 * kappa.iter().map(|v| v.abs()).sum::<f64>());
        fit + l1 + self.lambda2 * group + out
    }

    /// `||H^T y||_inf`.
    pub fn correlation_max(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.at(i, j) * self.y[i]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Plain proximal gradient with step `1 / (||H||_F^2 + 1)`, which never
/// exceeds the inverse Lipschitz constant. Stops after `max_iter` steps or
/// once an iteration leaves every coordinate unchanged.
pub fn ista(inst: &Instance, max_iter: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let fro: f64 = inst.h.iter().map(|v| v * v).sum();
    let step = 1.0 / (fro + 1.0);
    let mut theta = vec![0.0; inst.cols];
    let mut kappa = vec![0.0; if inst.lambda3.is_some() { inst.rows } else { 0 }];
    for _ in 0..max_iter {
        let r = inst.residual(&theta, &kappa);
        let mut next: Vec<f64> = (0..inst.cols)
            .map(|j| {
                let g: f64 = (0..inst.rows).map(|i| inst.at(i, j) * r[i]).sum();
                soft(theta[j] + step * g, step * inst.lambda1)
            })
            .collect();
        for (g, w) in inst.groups.iter().zip(&inst.weights) {
            let norm = g.iter().map(|&j| next[j] * next[j]).sum::<f64>().sqrt();
            let t = step * inst.lambda2 * w;
            let scale = if norm > t { 1.0 - t / norm } else { 0.0 };
            for &j in g {
                next[j] *= scale;
            }
        }
        let next_kappa: Vec<f64> = match inst.lambda3 {
            Some(l3) => kappa.iter().zip(&r).map(|(k, ri)| soft(k + step * ri, step * l3)).collect(),
            None => Vec::new(),
        };
        let still = next == theta && next_kappa == kappa;
        theta = next;
        kappa = next_kappa;
        if still {
            break;
        }
    }
    let f = inst.objective(&theta, &kappa);
    (theta, kappa, f)
}

/// Random instance with `S in [5, 30]`, `P in [10, 60]`, `K in [1, 8]`
/// groups, weights in `[0.5, 2]` and weights `lambda` drawn relative to
/// `||H^T y||_inf`; one instance in four carries an outlier block.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(5..=30);
    let cols = rng.random_range(10..=60);
    let k = rng.random_range(1..=8usize).min(cols);
    let h: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    let support: Vec<usize> = (0..cols).filter(|_| rng.random_bool(0.15)).collect();
    let mut y = vec![0.0; rows];
    for &j in &support {
        let c: f64 = StandardNormal.sample(&mut rng);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += 2.0 * c * h[i * cols + j];
        }
    }
    for yi in &mut y {
        *yi += 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    }

    let mut owner: Vec<usize> = (0..cols).map(|j| j % k).collect();
    for j in (1..cols).rev() {
        owner.swap(j, rng.random_range(0..=j));
    }
    let groups: Vec<Vec<usize>> = (0..k).map(|g| (0..cols).filter(|&j| owner[j] == g).collect()).collect();
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut inst = Instance {
        rows,
        cols,
        h,
        y,
        lambda1: 0.0,
        lambda2: 0.0,
        groups,
        weights,
        lambda3: None,
    };
    let scale = inst.correlation_max().max(1e-3);
    inst.lambda1 = rng.random_range(0.0..0.3) * scale;
    inst.lambda2 = rng.random_range(0.0..0.3) * scale;
    if rng.random_bool(0.25) {
        inst.lambda3 = Some(rng.random_range(0.05..1.0) * inst.y.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    inst
}
