//! Sparse group lasso kernel.
//!
//! Minimizes
//!
//! ```text
//! 1/2 ||y - H theta - [kappa; 0]||^2 + l1 ||theta||_1 + l2 sum_k w_k ||theta_k||_2 + l3 ||kappa||_1
//! ```
//!
//! where the outlier block `kappa` is optional and covers the leading rows of
//! the observation. Setting `l2 = 0` gives the plain lasso.
//!
//! The method is accelerated proximal gradient with a monotone safeguard: an
//! extrapolated step that raises the objective is replaced by a plain
//! proximal-gradient step from the current iterate. The step size starts at
//! `1 / L` with `L` from power iteration and is halved whenever the quadratic
//! upper bound fails. Convergence is certified by the norm of the
//! minimum-norm subgradient.

mod operator;
mod polish;

use std::fmt::Write as _;
use std::path::Path;

pub use operator::{spectral_norm_sq, DenseOperator, LinearOperator};

use serde::{Deserialize, Serialize};

use crate::clustering::Grouping;
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
const POWER_ITERATIONS: usize = 20;
const POWER_REL_TOL: f64 = 1e-6;
const DESCENT_SLACK: f64 = 1e-12;
const POLISH_PERIOD: usize = 20;

/// Weighted partition of the coefficient indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPenalty {
    pub groups: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl GroupPenalty {
    pub fn new(groups: Vec<Vec<usize>>, weights: Vec<f64>) -> Self {
        Self { groups, weights }
    }

    /// Every coefficient alone in its own group with weight 1.
    pub fn singletons(n: usize) -> Self {
        Self {
            groups: (0..n).map(|j| vec![j]).collect(),
            weights: vec![1.0; n],
        }
    }

    pub fn single(n: usize, weight: f64) -> Self {
        Self {
            groups: vec![(0..n).collect()],
            weights: vec![weight],
        }
    }

    /// Consecutive pairs `{0,1}, {2,3}, ...` with unit weight.
    pub fn pairs(n_pairs: usize) -> Self {
        Self {
            groups: (0..n_pairs).map(|k| vec![2 * k, 2 * k + 1]).collect(),
            weights: vec![1.0; n_pairs],
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.groups.len() != self.weights.len() {
            return Err(Error::Dimension {
                axis: "group weights",
                expected: self.groups.len(),
                actual: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "group weights must be finite and non-negative"));
        }
        let mut seen = vec![false; n];
        for g in &self.groups {
            for &j in g {
                if j >= n {
                    return Err(Error::invalid("groups", format!("index {j} out of range for {n} coefficients")));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::invalid("groups", format!("index {j} belongs to two groups")));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::invalid("groups", format!("index {j} belongs to no group")));
        }
        Ok(())
    }
}

impl From<&Grouping> for GroupPenalty {
    fn from(g: &Grouping) -> Self {
        Self {
            groups: g.groups.clone(),
            weights: g.weights.clone(),
        }
    }
}

/// Sparse outlier vector on the first `rows` observations, penalized by `lambda ||kappa||_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierBlock {
    pub lambda: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub accelerate: bool,
    /// Interleave Newton refinement on the current support.
    pub polish: bool,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            accelerate: true,
            polish: true,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SglProblem<O> {
    pub design: O,
    pub observation: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub groups: GroupPenalty,
    pub outlier: Option<OutlierBlock>,
    pub options: SolverOptions,
}

impl<O: LinearOperator> SglProblem<O> {
    /// Lasso-plus-groups problem with default options and no outlier block.
    pub fn new(design: O, observation: Vec<f64>, lambda1: f64, lambda2: f64, groups: GroupPenalty) -> Self {
        Self {
            design,
            observation,
            lambda1,
            lambda2,
            groups,
            outlier: None,
            options: SolverOptions::default(),
        }
    }

    pub fn with_outliers(mut self, lambda: f64) -> Self {
        self.outlier = Some(OutlierBlock {
            lambda,
            rows: self.observation.len(),
        });
        self
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn num_coefficients(&self) -> usize {
        self.design.ncols()
    }

    fn outlier_rows(&self) -> usize {
        self.outlier.map_or(0, |o| o.rows)
    }

    fn outlier_lambda(&self) -> f64 {
        self.outlier.map_or(0.0, |o| o.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.design.ncols();
        if self.observation.len() != self.design.nrows() {
            return Err(Error::Dimension {
                axis: "observation",
                expected: self.design.nrows(),
                actual: self.observation.len(),
            });
        }
        if self.observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        if !self.design.all_finite() {
            return Err(Error::NonFinite("design"));
        }
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.outlier_lambda())] {
            if !l.is_finite() {
                return Err(Error::NonFinite("regularization weight"));
            }
            if l < 0.0 {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if let Some(o) = self.outlier {
            if o.rows > self.observation.len() {
                return Err(Error::invalid("outlier rows", "outlier block longer than observation"));
            }
        }
        if !(self.options.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        self.groups.validate(p)
    }

    /// `A z - y` with `z = [theta; kappa]`.
    fn residual(&self, z: &[f64], out: &mut [f64]) {
        let p = self.design.ncols();
        self.design.apply(&z[..p], out);
        for (i, o) in out.iter_mut().enumerate() {
            *o -= self.observation[i];
        }
        for (o, k) in out.iter_mut().zip(&z[p..]) {
            *o += k;
        }
    }

    /// `A^T r`.
    fn gradient(&self, r: &[f64], out: &mut [f64]) {
        let p = self.design.ncols();
        self.design.apply_adjoint(r, &mut out[..p]);
        let rows = self.outlier_rows();
        out[p..].copy_from_slice(&r[..rows]);
    }

    fn penalty(&self, z: &[f64]) -> f64 {
        let p = self.design.ncols();
        let theta = &z[..p];
        let l1 = self.lambda1 * theta.iter().map(|v| v.abs()).sum::<f64>();
        let group: f64 = self
            .groups
            .groups
            .iter()
            .zip(&self.groups.weights)
            .map(|(g, w)| w * g.iter().map(|&j| theta[j] * theta[j]).sum::<f64>().sqrt())
            .sum();
        let kappa = self.outlier_lambda() * z[p..].iter().map(|v| v.abs()).sum::<f64>();
        l1 + self.lambda2 * group + kappa
    }

    /// Proximal map of `step * penalty` applied in place: soft-threshold, then group shrink.
    fn prox(&self, z: &mut [f64], step: f64) {
        let p = self.design.ncols();
        let t1 = self.lambda1 * step;
        for v in z[..p].iter_mut() {
            *v = soft(*v, t1);
        }
        if self.lambda2 > 0.0 {
            for (g, w) in self.groups.groups.iter().zip(&self.groups.weights) {
                let t2 = self.lambda2 * w * step;
                if t2 == 0.0 {
                    continue;
                }
                let norm = g.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt();
                let scale = if norm > t2 { 1.0 - t2 / norm } else { 0.0 };
                for &j in g {
                    z[j] *= scale;
                }
            }
        }
        let t3 = self.outlier_lambda() * step;
        for v in z[p..].iter_mut() {
            *v = soft(*v, t3);
        }
    }

    /// Norm of the minimum-norm subgradient at `z`, given `grad = A^T (A z - y)`.
    fn kkt_from_gradient(&self, z: &[f64], grad: &[f64]) -> f64 {
        let p = self.design.ncols();
        let l1 = self.lambda1;
        let mut sq = 0.0;
        for (g, w) in self.groups.groups.iter().zip(&self.groups.weights) {
            let radius = self.lambda2 * w;
            let norm = g.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt();
            if norm > 0.0 {
                for &j in g {
                    let r = if z[j] != 0.0 {
                        grad[j] + l1 * z[j].signum() + radius * z[j] / norm
                    } else {
                        (grad[j].abs() - l1).max(0.0)
                    };
                    sq += r * r;
                }
            } else {
                let shrunk = g
                    .iter()
                    .map(|&j| (grad[j].abs() - l1).max(0.0).powi(2))
                    .sum::<f64>()
                    .sqrt();
                sq += (shrunk - radius).max(0.0).powi(2);
            }
        }
        let l3 = self.outlier_lambda();
        for (k, g) in z[p..].iter().zip(&grad[p..]) {
            let r = if *k != 0.0 { g + l3 * k.signum() } else { (g.abs() - l3).max(0.0) };
            sq += r * r;
        }
        sq.sqrt()
    }

    fn split(&self, z: Vec<f64>) -> (Vec<f64>, Option<Vec<f64>>) {
        let p = self.design.ncols();
        let mut theta = z;
        let kappa = self.outlier.map(|_| theta.split_off(p));
        (theta, kappa)
    }

    fn join(&self, theta: &[f64], kappa: Option<&[f64]>) -> Result<Vec<f64>> {
        let p = self.design.ncols();
        if theta.len() != p {
            return Err(Error::Dimension {
                axis: "theta",
                expected: p,
                actual: theta.len(),
            });
        }
        let rows = self.outlier_rows();
        let mut z = theta.to_vec();
        match kappa {
            Some(k) if k.len() != rows => {
                return Err(Error::Dimension {
                    axis: "kappa",
                    expected: rows,
                    actual: k.len(),
                })
            }
            Some(k) if self.outlier.is_some() => z.extend_from_slice(k),
            _ => z.resize(p + rows, 0.0),
        }
        Ok(z)
    }
}

#[inline]
fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SglSolution {
    pub theta: Vec<f64>,
    pub kappa: Option<Vec<f64>>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

pub fn write_trace_csv(trace: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("iter,objective,kkt_residual\n");
    for row in trace {
        let _ = writeln!(out, "{},{},{}", row.iter, row.objective, row.kkt_residual);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Penalized objective at `(theta, kappa)`; a missing `kappa` is read as zero.
pub fn objective<O: LinearOperator>(problem: &SglProblem<O>, theta: &[f64], kappa: Option<&[f64]>) -> Result<f64> {
    let z = problem.join(theta, kappa)?;
    let mut r = vec![0.0; problem.observation.len()];
    problem.residual(&z, &mut r);
    Ok(0.5 * sq_norm(&r) + problem.penalty(&z))
}

/// Distance from zero to the objective's subdifferential at `(theta, kappa)`.
pub fn kkt_residual<O: LinearOperator>(problem: &SglProblem<O>, theta: &[f64], kappa: Option<&[f64]>) -> Result<f64> {
    let z = problem.join(theta, kappa)?;
    let mut r = vec![0.0; problem.observation.len()];
    problem.residual(&z, &mut r);
    let mut g = vec![0.0; z.len()];
    problem.gradient(&r, &mut g);
    Ok(problem.kkt_from_gradient(&z, &g))
}

pub fn solve<O: LinearOperator>(problem: &SglProblem<O>) -> Result<SglSolution> {
    problem.validate()?;
    let n = problem.num_coefficients() + problem.outlier_rows();
    solve_inner(problem, vec![0.0; n])
}

/// Same as [`solve`] but starting from a given point.
pub fn solve_from<O: LinearOperator>(problem: &SglProblem<O>, theta0: &[f64], kappa0: Option<&[f64]>) -> Result<SglSolution> {
    problem.validate()?;
    let z = problem.join(theta0, kappa0)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("starting point"));
    }
    solve_inner(problem, z)
}

fn solve_inner<O: LinearOperator>(problem: &SglProblem<O>, mut x: Vec<f64>) -> Result<SglSolution> {
    let n = x.len();
    let m = problem.observation.len();
    let opts = &problem.options;

    let mut lip = spectral_norm_sq(&problem.design, POWER_ITERATIONS, POWER_REL_TOL);
    if problem.outlier.is_some() {
        lip += 1.0;
    }
    let mut lip = lip.max(f64::MIN_POSITIVE.sqrt());

    let mut res_x = vec![0.0; m];
    problem.residual(&x, &mut res_x);
    let mut g_x = vec![0.0; n];
    problem.gradient(&res_x, &mut g_x);
    let mut f_x = 0.5 * sq_norm(&res_x);
    let mut obj_x = f_x + problem.penalty(&x);
    let mut kkt = problem.kkt_from_gradient(&x, &g_x);

    let mut x_prev = x.clone();
    let mut res_prev = res_x.clone();
    let mut g_prev = g_x.clone();
    let mut t = 1.0f64;

    let mut y = vec![0.0; n];
    let mut res_y = vec![0.0; m];
    let mut g_y = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut res_new = vec![0.0; m];
    let mut g_new = vec![0.0; n];

    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(TraceRow {
            iter: 0,
            objective: obj_x,
            kkt_residual: kkt,
        });
    }

    let mut polisher = opts.polish.then(|| polish::Polisher::new(problem));
    let mut iterations = 0;
    let mut converged = kkt <= opts.tolerance;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mut beta = if opts.accelerate { (t - 1.0) / t_next } else { 0.0 };
        let mut restarted = false;
        let mut local_lip = lip;
        let mut retries = 0;

        let (f_new, obj_new) = loop {
            // extrapolated point; residual and gradient are affine in z
            for i in 0..n {
                y[i] = x[i] + beta * (x[i] - x_prev[i]);
                g_y[i] = g_x[i] + beta * (g_x[i] - g_prev[i]);
            }
            for i in 0..m {
                res_y[i] = res_x[i] + beta * (res_x[i] - res_prev[i]);
            }
            let f_y = 0.5 * sq_norm(&res_y);

            let (f_new, d_sq, lin) = loop {
                let step = 1.0 / local_lip;
                for i in 0..n {
                    x_new[i] = y[i] - step * g_y[i];
                }
                problem.prox(&mut x_new, step);
                problem.residual(&x_new, &mut res_new);
                let f_new = 0.5 * sq_norm(&res_new);
                let mut d_sq = 0.0;
                let mut lin = 0.0;
                for i in 0..n {
                    let d = x_new[i] - y[i];
                    d_sq += d * d;
                    lin += g_y[i] * d;
                }
                let bound = f_y + lin + 0.5 * local_lip * d_sq;
                if f_new <= bound + DESCENT_SLACK * f_y.abs().max(f64::MIN_POSITIVE) || d_sq == 0.0 {
                    break (f_new, d_sq, lin);
                }
                local_lip *= 2.0;
                lip = lip.max(local_lip);
            };
            let _ = (d_sq, lin);

            let obj_new = f_new + problem.penalty(&x_new);
            if obj_new <= obj_x + DESCENT_SLACK * obj_x.abs() {
                break (f_new, obj_new);
            }
            if beta != 0.0 {
                // momentum overshot: restart from a plain proximal step
                beta = 0.0;
                restarted = true;
                continue;
            }
            retries += 1;
            if retries > 60 {
                return Err(Error::Divergence {
                    iteration: iterations,
                    previous: obj_x,
                    current: obj_new,
                });
            }
            local_lip *= 2.0;
        };

        problem.gradient(&res_new, &mut g_new);

        // gradient-based adaptive restart
        let mut align = 0.0;
        for i in 0..n {
            align += (y[i] - x_new[i]) * (x_new[i] - x[i]);
        }
        t = if restarted || align > 0.0 { 1.0 } else { t_next };

        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut res_prev, &mut res_x);
        std::mem::swap(&mut res_x, &mut res_new);
        std::mem::swap(&mut g_prev, &mut g_x);
        std::mem::swap(&mut g_x, &mut g_new);
        f_x = f_new;
        obj_x = obj_new;

        kkt = problem.kkt_from_gradient(&x, &g_x);
        converged = kkt <= opts.tolerance;
        if !converged && iterations % POLISH_PERIOD == 0 {
            if let Some(pol) = polisher.as_mut() {
                if pol.run(problem, &mut x, &mut obj_x) {
                    problem.residual(&x, &mut res_x);
                    problem.gradient(&res_x, &mut g_x);
                    f_x = 0.5 * sq_norm(&res_x);
                    x_prev.copy_from_slice(&x);
                    res_prev.copy_from_slice(&res_x);
                    g_prev.copy_from_slice(&g_x);
                    t = 1.0;
                    kkt = problem.kkt_from_gradient(&x, &g_x);
                    converged = kkt <= opts.tolerance;
                }
            }
        }
        if opts.record_trace {
            trace.push(TraceRow {
                iter: iterations,
                objective: obj_x,
                kkt_residual: kkt,
            });
        }
    }
    let _ = f_x;

    // fresh evaluation so the reported value matches `objective` exactly
    problem.residual(&x, &mut res_x);
    let objective_value = 0.5 * sq_norm(&res_x) + problem.penalty(&x);
    problem.gradient(&res_x, &mut g_x);
    let kkt_residual = problem.kkt_from_gradient(&x, &g_x);
    let (theta, kappa) = problem.split(x);
    Ok(SglSolution {
        theta,
        kappa,
        objective_value,
        iterations,
        converged: kkt_residual <= opts.tolerance,
        kkt_residual,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn dense(m: DMatrix<f64>) -> DenseOperator {
        DenseOperator::new(m).unwrap()
    }

    #[test]
    fn unregularized_identity() {
        let p = SglProblem::new(dense(DMatrix::identity(2, 2)), vec![1.0, 2.0], 0.0, 0.0, GroupPenalty::single(2, 1.0));
        let s = solve(&p).unwrap();
        assert!((s.theta[0] - 1.0).abs() < 1e-12 && (s.theta[1] - 2.0).abs() < 1e-12);
        assert!(s.objective_value.abs() < 1e-20);
        assert!(s.kkt_residual <= 1e-10);
        assert!(s.converged);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = gaussian(6, 10, &mut rng);
        let y: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let hty = h.transpose() * nalgebra::DVector::from_vec(y.clone());
        let lam = hty.amax();
        let p = SglProblem::new(dense(h), y, lam, 0.0, GroupPenalty::singletons(10));
        let s = solve(&p).unwrap();
        assert!(s.theta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kkt_positive_away_from_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = gaussian(5, 8, &mut rng);
        let y: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
        let hty = h.transpose() * nalgebra::DVector::from_vec(y.clone());
        let p = SglProblem::new(dense(h), y, 0.5 * hty.amax(), 0.0, GroupPenalty::singletons(8));
        assert!(kkt_residual(&p, &[0.0; 8], None).unwrap() > 0.0);
    }

    #[test]
    fn objective_at_zero_and_formula() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = SglProblem::new(dense(h.clone()), vec![1.0, -1.0], 0.0, 0.7, GroupPenalty::single(2, 1.5));
        assert!((objective(&p, &[0.0, 0.0], None).unwrap() - 1.0).abs() < 1e-15);
        let th = [0.3, -0.2];
        let r = nalgebra::DVector::from_vec(vec![1.0, -1.0]) - &h * nalgebra::DVector::from_row_slice(&th);
        let expected = 0.5 * r.norm_squared() + 0.7 * 1.5 * (0.09f64 + 0.04).sqrt();
        assert!((objective(&p, &th, None).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn soft_threshold_identity() {
        let y = vec![3.0, -0.2, 0.5, -4.0];
        let p = SglProblem::new(dense(DMatrix::identity(4, 4)), y.clone(), 1.0, 0.0, GroupPenalty::singletons(4));
        let s = solve(&p).unwrap();
        for (t, v) in s.theta.iter().zip(&y) {
            assert!((t - soft(*v, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = gaussian(12, 30, &mut rng);
        let y: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        let groups = GroupPenalty::new((0..3).map(|k| (k * 10..k * 10 + 10).collect()).collect(), vec![1.0, 0.5, 2.0]);
        let opts = SolverOptions {
            record_trace: true,
            ..Default::default()
        };
        let p = SglProblem::new(dense(h), y, 0.05, 0.1, groups).with_options(opts);
        let s = solve(&p).unwrap();
        assert!(s.converged, "kkt {}", s.kkt_residual);
        for w in s.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective * (1.0 + 1e-12) + 1e-300);
        }
        let direct = objective(&p, &s.theta, None).unwrap();
        assert!((direct - s.objective_value).abs() <= 1e-10 * direct.abs());
    }

    #[test]
    fn outlier_block_absorbs_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = gaussian(20, 8, &mut rng);
        let truth: Vec<f64> = (0..8).map(|j| if j < 3 { 1.0 } else { 0.0 }).collect();
        let clean: Vec<f64> = (&h * nalgebra::DVector::from_vec(truth)).iter().copied().collect();
        let mut dirty = clean.clone();
        dirty[4] += 100.0;
        let groups = GroupPenalty::singletons(8);
        let clean_sol = solve(&SglProblem::new(dense(h.clone()), clean, 0.01, 0.0, groups.clone())).unwrap();
        let robust = solve(&SglProblem::new(dense(h), dirty, 0.01, 0.0, groups).with_outliers(0.5)).unwrap();
        let kappa = robust.kappa.unwrap();
        assert!((kappa[4] - 100.0).abs() < 2.0, "kappa {}", kappa[4]);
        for (a, b) in robust.theta.iter().zip(&clean_sol.theta) {
            assert!((a - b).abs() < 0.1);
        }
    }

    #[test]
    fn infinite_outlier_penalty_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = gaussian(8, 12, &mut rng);
        let y: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let groups = GroupPenalty::new(vec![(0..6).collect(), (6..12).collect()], vec![1.0, 0.5]);
        let plain = solve(&SglProblem::new(dense(h.clone()), y.clone(), 0.05, 0.1, groups.clone())).unwrap();
        let mgs = solve(&SglProblem::new(dense(h), y, 0.05, 0.1, groups).with_outliers(1e12)).unwrap();
        assert!(mgs.kappa.as_ref().unwrap().iter().all(|&k| k == 0.0));
        assert!((plain.objective_value - mgs.objective_value).abs() <= 1e-6 * plain.objective_value);
    }

    #[test]
    fn rejects_bad_input() {
        let h = dense(DMatrix::identity(2, 2));
        let bad_y = SglProblem::new(h.clone(), vec![f64::NAN, 0.0], 0.0, 0.0, GroupPenalty::singletons(2));
        assert!(matches!(solve(&bad_y), Err(Error::NonFinite(_))));
        let bad_groups = SglProblem::new(h.clone(), vec![0.0, 0.0], 0.0, 0.0, GroupPenalty::new(vec![vec![0]], vec![1.0]));
        assert!(solve(&bad_groups).is_err());
        let neg = SglProblem::new(h, vec![0.0, 0.0], -1.0, 0.0, GroupPenalty::singletons(2));
        assert!(solve(&neg).is_err());
    }

    #[test]
    fn scaling_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = gaussian(7, 9, &mut rng);
        let y: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
        let groups = GroupPenalty::new(vec![(0..4).collect(), (4..9).collect()], vec![1.0, 2.0]);
        let base = solve(&SglProblem::new(dense(h.clone()), y.clone(), 0.1, 0.05, groups.clone())).unwrap();
        let c = 3.0;
        let scaled = solve(&SglProblem::new(
            dense(&h * c),
            y.iter().map(|v| v * c).collect(),
            0.1 * c * c,
            0.05 * c * c,
            groups,
        ))
        .unwrap();
        assert!((scaled.objective_value - c * c * base.objective_value).abs() <= 1e-6 * scaled.objective_value);
    }
}
