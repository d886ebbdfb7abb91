//! Projected Newton refinement on the current support.
//!
//! With the support and signs fixed the objective is smooth, so a damped
//! Newton step followed by projection onto the sign orthant (coordinates that
//! cross zero are set to zero) is taken whenever it lowers the objective.

use nalgebra::{DMatrix, DVector};

use super::{sq_norm, LinearOperator, SglProblem};

const MAX_ACTIVE: usize = 2048;
const NEWTON_STEPS: usize = 30;
const BACKTRACKS: usize = 30;
const DAMPING: [f64; 5] = [1e-12, 1e-8, 1e-5, 1e-2, 1.0];

pub(super) struct Polisher {
    columns: Vec<Option<Vec<f64>>>,
    group_of: Vec<usize>,
}

impl Polisher {
    pub(super) fn new<O: LinearOperator>(problem: &SglProblem<O>) -> Self {
        let p = problem.design.ncols();
        let mut group_of = vec![0; p];
        for (k, g) in problem.groups.groups.iter().enumerate() {
            for &j in g {
                group_of[j] = k;
            }
        }
        Self {
            columns: vec![None; p],
            group_of,
        }
    }

    fn column<O: LinearOperator>(&mut self, problem: &SglProblem<O>, j: usize) -> &[f64] {
        self.columns[j].get_or_insert_with(|| {
            let mut e = vec![0.0; problem.design.ncols()];
            e[j] = 1.0;
            let mut out = vec![0.0; problem.design.nrows()];
            problem.design.apply(&e, &mut out);
            out
        })
    }

    fn objective<O: LinearOperator>(problem: &SglProblem<O>, x: &[f64], res: &mut [f64]) -> f64 {
        problem.residual(x, res);
        0.5 * sq_norm(res) + problem.penalty(x)
    }

    /// Refines `x` in place; returns whether the objective went down.
    pub(super) fn run<O: LinearOperator>(&mut self, problem: &SglProblem<O>, x: &mut [f64], obj: &mut f64) -> bool {
        let p = problem.design.ncols();
        let m = problem.observation.len();
        let mut res = vec![0.0; m];
        let mut improved = false;

        for _ in 0..NEWTON_STEPS {
            let active: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
            let a = active.len();
            if a == 0 || a > MAX_ACTIVE {
                break;
            }
            let mut c = DMatrix::<f64>::zeros(m, a);
            for (col, &i) in active.iter().enumerate() {
                if i < p {
                    c.column_mut(col).copy_from_slice(self.column(problem, i));
                } else {
                    c[(i - p, col)] = 1.0;
                }
            }
            problem.residual(x, &mut res);
            let r = DVector::from_column_slice(&res);
            let mut g = c.tr_mul(&r);
            let mut hess = c.tr_mul(&c);

            let mut norms = vec![0.0; problem.groups.groups.len()];
            for &i in active.iter().filter(|&&i| i < p) {
                norms[self.group_of[i]] += x[i] * x[i];
            }
            norms.iter_mut().for_each(|v| *v = v.sqrt());
            for (u, &i) in active.iter().enumerate() {
                if i >= p {
                    g[u] += problem.outlier_lambda() * x[i].signum();
                    continue;
                }
                let k = self.group_of[i];
                let radius = problem.lambda2 * problem.groups.weights[k];
                g[u] += problem.lambda1 * x[i].signum() + radius * x[i] / norms[k];
                if radius == 0.0 {
                    continue;
                }
                for (v, &j) in active.iter().enumerate() {
                    if j < p && self.group_of[j] == k {
                        let nu = norms[k];
                        let delta = if u == v { 1.0 / nu } else { 0.0 };
                        hess[(u, v)] += radius * (delta - x[i] * x[j] / (nu * nu * nu));
                    }
                }
            }

            let scale = hess.diagonal().amax().max(f64::MIN_POSITIVE);
            let mut accepted = false;
            let mut trial = x.to_vec();
            for damping in DAMPING {
                let mut damped = hess.clone();
                for d in 0..a {
                    damped[(d, d)] += damping * scale;
                }
                let Some(ch) = damped.cholesky() else { continue };
                let dir = -ch.solve(&g);
                if !dir.iter().all(|v| v.is_finite()) {
                    continue;
                }
                let mut alpha = 1.0;
                for _ in 0..BACKTRACKS {
                    trial.copy_from_slice(x);
                    for (u, &i) in active.iter().enumerate() {
                        let v = x[i] + alpha * dir[u];
                        trial[i] = if v * x[i] > 0.0 { v } else { 0.0 };
                    }
                    let f = Self::objective(problem, &trial, &mut res);
                    if f < *obj {
                        *obj = f;
                        x.copy_from_slice(&trial);
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    break;
                }
            }
            if !accepted {
                break;
            }
            improved = true;
        }
        improved
    }
}
