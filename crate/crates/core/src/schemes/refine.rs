//! Derivative-free refinement of the three phase kernels against the Gaussian
//! mutual information of the stacked observation model.

use nalgebra::Cholesky;
use serde::Serialize;

use crate::channel::ChannelPair;
use crate::linalg::{operator_norm, Matrix};
use crate::relaying::{KernelLabel, RelayKernel};
use crate::{Error, Result};

use super::check_power;
use super::model::{StackedModel, SymbolPlan};

pub const DEFAULT_BUDGET: usize = 500;

const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct RefineResult {
    pub kernels: [RelayKernel; 3],
    pub sum_rate: f64,
    pub initial_sum_rate: f64,
    pub evaluations: usize,
}

/// Operator-norm bounds `(a_max, b_max)` of the relay power set at power `p`.
pub fn kernel_power_bounds(cp: &ChannelPair, p: f64) -> Result<(f64, f64)> {
    check_power(p)?;
    cp.require_real()?;
    let m = cp.m() as f64;
    let gain = |a: Matrix, b: Matrix| operator_norm(&a).powi(2) + operator_norm(&b).powi(2);
    let a_max = (p / (gain(cp.s1u(), cp.s2u()) * p + m)).sqrt();
    let b_max = (p / (gain(cp.s1v(), cp.s2v()) * p + m)).sqrt();
    Ok((a_max, b_max))
}

fn log2_det(m: Matrix) -> Result<f64> {
    let chol = Cholesky::new(m).ok_or_else(|| Error::SingularConstruction("covariance not positive definite".into()))?;
    Ok(chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0 / std::f64::consts::LN_2)
}

/// `(I(x_1; y_1) + I(x_2; y_2)) / 3` in bits per channel use, with the other
/// user's symbols treated as Gaussian noise.
pub fn mutual_information_sum_rate(cp: &ChannelPair, kernels: &[RelayKernel; 3], plan: SymbolPlan, p: f64) -> Result<f64> {
    check_power(p)?;
    let model = StackedModel::build(cp, kernels, plan)?;
    let p_sym = p / cp.m() as f64;
    let mut total = 0.0;
    for d in &model.dest {
        let interference = &d.noise_cov + &d.f_other * d.f_other.transpose() * p_sym;
        let received = &interference + &d.f_own * d.f_own.transpose() * p_sym;
        total += 0.5 * (log2_det(received)? - log2_det(interference)?);
    }
    Ok(total / 3.0)
}

fn flatten(kernels: &[RelayKernel; 3]) -> Vec<f64> {
    kernels.iter().flat_map(|k| k.a.iter().chain(k.b.iter()).copied()).collect()
}

fn unflatten(x: &[f64], m: usize) -> [RelayKernel; 3] {
    let block = m * m;
    std::array::from_fn(|k| {
        let base = 2 * k * block;
        let a = Matrix::from_column_slice(m, m, &x[base..base + block]);
        let b = Matrix::from_column_slice(m, m, &x[base + block..base + 2 * block]);
        RelayKernel { a, b, scale: 1.0, label: KernelLabel::Custom }
    })
}

/// Shrinks every relay matrix exceeding its bound onto the boundary.
fn project(x: &mut [f64], m: usize, bounds: (f64, f64)) {
    let block = m * m;
    for (i, chunk) in x.chunks_mut(block).enumerate() {
        let bound = if i % 2 == 0 { bounds.0 } else { bounds.1 };
        let norm = operator_norm(&Matrix::from_column_slice(m, m, chunk));
        if norm > bound {
            let s = bound / norm;
            chunk.iter_mut().for_each(|v| *v *= s);
        }
    }
}

struct Objective<'a> {
    cp: &'a ChannelPair,
    plan: SymbolPlan,
    p: f64,
    bounds: (f64, f64),
    evaluations: usize,
    best: (Vec<f64>, f64),
}

impl Objective<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        let mut y = x.to_vec();
        project(&mut y, self.cp.m(), self.bounds);
        self.evaluations += 1;
        let v = mutual_information_sum_rate(self.cp, &unflatten(&y, self.cp.m()), self.plan, self.p)
            .unwrap_or(f64::NEG_INFINITY);
        if v > self.best.1 {
            self.best = (y, v);
        }
        v
    }
}

/// Nelder–Mead ascent until `budget` evaluations are spent.
fn nelder_mead(obj: &mut Objective, x0: &[f64], step: &[f64], budget: usize) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let start = obj.eval(x0);
    simplex.push((x0.to_vec(), start));
    for i in 0..n {
        if obj.evaluations >= budget {
            return;
        }
        let mut x = x0.to_vec();
        x[i] += step[i];
        let v = obj.eval(&x);
        simplex.push((x, v));
    }
    let towards = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> { from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect() };
    while obj.evaluations < budget {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = towards(&worst.0, &centroid, 2.0);
        let fr = obj.eval(&reflected);
        if fr > simplex[0].1 {
            if obj.evaluations >= budget {
                simplex[n] = (reflected, fr);
                break;
            }
            let expanded = towards(&worst.0, &centroid, 3.0);
            let fe = obj.eval(&expanded);
            simplex[n] = if fe > fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            if obj.evaluations >= budget {
                break;
            }
            let contracted = towards(&worst.0, &centroid, 0.5);
            let fc = obj.eval(&contracted);
            if fc > worst.1 {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    if obj.evaluations >= budget {
                        break;
                    }
                    let x = towards(&best, &entry.0, 0.5);
                    let v = obj.eval(&x);
                    *entry = (x, v);
                }
            }
        }
    }
}

/// Locally improves `initial` within the relay power set. The returned sum
/// rate is the mutual-information objective and never falls below its value
/// at `initial`.
pub fn refine_kernels(
    cp: &ChannelPair,
    initial: &[RelayKernel; 3],
    plan: SymbolPlan,
    p: f64,
    budget: usize,
) -> Result<RefineResult> {
    let m = cp.m();
    if initial.iter().any(|k| k.dim() != m) {
        return Err(Error::ShapeMismatch(format!("kernels do not match m = {m}")));
    }
    let bounds = kernel_power_bounds(cp, p)?;
    for (k, kern) in initial.iter().enumerate() {
        let (na, nb) = (operator_norm(&kern.a), operator_norm(&kern.b));
        if na > bounds.0 * (1.0 + FEASIBILITY_SLACK) || nb > bounds.1 * (1.0 + FEASIBILITY_SLACK) {
            return Err(Error::InfeasibleStart(format!(
                "phase {k}: norms ({na:.6e}, {nb:.6e}) exceed bounds ({:.6e}, {:.6e})",
                bounds.0, bounds.1
            )));
        }
    }
    let initial_sum_rate = mutual_information_sum_rate(cp, initial, plan, p)?;
    if budget == 0 {
        return Ok(RefineResult { kernels: initial.clone(), sum_rate: initial_sum_rate, initial_sum_rate, evaluations: 0 });
    }

    let x0 = flatten(initial);
    let mut obj = Objective { cp, plan, p, bounds, evaluations: 0, best: (x0.clone(), initial_sum_rate) };

    // every phase pushed to the power boundary keeps its nulling structure
    let mut boundary = x0.clone();
    for (i, chunk) in boundary.chunks_mut(2 * m * m).enumerate() {
        let k = &initial[i];
        let s = (bounds.0 / operator_norm(&k.a)).min(bounds.1 / operator_norm(&k.b));
        if s.is_finite() && s > 1.0 {
            chunk.iter_mut().for_each(|v| *v *= s);
        }
    }
    obj.eval(&boundary);

    let start = obj.best.0.clone();
    let step: Vec<f64> = (0..start.len())
        .map(|i| 0.1 * if (i / (m * m)).is_multiple_of(2) { bounds.0 } else { bounds.1 })
        .collect();
    nelder_mead(&mut obj, &start, &step, budget);

    let (best_x, sum_rate) = obj.best;
    let kernels = if sum_rate > initial_sum_rate { unflatten(&best_x, m) } else { initial.clone() };
    Ok(RefineResult { kernels, sum_rate: sum_rate.max(initial_sum_rate), initial_sum_rate, evaluations: obj.evaluations })
}
