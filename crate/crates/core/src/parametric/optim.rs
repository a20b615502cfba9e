//! BFGS with a backtracking Armijo line search.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::dot;

// unused when std is linked (tests), where f64 has inherent math methods
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfgsConfig {
    pub max_iterations: usize,
    /// Stop when `max_j |∂f/∂x_j|` falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step changes `f` by less than
    /// `value_tolerance · (1 + |f|)`.
    pub value_tolerance: f64,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            value_tolerance: 1e-12,
            armijo: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimStatus {
    Converged,
    MaxIter,
    LineSearchFail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: OptimStatus,
}

/// An objective that can be evaluated with or without its gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&mut self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the value.
    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Minimises `f` from `x0`.
///
/// The inverse-Hessian approximation starts at the identity, is rescaled by
/// `s'y / y'y` after the first accepted step, and is reset whenever the
/// search direction is not a descent direction or a line search fails.
pub fn bfgs<F: Objective>(f: &mut F, x0: &[f64], config: &BfgsConfig) -> Result<OptimReport> {
    let dim = f.dim();
    crate::error::check_len("starting point", dim, x0.len())?;
    let mut x = x0.to_vec();
    let mut g = vec![0.0; dim];
    let mut fx = f.value_grad(&x, &mut g);
    let mut evaluations = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    let mut h = identity(dim);
    let mut fresh = true;
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut p = vec![0.0; dim];
    let report = |x: Vec<f64>, value, iterations, evaluations, status| OptimReport {
        x,
        value,
        iterations,
        evaluations,
        status,
    };
    for iter in 0..config.max_iterations {
        if max_abs(&g) < config.gradient_tolerance {
            return Ok(report(x, fx, iter, evaluations, OptimStatus::Converged));
        }
        mat_vec_neg(&h, &g, &mut p);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = identity(dim);
            fresh = true;
            p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -gi);
            slope = -dot(&g, &g);
        }
        // the first step from an unscaled identity can be wildly off scale
        let mut alpha = if fresh { (1.0 / max_abs(&g)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            for ((xn, xi), pi) in x_new.iter_mut().zip(&x).zip(&p) {
                *xn = xi + alpha * pi;
            }
            let fv = f.value(&x_new);
            evaluations += 1;
            if fv.is_finite() && fv <= fx + config.armijo * alpha * slope {
                accepted = Some(fv);
                break;
            }
            alpha *= 0.5;
        }
        if accepted.is_none() {
            if fresh {
                return Ok(report(x, fx, iter, evaluations, OptimStatus::LineSearchFail));
            }
            h = identity(dim);
            fresh = true;
            continue;
        }
        let f_new = f.value_grad(&x_new, &mut g_new);
        evaluations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let small_change = (fx - f_new).abs() <= config.value_tolerance * (1.0 + fx.abs());
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if g.iter().any(|v| !v.is_finite()) {
            return Ok(report(x, fx, iter + 1, evaluations, OptimStatus::LineSearchFail));
        }
        if small_change {
            return Ok(report(x, fx, iter + 1, evaluations, OptimStatus::Converged));
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    Ok(report(x, fx, config.max_iterations, evaluations, OptimStatus::MaxIter))
}

fn identity(dim: usize) -> Vec<f64> {
    let mut h = vec![0.0; dim * dim];
    for i in 0..dim {
        h[i * dim + i] = 1.0;
    }
    h
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn mat_vec_neg(h: &[f64], g: &[f64], out: &mut [f64]) {
    let dim = g.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = -dot(&h[i * dim..(i + 1) * dim], g);
    }
}

/// `H ← (I − ρ s y') H (I − ρ y s') + ρ s s'`, `ρ = 1 / s'y`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let dim = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..dim).map(|i| dot(&h[i * dim..(i + 1) * dim], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
