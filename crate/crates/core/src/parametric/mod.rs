//! Parametric baselines assuming `(U, V)` standard bivariate normal with
//! correlation `ρ`: two-step nonlinear least squares and joint maximum
//! likelihood.
//!
//! Both work with augmented regressors `Z̄ = (1, z0, Z')'`, `X̄ = (1, x0, X')'`
//! and coefficients `δ̄ = (c_δ0, c_δ1, δ')'`, `β̄ = (c_β0, c_β1, β')'`. The
//! reported coefficients are `δ / c_δ1` and `β / c_β1`, comparable with the
//! semiparametric estimates whose `z0`, `x0` coefficients are fixed at one.
//!
//! The correlation is optimised through `ρ = 0.99 · tanh(r)`, which keeps it
//! inside `[−0.99, 0.99]`. Gradients are central finite differences of every
//! per-observation term in its scalar arguments `(a, b, ρ)` with
//! `a = Z̄'δ̄`, `b = X̄'β̄`, pushed through the linear indices by the chain rule.

pub mod bvn;
pub mod optim;

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::Dataset;

pub use bvn::{bivariate_normal_cdf, normal_cdf, normal_pdf};
pub use optim::{bfgs, BfgsConfig, Objective, OptimReport, OptimStatus};

use bvn::bvn_cdf_unchecked;

// unused when std is linked (tests), where f64 has inherent math methods
#[allow(unused_imports)]
use num_traits::Float;

/// Largest attainable `|ρ|`.
pub const RHO_BOUND: f64 = 0.99;

/// Floor on probabilities inside logarithms and on the `F₁` denominator.
pub const PROB_FLOOR: f64 = 1e-12;

const FD_STEP: f64 = 6e-6;

#[inline]
pub fn rho_from_raw(r: f64) -> f64 {
    RHO_BOUND * r.tanh()
}

#[inline]
pub fn raw_from_rho(rho: f64) -> f64 {
    (rho / RHO_BOUND).atanh()
}

#[inline]
fn central<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
    let h = FD_STEP * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `(c_δ0, c_δ1, δ, c_β0, c_β1, β, ρ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedParameters {
    pub c_delta0: f64,
    pub c_delta1: f64,
    pub delta_bar: Vec<f64>,
    pub c_beta0: f64,
    pub c_beta1: f64,
    pub beta_bar: Vec<f64>,
    pub rho: f64,
}

impl AugmentedParameters {
    /// `δ̄ = (c_δ0, c_δ1, δ')'`.
    pub fn delta_full(&self) -> Vec<f64> {
        let mut v = vec![self.c_delta0, self.c_delta1];
        v.extend_from_slice(&self.delta_bar);
        v
    }

    /// `β̄ = (c_β0, c_β1, β')'`.
    pub fn beta_full(&self) -> Vec<f64> {
        let mut v = vec![self.c_beta0, self.c_beta1];
        v.extend_from_slice(&self.beta_bar);
        v
    }

    pub fn from_full(delta_full: &[f64], beta_full: &[f64], rho: f64) -> Result<Self> {
        if delta_full.len() < 2 || beta_full.len() < 2 {
            return Err(Error::InvalidArgument("augmented vectors need at least two entries".into()));
        }
        Ok(Self {
            c_delta0: delta_full[0],
            c_delta1: delta_full[1],
            delta_bar: delta_full[2..].to_vec(),
            c_beta0: beta_full[0],
            c_beta1: beta_full[1],
            beta_bar: beta_full[2..].to_vec(),
            rho,
        })
    }

    /// `(δ / c_δ1, β / c_β1)`.
    pub fn rescaled(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.c_delta1 == 0.0 || self.c_beta1 == 0.0 {
            return Err(Error::InvalidArgument(
                "normalised coefficient estimated as zero; rescaling undefined".into(),
            ));
        }
        Ok((
            self.delta_bar.iter().map(|v| v / self.c_delta1).collect(),
            self.beta_bar.iter().map(|v| v / self.c_beta1).collect(),
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricFit {
    /// `δ̂ / ĉ_δ1`.
    pub delta: Vec<f64>,
    /// `β̂ / ĉ_β1`.
    pub beta: Vec<f64>,
    pub rho: f64,
    pub params: AugmentedParameters,
    /// Minimised objective: `L₂ₙ` for NLS, `−L₃ₙ` for MLE.
    pub objective_value: f64,
    /// Optimizer iterations summed over the steps of the winning starts.
    pub iterations: usize,
    /// Worst status among the winning starts.
    pub status: OptimStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricConfig {
    pub bfgs: BfgsConfig,
    /// Random starts in addition to the zero start.
    pub restarts: usize,
    /// Seed of the random-start stream.
    pub seed: u64,
    /// Random starts are uniform on `[−spread, spread]` per coordinate.
    pub start_spread: f64,
}

impl Default for ParametricConfig {
    fn default() -> Self {
        Self {
            bfgs: BfgsConfig::default(),
            restarts: 5,
            seed: 0,
            start_spread: 1.0,
        }
    }
}

/// Augmented design shared by the objectives.
struct Design {
    zbar: Matrix,
    xbar: Matrix,
    d: Vec<bool>,
    y: Vec<bool>,
}

impl Design {
    fn new(data: &Dataset) -> Self {
        let augment = |c0: &[f64], m: &Matrix| {
            let cols = m.cols() + 2;
            let mut out = Matrix::zeros(c0.len(), cols);
            for (i, &c) in c0.iter().enumerate() {
                let row = out.row_mut(i);
                row[0] = 1.0;
                row[1] = c;
                if m.cols() > 0 {
                    row[2..].copy_from_slice(m.row(i));
                }
            }
            out
        };
        Self {
            zbar: augment(data.z0(), data.z()),
            xbar: augment(data.x0(), data.x()),
            d: data.d().to_vec(),
            y: data.y().iter().map(|y| *y == Some(true)).collect(),
        }
    }

    fn n(&self) -> usize {
        self.d.len()
    }

    fn kz(&self) -> usize {
        self.zbar.cols()
    }

    fn kx(&self) -> usize {
        self.xbar.cols()
    }

    fn a(&self, i: usize, delta_full: &[f64]) -> f64 {
        dot(self.zbar.row(i), delta_full)
    }

    fn b(&self, i: usize, beta_full: &[f64]) -> f64 {
        dot(self.xbar.row(i), beta_full)
    }
}

#[inline]
fn t1(d: bool, a: f64) -> f64 {
    let r = if d { 1.0 } else { 0.0 } - normal_cdf(a);
    r * r
}

#[inline]
fn t2(y: bool, a: f64, b: f64, rho: f64) -> f64 {
    let r = if y { 1.0 } else { 0.0 } - bvn_cdf_unchecked(a, b, rho) / normal_cdf(a).max(PROB_FLOOR);
    r * r
}

/// Log-likelihood contribution of one observation.
#[inline]
fn t3(d: bool, y: bool, a: f64, b: f64, rho: f64) -> f64 {
    let p = match (d, y) {
        (false, _) => normal_cdf(-a),
        (true, true) => bvn_cdf_unchecked(a, b, rho),
        // Φ(a) − F₂(a, b, ρ) without cancellation
        (true, false) => bvn_cdf_unchecked(a, -b, -rho),
    };
    p.max(PROB_FLOOR).ln()
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(rho))
    }
}

/// `L₁ₙ(δ̄) = (1/n) Σ (D_i − Φ(Z̄_i'δ̄))²`.
pub fn l1_loss(data: &Dataset, delta_full: &[f64]) -> Result<f64> {
    let des = Design::new(data);
    check_len("augmented delta", des.kz(), delta_full.len())?;
    Ok((0..des.n()).map(|i| t1(des.d[i], des.a(i, delta_full))).sum::<f64>() / des.n() as f64)
}

/// `L₂ₙ(β̄, ρ) = (1/n) Σ D_i (Y_i − F₂(a_i, b_i, ρ) / F₁(a_i))²`.
pub fn l2_loss(data: &Dataset, delta_full: &[f64], beta_full: &[f64], rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let des = Design::new(data);
    check_len("augmented delta", des.kz(), delta_full.len())?;
    check_len("augmented beta", des.kx(), beta_full.len())?;
    Ok((0..des.n())
        .filter(|&i| des.d[i])
        .map(|i| t2(des.y[i], des.a(i, delta_full), des.b(i, beta_full), rho))
        .sum::<f64>()
        / des.n() as f64)
}

/// `L₃ₙ(δ̄, β̄, ρ)`, the mean log-likelihood, with probabilities floored at
/// [`PROB_FLOOR`].
pub fn l3_loglik(data: &Dataset, delta_full: &[f64], beta_full: &[f64], rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let des = Design::new(data);
    check_len("augmented delta", des.kz(), delta_full.len())?;
    check_len("augmented beta", des.kx(), beta_full.len())?;
    Ok((0..des.n())
        .map(|i| t3(des.d[i], des.y[i], des.a(i, delta_full), des.b(i, beta_full), rho))
        .sum::<f64>()
        / des.n() as f64)
}

struct NlsFirst<'a> {
    des: &'a Design,
}

impl Objective for NlsFirst<'_> {
    fn dim(&self) -> usize {
        self.des.kz()
    }

    fn value(&mut self, x: &[f64]) -> f64 {
        let des = self.des;
        (0..des.n()).map(|i| t1(des.d[i], des.a(i, x))).sum::<f64>() / des.n() as f64
    }

    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let des = self.des;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for i in 0..des.n() {
            let (d, a) = (des.d[i], des.a(i, x));
            total += t1(d, a);
            let da = central(|a| t1(d, a), a);
            for (g, z) in grad.iter_mut().zip(des.zbar.row(i)) {
                *g += da * z;
            }
        }
        let n = des.n() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        total / n
    }
}

/// Second NLS step over `(β̄, r)` with the first-step indices `a_i` fixed.
struct NlsSecond<'a> {
    des: &'a Design,
    a: Vec<f64>,
}

impl Objective for NlsSecond<'_> {
    fn dim(&self) -> usize {
        self.des.kx() + 1
    }

    fn value(&mut self, x: &[f64]) -> f64 {
        let des = self.des;
        let (beta, rho) = (&x[..des.kx()], rho_from_raw(x[des.kx()]));
        (0..des.n())
            .filter(|&i| des.d[i])
            .map(|i| t2(des.y[i], self.a[i], des.b(i, beta), rho))
            .sum::<f64>()
            / des.n() as f64
    }

    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let des = self.des;
        let kx = des.kx();
        let (beta, r) = (&x[..kx], x[kx]);
        let rho = rho_from_raw(r);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        let mut drho = 0.0;
        for i in (0..des.n()).filter(|&i| des.d[i]) {
            let (y, a, b) = (des.y[i], self.a[i], des.b(i, beta));
            total += t2(y, a, b, rho);
            let db = central(|b| t2(y, a, b, rho), b);
            drho += central(|rho| t2(y, a, b, rho), rho);
            for (g, xv) in grad[..kx].iter_mut().zip(des.xbar.row(i)) {
                *g += db * xv;
            }
        }
        let t = r.tanh();
        grad[kx] = drho * RHO_BOUND * (1.0 - t * t);
        let n = des.n() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        total / n
    }
}

/// Negative mean log-likelihood over `(δ̄, β̄, r)`.
struct NegLogLik<'a> {
    des: &'a Design,
}

impl Objective for NegLogLik<'_> {
    fn dim(&self) -> usize {
        self.des.kz() + self.des.kx() + 1
    }

    fn value(&mut self, x: &[f64]) -> f64 {
        let des = self.des;
        let (kz, kx) = (des.kz(), des.kx());
        let (delta, beta, rho) = (&x[..kz], &x[kz..kz + kx], rho_from_raw(x[kz + kx]));
        -(0..des.n())
            .map(|i| {
                let b = if des.d[i] { des.b(i, beta) } else { 0.0 };
                t3(des.d[i], des.y[i], des.a(i, delta), b, rho)
            })
            .sum::<f64>()
            / des.n() as f64
    }

    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let des = self.des;
        let (kz, kx) = (des.kz(), des.kx());
        let (delta, beta, r) = (&x[..kz], &x[kz..kz + kx], x[kz + kx]);
        let rho = rho_from_raw(r);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        let mut drho = 0.0;
        for i in 0..des.n() {
            let (d, y, a) = (des.d[i], des.y[i], des.a(i, delta));
            let b = if d { des.b(i, beta) } else { 0.0 };
            total += t3(d, y, a, b, rho);
            let da = central(|a| t3(d, y, a, b, rho), a);
            for (g, z) in grad[..kz].iter_mut().zip(des.zbar.row(i)) {
                *g -= da * z;
            }
            if d {
                let db = central(|b| t3(d, y, a, b, rho), b);
                drho += central(|rho| t3(d, y, a, b, rho), rho);
                for (g, xv) in grad[kz..kz + kx].iter_mut().zip(des.xbar.row(i)) {
                    *g -= db * xv;
                }
            }
        }
        let t = r.tanh();
        grad[kz + kx] = -drho * RHO_BOUND * (1.0 - t * t);
        let n = des.n() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        -total / n
    }
}

/// Zero start followed by `restarts` random starts; returns the run with the
/// smallest objective.
fn multistart<F: Objective>(f: &mut F, config: &ParametricConfig, stream: u64) -> Result<OptimReport> {
    let dim = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut best: Option<OptimReport> = None;
    let mut first_err = None;
    for k in 0..=config.restarts {
        let x0: Vec<f64> = if k == 0 {
            vec![0.0; dim]
        } else {
            (0..dim)
                .map(|_| config.start_spread * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        };
        match bfgs(f, &x0, &config.bfgs) {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.value < b.value) {
                    best = Some(r);
                }
            }
            Err(e) => {
                log::debug!("start {k} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::NonFiniteObjective),
    }
}

fn worse(a: OptimStatus, b: OptimStatus) -> OptimStatus {
    if a == OptimStatus::Converged {
        b
    } else {
        a
    }
}

/// Two-step NLS: minimise `L₁ₙ` over `δ̄`, then `L₂ₙ` over `(β̄, ρ)` with
/// `δ̄` held at the first-step minimiser.
pub fn two_step_nls(data: &Dataset, config: &ParametricConfig) -> Result<ParametricFit> {
    if data.selected_count() == 0 {
        return Err(Error::InsufficientData("no selected observations for the second step".into()));
    }
    let des = Design::new(data);
    let first = multistart(&mut NlsFirst { des: &des }, config, 1)?;
    let a: Vec<f64> = (0..des.n()).map(|i| des.a(i, &first.x)).collect();
    let second = multistart(&mut NlsSecond { des: &des, a }, config, 2)?;
    let kx = des.kx();
    let rho = rho_from_raw(second.x[kx]);
    let params = AugmentedParameters::from_full(&first.x, &second.x[..kx], rho)?;
    let (delta, beta) = params.rescaled()?;
    Ok(ParametricFit {
        delta,
        beta,
        rho,
        params,
        objective_value: second.value,
        iterations: first.iterations + second.iterations,
        status: worse(first.status, second.status),
    })
}

/// Joint MLE: maximise `L₃ₙ` over `(δ̄, β̄, ρ)`.
pub fn joint_mle(data: &Dataset, config: &ParametricConfig) -> Result<ParametricFit> {
    let des = Design::new(data);
    let best = multistart(&mut NegLogLik { des: &des }, config, 3)?;
    let (kz, kx) = (des.kz(), des.kx());
    let rho = rho_from_raw(best.x[kz + kx]);
    let params = AugmentedParameters::from_full(&best.x[..kz], &best.x[kz..kz + kx], rho)?;
    let (delta, beta) = params.rescaled()?;
    Ok(ParametricFit {
        delta,
        beta,
        rho,
        params,
        objective_value: best.value,
        iterations: best.iterations,
        status: best.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(d: bool, y: Option<bool>) -> Dataset {
        Dataset::new(
            vec![0.0],
            Matrix::from_rows(&[[0.0]]).unwrap(),
            vec![0.0],
            Matrix::from_rows(&[[0.0]]).unwrap(),
            vec![d],
            vec![y],
        )
        .unwrap()
    }

    #[test]
    fn loss_spot_values() {
        let data = single(true, Some(true));
        assert!((l1_loss(&data, &[0.0, 1.0, 0.5]).unwrap() - 0.25).abs() < 1e-15);
        let data = single(false, None);
        let ll = l3_loglik(&data, &[0.0; 3], &[0.0; 3], 0.2).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn l2_spot_value() {
        // F₂(0, 0, 0) / Φ(0) = 0.5
        let data = single(true, Some(true));
        assert!((l2_loss(&data, &[0.0; 3], &[0.0; 3], 0.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn floors_keep_objectives_finite() {
        let data = single(true, Some(false));
        let ll = l3_loglik(&data, &[-60.0, 0.0, 0.0], &[40.0, 0.0, 0.0], 0.99).unwrap();
        assert!((ll - PROB_FLOOR.ln()).abs() < 1e-9);
        assert!(l2_loss(&data, &[-60.0, 0.0, 0.0], &[40.0, 0.0, 0.0], -0.99).unwrap().is_finite());
        assert!(l3_loglik(&data, &[0.0; 3], &[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn rescaling() {
        let p = AugmentedParameters::from_full(&[0.1, 2.0, 1.0, -4.0], &[0.0, -0.5, 1.0], 0.3).unwrap();
        let (d, b) = p.rescaled().unwrap();
        assert_eq!(d, vec![0.5, -2.0]);
        assert_eq!(b, vec![-2.0]);
        assert_eq!(p.delta_full(), vec![0.1, 2.0, 1.0, -4.0]);
        let zero = AugmentedParameters { c_beta1: 0.0, ..p };
        assert!(zero.rescaled().is_err());
    }

    #[test]
    fn rho_map_round_trip() {
        for rho in [-0.95, -0.3, 0.0, 0.5, 0.98] {
            assert!((rho_from_raw(raw_from_rho(rho)) - rho).abs() < 1e-12);
        }
        assert!(rho_from_raw(50.0) <= RHO_BOUND);
    }

    #[test]
    fn nls_requires_selected_rows() {
        let data = single(false, None);
        assert!(matches!(
            two_step_nls(&data, &ParametricConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
