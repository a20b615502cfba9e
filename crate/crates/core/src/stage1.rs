//! Sieve-based batched gradient descent for the selection equation.
//!
//! Each round regresses `D` on the orthonormal Legendre basis of the current
//! selection index (giving `F̂_U`) and then takes one full-sample gradient
//! step
//!
//! ```text
//! δ ← δ − (γ / n) Σ_i (F̂_U(z0_i + Z_i'δ) − D_i) Z_i
//! ```
//!
//! until the largest coordinate change falls below the tolerance.

use alloc::vec;
use alloc::vec::Vec;


use crate::basis::{
    fit_univariate, legendre_into, select_order_aic, AffineRescale, GramAccumulator, SieveBasis, SieveCoefficients,
    SieveKind, UnivariateSieve, DEFAULT_RIDGE,
};
use crate::error::{check_len, Error, Result, TraceEntry};
use crate::linalg::{dot, max_abs_diff};
use crate::model::{selection_index, Dataset};

/// Sieve order: fixed, or chosen by the AIC-type criterion among candidates.
#[derive(Clone, Debug, PartialEq)]
pub enum SieveOrder {
    Fixed(usize),
    Auto(Vec<usize>),
}

impl SieveOrder {
    /// AIC over orders `1..=max`.
    pub fn auto_up_to(max: usize) -> Self {
        Self::Auto((1..=max).collect())
    }
}

/// Gradient-descent settings shared by the semiparametric estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct GdConfig {
    /// Constant learning rate `γ`.
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once `max_j |θ_{k+1,j} − θ_{k,j}|` is below this.
    pub tolerance: f64,
    pub sieve_order: SieveOrder,
    /// Zero vector when `None`.
    pub initial_guess: Option<Vec<f64>>,
    /// Ridge for every sieve least-squares fit.
    pub ridge: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            max_iterations: 1_000_000,
            tolerance: 1e-6,
            sieve_order: SieveOrder::auto_up_to(6),
            initial_guess: None,
            ridge: DEFAULT_RIDGE,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument("ridge must be nonnegative".into()));
        }
        if let SieveOrder::Auto(c) = &self.sieve_order {
            if c.is_empty() {
                return Err(Error::InvalidArgument("no candidate sieve orders".into()));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn start(&self, dim: usize, what: &'static str) -> Result<Vec<f64>> {
        match &self.initial_guess {
            Some(g) => {
                check_len(what, dim, g.len())?;
                Ok(g.clone())
            }
            None => Ok(vec![0.0; dim]),
        }
    }
}

/// Result of the first-stage estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstStageFit {
    pub delta: Vec<f64>,
    /// `F̂_U` from the last round: sieve coefficients plus the index rescale.
    pub f_u: UnivariateSieve,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
}

impl FirstStageFit {
    pub fn pi(&self) -> &SieveCoefficients {
        &self.f_u.coefficients
    }

    pub fn index_rescale(&self) -> AffineRescale {
        self.f_u.rescale
    }

    /// `F̂_U(u)`, not clipped to `[0, 1]`.
    pub fn cdf(&self, u: f64) -> f64 {
        self.f_u.eval(u)
    }
}

/// `F̂_U(u)` from a fitted first stage.
pub fn evaluate_f_u(fit: &FirstStageFit, u: f64) -> f64 {
    fit.cdf(u)
}

/// Output of one round of [`sbgd_step`].
#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Step {
    pub delta: Vec<f64>,
    pub f_u: UnivariateSieve,
    /// `(1/n) Σ (F̂_U(index_i) − D_i)²` at the incoming `δ`.
    pub loss: f64,
}

/// Buffers reused across rounds so the hot loop does not allocate.
struct Workspace {
    index: Vec<f64>,
    basis: Vec<f64>,
    grad: Vec<f64>,
    d: Vec<f64>,
}

impl Workspace {
    fn new(data: &Dataset) -> Self {
        Self {
            index: vec![0.0; data.n()],
            basis: Vec::new(),
            grad: vec![0.0; data.p_z()],
            d: data.d_f64(),
        }
    }

    fn step(&mut self, data: &Dataset, delta: &[f64], gamma: f64, order: usize, ridge: f64) -> Result<Stage1Step> {
        let n = data.n();
        let z = data.z();
        for (i, (slot, z0)) in self.index.iter_mut().zip(data.z0()).enumerate() {
            *slot = z0 + dot(z.row(i), delta);
        }
        let rescale = AffineRescale::fit(self.index.iter().copied());
        let basis = SieveBasis::univariate(order);
        let dim = basis.dim();
        self.basis.resize(n * dim, 0.0);
        let mut acc = GramAccumulator::new(dim);
        for i in 0..n {
            let row = &mut self.basis[i * dim..(i + 1) * dim];
            legendre_into(rescale.apply(self.index[i]), row);
            acc.add(row, self.d[i]);
        }
        let pi = acc.solve(ridge)?;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for i in 0..n {
            let resid = dot(&self.basis[i * dim..(i + 1) * dim], &pi) - self.d[i];
            loss += resid * resid;
            for (g, zij) in self.grad.iter_mut().zip(z.row(i)) {
                *g += resid * zij;
            }
        }
        let scale = gamma / n as f64;
        let next = delta.iter().zip(&self.grad).map(|(d, g)| d - scale * g).collect();
        Ok(Stage1Step {
            delta: next,
            f_u: UnivariateSieve {
                coefficients: SieveCoefficients::new(pi, basis)?,
                rescale,
            },
            loss: loss / n as f64,
        })
    }
}

/// AIC choice of the `F̂_U` order at a given `δ` (effective sample size `n`).
pub fn select_first_stage_order(data: &Dataset, delta: &[f64], candidates: &[usize], ridge: f64) -> Result<usize> {
    let index = selection_index(data, delta)?;
    let d = data.d_f64();
    select_order_aic(SieveKind::Univariate, candidates, data.n(), &d, None, |q| {
        let f = fit_univariate(q, &index, &d, None, ridge)?;
        Ok(index.iter().map(|&s| f.eval(s)).collect())
    })
}

fn resolve_order(data: &Dataset, delta: &[f64], config: &GdConfig) -> Result<usize> {
    match &config.sieve_order {
        SieveOrder::Fixed(q) => Ok(*q),
        SieveOrder::Auto(c) => select_first_stage_order(data, delta, c, config.ridge),
    }
}

/// One round: sieve fit of `D` on `Φ(z0 + Z'δ_k)`, then the gradient update
/// with divisor `n`. An `Auto` order is resolved by AIC at `δ_k`.
pub fn sbgd_step(data: &Dataset, delta_k: &[f64], config: &GdConfig) -> Result<Stage1Step> {
    config.validate()?;
    check_len("delta", data.p_z(), delta_k.len())?;
    let order = resolve_order(data, delta_k, config)?;
    Workspace::new(data).step(data, delta_k, config.learning_rate, order, config.ridge)
}

/// Records every iteration up to this count, then every `TRACE_STRIDE`-th.
pub(crate) const TRACE_DENSE_LIMIT: usize = 10_000;
pub(crate) const TRACE_STRIDE: usize = 100;

pub(crate) fn record(trace: &mut Vec<TraceEntry>, entry: TraceEntry) {
    if entry.iteration <= TRACE_DENSE_LIMIT || entry.iteration % TRACE_STRIDE == 0 {
        trace.push(entry);
    }
}

/// Makes sure the final iteration is in the trace even when thinning skipped it.
pub(crate) fn record_last(trace: &mut Vec<TraceEntry>, entry: TraceEntry) {
    if trace.last().map_or(true, |e| e.iteration != entry.iteration) {
        trace.push(entry);
    }
}

/// Iterates [`sbgd_step`] from the configured initial guess until the
/// largest coordinate change is below `tolerance` or the cap is reached.
///
/// An `Auto` sieve order is selected once, at the initial guess.
pub fn sbgd_first_stage(data: &Dataset, config: &GdConfig) -> Result<FirstStageFit> {
    config.validate()?;
    let mut delta = config.start(data.p_z(), "initial delta")?;
    let order = resolve_order(data, &delta, config)?;
    let mut ws = Workspace::new(data);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let step = ws.step(data, &delta, config.learning_rate, order, config.ridge)?;
        if step.delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iterations, trace });
        }
        let change = max_abs_diff(&step.delta, &delta);
        let entry = TraceEntry {
            iteration: iterations,
            max_change: change,
            loss: step.loss,
        };
        record(&mut trace, entry);
        delta = step.delta;
        let converged = change < config.tolerance;
        if converged || iterations >= config.max_iterations {
            record_last(&mut trace, entry);
            return Ok(FirstStageFit {
                delta,
                f_u: step.f_u,
                trace,
                iterations,
                converged,
            });
        }
    }
}
