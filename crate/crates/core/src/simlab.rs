//! Simulation designs, per-replication estimation and bias/RMSE aggregation.
//!
//! Regressors are iid `U[0, 1]`. The errors are `U = η` and
//! `V = 0.5 η + √0.75 ξ`, with `η, ξ` either independent standard normals or
//! independent standard Cauchy variables. Replication `r` of a design with
//! base seed `s` draws its data from seed `s + r`, so replications can run
//! in any order or in parallel with identical results.
//!
//! This module is clock-free: callers supply a monotone clock in seconds when
//! they want timings (see `run_replication`).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::model::Dataset;
use crate::parametric::{joint_mle, two_step_nls, ParametricConfig};
use crate::stage1::{sbgd_first_stage, FirstStageFit, GdConfig};
use crate::stage2::{matching_estimate, sieve_estimate, MatchingTermination};

// unused when std is linked (tests), where f64 has inherent math methods
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorLaw {
    /// `η, ξ ~ N(0, 1)`.
    NormalPair,
    /// `η, ξ ~ Cauchy(0, 1)`.
    CauchyPair,
}

/// A simulation design.
#[derive(Clone, Debug, PartialEq)]
pub struct DgpSpec {
    pub n: usize,
    pub true_delta: Vec<f64>,
    pub true_beta: Vec<f64>,
    pub error_law: ErrorLaw,
    pub seed: u64,
}

/// Entries `+1/√p, −1/√p, +1/√p, …`.
pub fn alternating_coefficients(p: usize) -> Vec<f64> {
    let c = 1.0 / (p as f64).sqrt();
    (0..p).map(|j| if j % 2 == 0 { c } else { -c }).collect()
}

impl DgpSpec {
    /// Default design with `p` free regressors in each equation and
    /// alternating `±1/√p` coefficients.
    pub fn new(n: usize, p: usize, error_law: ErrorLaw, seed: u64) -> Self {
        Self {
            n,
            true_delta: alternating_coefficients(p),
            true_beta: alternating_coefficients(p),
            error_law,
            seed,
        }
    }

    pub fn p_z(&self) -> usize {
        self.true_delta.len()
    }

    pub fn p_x(&self) -> usize {
        self.true_beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("design needs n ≥ 1".into()));
        }
        if self.true_delta.iter().chain(&self.true_beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("true coefficients must be finite".into()));
        }
        Ok(())
    }

    /// The same design with the seed of replication `rep`.
    pub fn for_replication(&self, rep: usize) -> Self {
        Self {
            seed: replication_seed(self.seed, rep),
            ..self.clone()
        }
    }
}

pub fn replication_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64)
}

fn draw_error<R: Rng + ?Sized>(law: ErrorLaw, rng: &mut R) -> f64 {
    match law {
        ErrorLaw::NormalPair => StandardNormal.sample(rng),
        ErrorLaw::CauchyPair => Cauchy::new(0.0, 1.0).expect("unit scale").sample(rng),
    }
}

/// One draw of `(U, V) = (η, 0.5 η + √0.75 ξ)`.
pub fn draw_error_pair<R: Rng + ?Sized>(law: ErrorLaw, rng: &mut R) -> (f64, f64) {
    let eta = draw_error(law, rng);
    let xi = draw_error(law, rng);
    (eta, 0.5 * eta + 0.75f64.sqrt() * xi)
}

/// Draws a dataset from the design. Bit-identical for equal specs.
pub fn generate_dataset(spec: &DgpSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, pz, px) = (spec.n, spec.p_z(), spec.p_x());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z0 = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n * pz);
    let mut x0 = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * px);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let zi0: f64 = rng.random();
        let mut sel = zi0;
        for &dj in &spec.true_delta {
            let v: f64 = rng.random();
            sel += v * dj;
            z.push(v);
        }
        let xi0: f64 = rng.random();
        let mut out = xi0;
        for &bj in &spec.true_beta {
            let v: f64 = rng.random();
            out += v * bj;
            x.push(v);
        }
        let (u, v) = draw_error_pair(spec.error_law, &mut rng);
        let di = sel - u > 0.0;
        z0.push(zi0);
        x0.push(xi0);
        d.push(di);
        y.push(di.then_some(out - v > 0.0));
    }
    Dataset::new(
        z0,
        Matrix::from_row_major(n, pz, z)?,
        x0,
        Matrix::from_row_major(n, px, x)?,
        d,
        y,
    )
}

/// Per-coefficient and aggregate accuracy over replications.
///
/// `agg_bias`/`agg_rmse` are the headline `B-·`/`R-·` summaries. The
/// `sum_abs_bias`/`rmse_norm` pair is the L1 norm of the bias vector and the
/// Euclidean norm of the RMSE vector, which is how published tables of this
/// kind aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// `mean_r(θ̂_rj) − θ_j`.
    pub bias: Vec<f64>,
    /// `√(mean_r (θ̂_rj − θ_j)²)`.
    pub rmse: Vec<f64>,
    /// Mean over components of `|bias_j|`.
    pub agg_bias: f64,
    /// Mean over components of `rmse_j`.
    pub agg_rmse: f64,
    /// `Σ_j |bias_j|`.
    pub sum_abs_bias: f64,
    /// `√(Σ_j rmse_j²)`.
    pub rmse_norm: f64,
}

pub fn aggregate_metrics(estimates: &[Vec<f64>], truth: &[f64]) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(Error::InsufficientData("no estimates to aggregate".into()));
    }
    for e in estimates {
        check_len("estimate", truth.len(), e.len())?;
    }
    let r = estimates.len() as f64;
    let mut bias = vec![0.0; truth.len()];
    let mut rmse = vec![0.0; truth.len()];
    for e in estimates {
        for (j, (&v, &t)) in e.iter().zip(truth).enumerate() {
            bias[j] += (v - t) / r;
            rmse[j] += (v - t) * (v - t) / r;
        }
    }
    rmse.iter_mut().for_each(|v| *v = v.sqrt());
    let p = truth.len().max(1) as f64;
    let agg_bias = bias.iter().map(|b| b.abs()).sum::<f64>() / p;
    let agg_rmse = rmse.iter().sum::<f64>() / p;
    let sum_abs_bias = bias.iter().map(|b| b.abs()).sum();
    let rmse_norm = rmse.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(Metrics {
        bias,
        rmse,
        agg_bias,
        agg_rmse,
        sum_abs_bias,
        rmse_norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Mle,
    Nls,
    MatchingGd,
    SieveGd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mle, Method::Nls, Method::MatchingGd, Method::SieveGd];

    /// Table label.
    pub fn label(self) -> &'static str {
        match self {
            Method::Mle => "MLE",
            Method::Nls => "NLS",
            Method::MatchingGd => "M-GD",
            Method::SieveGd => "S-GD",
        }
    }

    /// Parses a label or a short name (`mle`, `nls`, `matching`, `sieve`).
    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "mle" => Some(Method::Mle),
            "nls" => Some(Method::Nls),
            "m-gd" | "mgd" | "matching" => Some(Method::MatchingGd),
            "s-gd" | "sgd" | "sieve" => Some(Method::SieveGd),
            _ => None,
        }
    }

    pub fn uses_first_stage(self) -> bool {
        matches!(self, Method::MatchingGd | Method::SieveGd)
    }
}

/// Settings for every method a replication may run.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSettings {
    pub first_stage: GdConfig,
    pub matching: GdConfig,
    pub matching_termination: MatchingTermination,
    pub neighbors: usize,
    pub sieve: GdConfig,
    pub parametric: ParametricConfig,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            first_stage: GdConfig::default(),
            matching: GdConfig::default(),
            matching_termination: MatchingTermination::default(),
            neighbors: 1,
            sieve: GdConfig::default(),
            parametric: ParametricConfig::default(),
        }
    }
}

/// `(δ̂, β̂)` from one method on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEstimate {
    pub delta: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Runs one estimator. Semiparametric methods reuse `first` when given and
/// otherwise fit the first stage themselves.
pub fn estimate_method(
    data: &Dataset,
    method: Method,
    settings: &MethodSettings,
    first: Option<&FirstStageFit>,
) -> Result<PointEstimate> {
    let fit_first;
    let first = match (method.uses_first_stage(), first) {
        (true, Some(f)) => Some(f),
        (true, None) => {
            fit_first = sbgd_first_stage(data, &settings.first_stage)?;
            Some(&fit_first)
        }
        (false, _) => None,
    };
    match method {
        Method::Mle => joint_mle(data, &settings.parametric).map(|f| PointEstimate {
            delta: f.delta,
            beta: f.beta,
        }),
        Method::Nls => two_step_nls(data, &settings.parametric).map(|f| PointEstimate {
            delta: f.delta,
            beta: f.beta,
        }),
        Method::MatchingGd => {
            let first = first.expect("first stage fitted");
            matching_estimate(
                data,
                first,
                &settings.matching,
                settings.matching_termination,
                settings.neighbors,
            )
            .map(|f| PointEstimate {
                delta: first.delta.clone(),
                beta: f.beta,
            })
        }
        Method::SieveGd => {
            let first = first.expect("first stage fitted");
            sieve_estimate(data, first, &settings.sieve).map(|f| PointEstimate {
                delta: first.delta.clone(),
                beta: f.beta,
            })
        }
    }
}

/// Outcome of one method in one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    /// The estimate, or the error message.
    pub result: core::result::Result<PointEstimate, String>,
    /// Seconds spent, including the shared first stage for M-GD and S-GD.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub runs: Vec<MethodRun>,
}

/// Generates replication `rep` and runs each method in turn.
///
/// `clock` returns elapsed seconds from any fixed origin. The first stage is
/// fitted once and shared by M-GD and S-GD; its time is charged to both.
pub fn run_replication<C: Fn() -> f64>(
    spec: &DgpSpec,
    rep: usize,
    methods: &[Method],
    settings: &MethodSettings,
    clock: C,
) -> Result<ReplicationOutcome> {
    let data = generate_dataset(&spec.for_replication(rep))?;
    let mut first: Option<core::result::Result<FirstStageFit, String>> = None;
    let mut first_seconds = 0.0;
    let mut runs = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut extra = 0.0;
        let result = if method.uses_first_stage() {
            if first.is_none() {
                let t = clock();
                first = Some(sbgd_first_stage(&data, &settings.first_stage).map_err(|e| alloc::format!("{e}")));
                first_seconds = clock() - t;
            }
            extra = first_seconds;
            match first.as_ref().expect("set above") {
                Ok(f) => {
                    let t = clock();
                    let r = estimate_method(&data, method, settings, Some(f)).map_err(|e| alloc::format!("{e}"));
                    extra += clock() - t;
                    r
                }
                Err(e) => Err(alloc::format!("first stage: {e}")),
            }
        } else {
            let t = clock();
            let r = estimate_method(&data, method, settings, None).map_err(|e| alloc::format!("{e}"));
            extra += clock() - t;
            r
        };
        if let Err(e) = &result {
            log::warn!("replication {rep}, {}: {e}", method.label());
        }
        runs.push(MethodRun {
            method,
            result,
            seconds: extra,
        });
    }
    Ok(ReplicationOutcome { rep, runs })
}

/// Aggregated results of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub succeeded: usize,
    pub failed: usize,
    /// `None` when every replication failed.
    pub delta: Option<Metrics>,
    pub beta: Option<Metrics>,
    /// Mean seconds per successful replication.
    pub mean_seconds: f64,
}

impl MethodSummary {
    pub fn is_failed(&self) -> bool {
        self.succeeded == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloReport {
    pub spec: DgpSpec,
    pub replications: usize,
    pub methods: Vec<MethodSummary>,
}

impl MonteCarloReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Aggregates replication outcomes. The result does not depend on the order
/// of `outcomes`.
pub fn summarize(spec: &DgpSpec, methods: &[Method], outcomes: &[ReplicationOutcome]) -> Result<MonteCarloReport> {
    let mut sorted: Vec<&ReplicationOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.rep);
    let mut summaries = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut deltas = Vec::new();
        let mut betas = Vec::new();
        let mut seconds = 0.0;
        let mut failed = 0;
        for run in sorted.iter().flat_map(|o| o.runs.iter()).filter(|r| r.method == method) {
            match &run.result {
                Ok(est) => {
                    deltas.push(est.delta.clone());
                    betas.push(est.beta.clone());
                    seconds += run.seconds;
                }
                Err(_) => failed += 1,
            }
        }
        let succeeded = deltas.len();
        let (delta, beta) = if succeeded == 0 {
            (None, None)
        } else {
            (
                Some(aggregate_metrics(&deltas, &spec.true_delta)?),
                Some(aggregate_metrics(&betas, &spec.true_beta)?),
            )
        };
        summaries.push(MethodSummary {
            method,
            succeeded,
            failed,
            delta,
            beta,
            mean_seconds: if succeeded > 0 { seconds / succeeded as f64 } else { 0.0 },
        });
    }
    Ok(MonteCarloReport {
        spec: spec.clone(),
        replications: outcomes.len(),
        methods: summaries,
    })
}

/// Sequential Monte Carlo driver. See `run_replication` for `clock`.
pub fn run_monte_carlo<C: Fn() -> f64>(
    spec: &DgpSpec,
    methods: &[Method],
    reps: usize,
    settings: &MethodSettings,
    clock: C,
) -> Result<MonteCarloReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    let outcomes = (0..reps)
        .map(|r| run_replication(spec, r, methods, settings, &clock))
        .collect::<Result<Vec<_>>>()?;
    summarize(spec, methods, &outcomes)
}
