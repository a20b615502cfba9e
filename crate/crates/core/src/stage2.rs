//! Second-stage estimators of `β` given a first-stage `δ̂`.
//!
//! Both work in the plane of estimated indices `(ẑ_i, x_i(β)) =
//! (z0_i + Z_i'δ̂, x0_i + X_i'β)` over the selected rows.
//!
//! * Matching: each selected row is paired with its `m` nearest selected
//!   neighbours, and the update is
//!   `β ← β − (γ/S_n) Σ_i Σ_j W_ij (Y_j − Y_i) X_i`.
//!   The iteration stops once the running componentwise maximum and minimum
//!   of the iterate history (starting point included) have not moved for `T`
//!   consecutive rounds. The last iterate is returned.
//! * Sieve: `Ĝ` is the tensor-Legendre least-squares fit of `Y` on the index
//!   pair over selected rows, and the update is
//!   `β ← β − (γ/S_n) Σ_i D_i (Ĝ(ẑ_i, x_i(β)) − Y_i) X_i`,
//!   stopping on the largest coordinate change.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{
    select_order_aic, tensor_into, AffineRescale, BivariateSieve, GramAccumulator, SieveBasis, SieveCoefficients,
    SieveKind,
};
use crate::error::{check_len, Error, Result, TraceEntry};
use crate::knn::KdTree2;
use crate::linalg::{dot, max_abs_diff};
use crate::model::{outcome_index, selection_index, Dataset, IndexPair};
use crate::stage1::{record, record_last, FirstStageFit, GdConfig, SieveOrder};

/// Sparse `m`-nearest-neighbour weights over selected observations.
///
/// Row `rows[k]` has neighbours `neighbors[k * per_row..(k + 1) * per_row]`,
/// each with weight `1 / per_row`, ordered by distance then index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborWeights {
    pub n: usize,
    pub per_row: usize,
    pub rows: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl NeighborWeights {
    #[inline]
    pub fn weight(&self) -> f64 {
        1.0 / self.per_row as f64
    }

    pub fn neighbors_of(&self, k: usize) -> &[usize] {
        &self.neighbors[k * self.per_row..(k + 1) * self.per_row]
    }

    /// `(row, neighbours)` pairs in ascending row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.rows.iter().enumerate().map(move |(k, &i)| (i, self.neighbors_of(k)))
    }

    /// Dense weight `W_ij` (zero when `j` is not a neighbour of `i`).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows.binary_search(&i) {
            Ok(k) if self.neighbors_of(k).contains(&j) => self.weight(),
            _ => 0.0,
        }
    }
}

/// For every selected `i`, the `min(m, S_n − 1)` nearest selected `j ≠ i` in
/// Euclidean distance over the index plane; ties go to the smaller `j`.
pub fn knn_weights(pairs: &[IndexPair], selected: &[bool], m: usize) -> Result<NeighborWeights> {
    check_len("selection mask", pairs.len(), selected.len())?;
    if m == 0 {
        return Err(Error::InvalidArgument("neighbour count must be positive".into()));
    }
    let rows: Vec<usize> = (0..pairs.len()).filter(|&i| selected[i]).collect();
    if rows.len() < 2 {
        return Err(Error::InsufficientData(
            "matching needs at least two selected observations".into(),
        ));
    }
    let points: Vec<[f64; 2]> = rows.iter().map(|&i| [pairs[i].z_index, pairs[i].x_index]).collect();
    Ok(weights_from_points(pairs.len(), rows, &points, m))
}

fn weights_from_points(n: usize, rows: Vec<usize>, points: &[[f64; 2]], m: usize) -> NeighborWeights {
    let per_row = m.min(rows.len() - 1);
    let tree = KdTree2::build(points, &rows);
    let mut neighbors = Vec::with_capacity(rows.len() * per_row);
    let mut found = Vec::with_capacity(per_row);
    for (k, &i) in rows.iter().enumerate() {
        tree.nearest(points[k], per_row, Some(i), &mut found);
        neighbors.extend(found.iter().map(|f| f.1));
    }
    NeighborWeights {
        n,
        per_row,
        rows,
        neighbors,
    }
}

fn check_weights(data: &Dataset, weights: &NeighborWeights) -> Result<()> {
    check_len("weight matrix size", data.n(), weights.n)?;
    check_len("neighbour list", weights.rows.len() * weights.per_row, weights.neighbors.len())?;
    let d = data.d();
    let bad = weights
        .rows
        .iter()
        .chain(&weights.neighbors)
        .find(|&&i| i >= d.len() || !d[i]);
    match bad {
        Some(&row) => Err(Error::InvalidData {
            row,
            reason: "weights reference an unselected row".into(),
        }),
        None => Ok(()),
    }
}

/// `(1/S_n) Σ_i Σ_j W_ij (Y_j − Y_i)²`: share of mismatched neighbour labels.
fn matching_loss(dy: &[f64], weights: &NeighborWeights, s_n: f64) -> f64 {
    let w = weights.weight();
    weights
        .iter()
        .map(|(i, nb)| nb.iter().map(|&j| w * (dy[j] - dy[i]) * (dy[j] - dy[i])).sum::<f64>())
        .sum::<f64>()
        / s_n
}

fn matching_direction(data: &Dataset, dy: &[f64], weights: &NeighborWeights, out: &mut [f64]) {
    out.iter_mut().for_each(|g| *g = 0.0);
    let w = weights.weight();
    let x = data.x();
    for (i, nb) in weights.iter() {
        let c: f64 = nb.iter().map(|&j| w * (dy[j] - dy[i])).sum();
        if c != 0.0 {
            for (g, xi) in out.iter_mut().zip(x.row(i)) {
                *g += c * xi;
            }
        }
    }
}

/// `β_k − (γ/S_n) Σ_i Σ_j W_ij D_i D_j (Y_j − Y_i) X_i`.
pub fn matching_update_step(data: &Dataset, beta_k: &[f64], weights: &NeighborWeights, gamma: f64) -> Result<Vec<f64>> {
    check_len("beta", data.p_x(), beta_k.len())?;
    check_weights(data, weights)?;
    let mut g = vec![0.0; beta_k.len()];
    matching_direction(data, &data.dy_f64(), weights, &mut g);
    let scale = gamma / data.selected_count() as f64;
    Ok(beta_k.iter().zip(&g).map(|(b, g)| b - scale * g).collect())
}

/// Stopping rule for the matching iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchingTermination {
    /// `T`: consecutive rounds without a new running max or min.
    pub stability_rounds: usize,
    pub max_iterations: usize,
}

impl Default for MatchingTermination {
    fn default() -> Self {
        Self {
            stability_rounds: 50,
            max_iterations: 1_000_000,
        }
    }
}

impl MatchingTermination {
    pub fn validate(&self) -> Result<()> {
        if self.stability_rounds == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "stability rounds and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Tracks the componentwise running max and min of an iterate history and
/// reports when neither has moved for `rounds` consecutive observations.
#[derive(Clone, Debug)]
pub struct StabilityDetector {
    max: Vec<f64>,
    min: Vec<f64>,
    unchanged: usize,
    rounds: usize,
}

impl StabilityDetector {
    pub fn new(initial: &[f64], rounds: usize) -> Self {
        Self {
            max: initial.to_vec(),
            min: initial.to_vec(),
            unchanged: 0,
            rounds,
        }
    }

    /// Adds an iterate; returns `true` once the bounds have been stable for
    /// the configured number of rounds.
    pub fn observe(&mut self, x: &[f64]) -> bool {
        let mut moved = false;
        for ((hi, lo), &v) in self.max.iter_mut().zip(self.min.iter_mut()).zip(x) {
            if v > *hi {
                *hi = v;
                moved = true;
            }
            if v < *lo {
                *lo = v;
                moved = true;
            }
        }
        self.unchanged = if moved { 0 } else { self.unchanged + 1 };
        self.unchanged >= self.rounds
    }

    pub fn stable_rounds(&self) -> usize {
        self.unchanged
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecondStageMethod {
    Matching,
    Sieve,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecondStageFit {
    pub beta: Vec<f64>,
    pub method: SecondStageMethod,
    /// Final `Ĝ` (sieve method only).
    pub g: Option<BivariateSieve>,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
}

impl SecondStageFit {
    pub fn g_coefficients(&self) -> Option<&SieveCoefficients> {
        self.g.as_ref().map(|g| &g.coefficients)
    }
}

fn first_stage_index(data: &Dataset, first: &FirstStageFit) -> Result<Vec<f64>> {
    selection_index(data, &first.delta)
}

fn require_selected(data: &Dataset, at_least: usize) -> Result<()> {
    if data.selected_count() < at_least {
        return Err(Error::InsufficientData(alloc::format!(
            "{} selected observations, need at least {at_least}",
            data.selected_count()
        )));
    }
    Ok(())
}

/// Algorithm-1 style matching gradient descent. Weights are rebuilt from
/// the current `(ẑ, x(β_k))` pairs before every update.
pub fn matching_estimate(
    data: &Dataset,
    first: &FirstStageFit,
    config: &GdConfig,
    term: MatchingTermination,
    m: usize,
) -> Result<SecondStageFit> {
    config.validate()?;
    term.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("neighbour count must be positive".into()));
    }
    require_selected(data, 2)?;
    let z_hat = first_stage_index(data, first)?;
    let mut beta = config.start(data.p_x(), "initial beta")?;
    let rows = data.selected_rows();
    let dy = data.dy_f64();
    let s_n = rows.len() as f64;
    let x = data.x();
    let x0 = data.x0();
    let mut points: Vec<[f64; 2]> = rows.iter().map(|&i| [z_hat[i], 0.0]).collect();
    let mut grad = vec![0.0; beta.len()];
    let mut detector = StabilityDetector::new(&beta, term.stability_rounds);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        for (pt, &i) in points.iter_mut().zip(&rows) {
            pt[1] = x0[i] + dot(x.row(i), &beta);
        }
        let weights = weights_from_points(data.n(), rows.clone(), &points, m);
        matching_direction(data, &dy, &weights, &mut grad);
        let scale = config.learning_rate / s_n;
        let next: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - scale * g).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iterations, trace });
        }
        let entry = TraceEntry {
            iteration: iterations,
            max_change: max_abs_diff(&next, &beta),
            loss: matching_loss(&dy, &weights, s_n),
        };
        record(&mut trace, entry);
        beta = next;
        let stable = detector.observe(&beta);
        if stable || iterations >= term.max_iterations {
            record_last(&mut trace, entry);
            return Ok(SecondStageFit {
                beta,
                method: SecondStageMethod::Matching,
                g: None,
                trace,
                iterations,
                converged: stable,
            });
        }
    }
}

/// Tensor-sieve least squares of `Y` on `(ẑ, x(β_k))` over the selected
/// rows, each index rescaled to its range over those rows.
pub fn fit_g_sieve(data: &Dataset, z_hat: &[f64], beta_k: &[f64], q: usize, ridge: f64) -> Result<BivariateSieve> {
    check_len("first-stage index", data.n(), z_hat.len())?;
    require_selected(data, 1)?;
    let x_idx = outcome_index(data, beta_k)?;
    let rows = data.selected_rows();
    let u_rescale = AffineRescale::fit(rows.iter().map(|&i| z_hat[i]));
    let v_rescale = AffineRescale::fit(rows.iter().map(|&i| x_idx[i]));
    let basis = SieveBasis::tensor(q);
    let dy = data.dy_f64();
    let mut acc = GramAccumulator::new(basis.dim());
    let mut scratch = vec![0.0; 2 * (q + 1)];
    let mut buf = vec![0.0; basis.dim()];
    for &i in &rows {
        tensor_into(u_rescale.apply(z_hat[i]), v_rescale.apply(x_idx[i]), q, &mut scratch, &mut buf);
        acc.add(&buf, dy[i]);
    }
    Ok(BivariateSieve {
        coefficients: SieveCoefficients::new(acc.solve(ridge)?, basis)?,
        u_rescale,
        v_rescale,
    })
}

/// `β_k − (γ/S_n) Σ_i D_i (g(ẑ_i, x_i(β_k)) − Y_i) X_i` for an arbitrary
/// conditional-probability function `g`.
pub fn gradient_step_with<G>(data: &Dataset, z_hat: &[f64], beta_k: &[f64], gamma: f64, g: G) -> Result<Vec<f64>>
where
    G: Fn(f64, f64) -> f64,
{
    check_len("first-stage index", data.n(), z_hat.len())?;
    require_selected(data, 1)?;
    let x_idx = outcome_index(data, beta_k)?;
    let dy = data.dy_f64();
    let x = data.x();
    let mut grad = vec![0.0; beta_k.len()];
    for i in data.selected_rows() {
        let r = g(z_hat[i], x_idx[i]) - dy[i];
        for (gj, xij) in grad.iter_mut().zip(x.row(i)) {
            *gj += r * xij;
        }
    }
    let scale = gamma / data.selected_count() as f64;
    Ok(beta_k.iter().zip(&grad).map(|(b, g)| b - scale * g).collect())
}

/// One sieve update with a fitted `Ĝ`.
pub fn sieve_update_step(
    data: &Dataset,
    z_hat: &[f64],
    beta_k: &[f64],
    g_hat: &BivariateSieve,
    gamma: f64,
) -> Result<Vec<f64>> {
    if g_hat.coefficients.basis.kind != SieveKind::Tensor {
        return Err(Error::InvalidArgument("Ĝ must be on a tensor basis".into()));
    }
    gradient_step_with(data, z_hat, beta_k, gamma, |u, v| g_hat.eval(u, v))
}

/// AIC choice of the `Ĝ` order at `β` (effective sample size `S_n`).
pub fn select_second_stage_order(
    data: &Dataset,
    z_hat: &[f64],
    beta: &[f64],
    candidates: &[usize],
    ridge: f64,
) -> Result<usize> {
    let dy = data.dy_f64();
    let x_idx = outcome_index(data, beta)?;
    select_order_aic(
        SieveKind::Tensor,
        candidates,
        data.selected_count().max(1),
        &dy,
        Some(data.d()),
        |q| {
            let g = fit_g_sieve(data, z_hat, beta, q, ridge)?;
            Ok(z_hat.iter().zip(&x_idx).map(|(&u, &v)| g.eval(u, v)).collect())
        },
    )
}

/// Fused fit-and-step over the selected rows, reusing basis evaluations.
struct SieveWorkspace {
    rows: Vec<usize>,
    u: Vec<f64>,
    u_rescale: AffineRescale,
    y: Vec<f64>,
    basis: Vec<f64>,
    scratch: Vec<f64>,
    grad: Vec<f64>,
}

impl SieveWorkspace {
    fn new(data: &Dataset, z_hat: &[f64]) -> Self {
        let rows = data.selected_rows();
        let u: Vec<f64> = rows.iter().map(|&i| z_hat[i]).collect();
        let u_rescale = AffineRescale::fit(u.iter().copied());
        let y = rows.iter().map(|&i| if data.y()[i] == Some(true) { 1.0 } else { 0.0 }).collect();
        Self {
            rows,
            u,
            u_rescale,
            y,
            basis: Vec::new(),
            scratch: Vec::new(),
            grad: vec![0.0; data.p_x()],
        }
    }

    fn step(
        &mut self,
        data: &Dataset,
        beta: &[f64],
        gamma: f64,
        q: usize,
        ridge: f64,
    ) -> Result<(Vec<f64>, BivariateSieve, f64)> {
        let x = data.x();
        let x0 = data.x0();
        let v: Vec<f64> = self.rows.iter().map(|&i| x0[i] + dot(x.row(i), beta)).collect();
        let v_rescale = AffineRescale::fit(v.iter().copied());
        let basis = SieveBasis::tensor(q);
        let dim = basis.dim();
        let s = self.rows.len();
        self.basis.resize(s * dim, 0.0);
        self.scratch.resize(2 * (q + 1), 0.0);
        let mut acc = GramAccumulator::new(dim);
        for k in 0..s {
            let row = &mut self.basis[k * dim..(k + 1) * dim];
            tensor_into(
                self.u_rescale.apply(self.u[k]),
                v_rescale.apply(v[k]),
                q,
                &mut self.scratch,
                row,
            );
            acc.add(row, self.y[k]);
        }
        let pi = acc.solve(ridge)?;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (k, &i) in self.rows.iter().enumerate() {
            let r = dot(&self.basis[k * dim..(k + 1) * dim], &pi) - self.y[k];
            loss += r * r;
            for (g, xij) in self.grad.iter_mut().zip(x.row(i)) {
                *g += r * xij;
            }
        }
        let scale = gamma / s as f64;
        let next = beta.iter().zip(&self.grad).map(|(b, g)| b - scale * g).collect();
        let g = BivariateSieve {
            coefficients: SieveCoefficients::new(pi, basis)?,
            u_rescale: self.u_rescale,
            v_rescale,
        };
        Ok((next, g, loss / s as f64))
    }
}

/// Algorithm-2 style sieve gradient descent. `Ĝ` is refit before every
/// update; an `Auto` order is chosen once at the initial guess.
pub fn sieve_estimate(data: &Dataset, first: &FirstStageFit, config: &GdConfig) -> Result<SecondStageFit> {
    config.validate()?;
    require_selected(data, 1)?;
    let z_hat = first_stage_index(data, first)?;
    let mut beta = config.start(data.p_x(), "initial beta")?;
    let q = match &config.sieve_order {
        SieveOrder::Fixed(q) => *q,
        SieveOrder::Auto(c) => select_second_stage_order(data, &z_hat, &beta, c, config.ridge)?,
    };
    let mut ws = SieveWorkspace::new(data, &z_hat);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (next, g, loss) = ws.step(data, &beta, config.learning_rate, q, config.ridge)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iterations, trace });
        }
        let change = max_abs_diff(&next, &beta);
        let entry = TraceEntry {
            iteration: iterations,
            max_change: change,
            loss,
        };
        record(&mut trace, entry);
        beta = next;
        let converged = change < config.tolerance;
        if converged || iterations >= config.max_iterations {
            record_last(&mut trace, entry);
            return Ok(SecondStageFit {
                beta,
                method: SecondStageMethod::Sieve,
                g: Some(g),
                trace,
                iterations,
                converged,
            });
        }
    }
}
