//! Matching gradient descent for a semiparametric multinomial choice model
//! with an outside option and two inside alternatives:
//!
//! ```text
//! y*_0 = 0,   y*_j = x_j'β − ε_j  (j = 1, 2),   y_1 = 1{y*_1 > max(0, y*_2)}.
//! ```
//!
//! Each observation `i` is matched to the `m` observations `ℓ ≠ i` whose
//! alternative-2 index `x_ℓ2'β` is closest to `x_i2'β`, and the update is
//!
//! ```text
//! β ← β − (γ/n) Σ_i Σ_ℓ W_iℓ (y_ℓ1 − y_i1) x_i1
//! ```
//!
//! followed by the scale normalisation `|β_1| = 1`, with the sign of `β_1`
//! kept from the starting point. Only the direction of `β` is identified.
//!
//! Two readings differ from a literal transcription of the algorithm. The
//! regressor multiplying the matched difference is `x_i1` (length `p`,
//! conformable with `β`), and the difference is oriented as in the
//! selection-model matching update, `y_ℓ1 − y_i1`. With the opposite
//! orientation the normalised iteration is repelled from the true direction.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result, TraceEntry};
use crate::knn::nearest_1d;
use crate::linalg::{dot, max_abs_diff, Matrix};
use crate::stage1::{record, record_last, GdConfig};
use crate::stage2::{MatchingTermination, NeighborWeights, StabilityDetector};

// unused when std is linked (tests), where f64 has inherent math methods
#[allow(unused_imports)]
use num_traits::Float;

/// Observed choices: alternative-specific regressors and the indicator that
/// alternative 1 was chosen.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceDataset {
    x1: Matrix,
    x2: Matrix,
    y1: Vec<bool>,
}

impl ChoiceDataset {
    pub fn new(x1: Matrix, x2: Matrix, y1: Vec<bool>) -> Result<Self> {
        let n = y1.len();
        if n == 0 {
            return Err(Error::InsufficientData("choice dataset has no rows".into()));
        }
        check_len("x1 rows", n, x1.rows())?;
        check_len("x2 rows", n, x2.rows())?;
        check_len("x2 columns", x1.cols(), x2.cols())?;
        if x1.cols() == 0 {
            return Err(Error::InvalidArgument("at least one regressor is required".into()));
        }
        if let Some(k) = x1.as_slice().iter().chain(x2.as_slice()).position(|v| !v.is_finite()) {
            return Err(Error::InvalidData {
                row: (k % (n * x1.cols())) / x1.cols(),
                reason: "non-finite regressor".into(),
            });
        }
        Ok(Self { x1, x2, y1 })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn p(&self) -> usize {
        self.x1.cols()
    }

    pub fn x1(&self) -> &Matrix {
        &self.x1
    }

    pub fn x2(&self) -> &Matrix {
        &self.x2
    }

    pub fn y1(&self) -> &[bool] {
        &self.y1
    }
}

/// For every `i`, the `min(m, n − 1)` indices `ℓ ≠ i` minimising
/// `|(x_i2 − x_ℓ2)'β|`, ties by smaller `ℓ`.
pub fn choice_knn_weights(x2: &Matrix, beta: &[f64], m: usize) -> Result<NeighborWeights> {
    check_len("beta", x2.cols(), beta.len())?;
    let n = x2.rows();
    if n < 2 {
        return Err(Error::InsufficientData("matching needs at least two observations".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("neighbour count must be positive".into()));
    }
    let per_row = m.min(n - 1);
    let index: Vec<f64> = x2.iter_rows().map(|r| dot(r, beta)).collect();
    Ok(NeighborWeights {
        n,
        per_row,
        rows: (0..n).collect(),
        neighbors: nearest_1d(&index, per_row),
    })
}

/// The raw update `β − (γ/n) Σ_i Σ_ℓ W_iℓ (y_ℓ1 − y_i1) x_i1`, before
/// normalisation.
pub fn multinomial_update_step(
    data: &ChoiceDataset,
    beta: &[f64],
    weights: &NeighborWeights,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_len("beta", data.p(), beta.len())?;
    check_len("weight matrix size", data.n(), weights.n)?;
    let y: Vec<f64> = data.y1.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let w = weights.weight();
    let mut g = vec![0.0; beta.len()];
    for (i, nb) in weights.iter() {
        let c: f64 = nb.iter().map(|&l| w * (y[l] - y[i])).sum();
        if c != 0.0 {
            for (gj, xij) in g.iter_mut().zip(data.x1.row(i)) {
                *gj += c * xij;
            }
        }
    }
    let scale = gamma / data.n() as f64;
    Ok(beta.iter().zip(&g).map(|(b, g)| b - scale * g).collect())
}

/// Rescales `beta` so that `|β_1| = 1` and sets the sign of `β_1` to `sign`.
pub fn normalize_first(beta: &mut [f64], sign: f64) -> Result<()> {
    let b1 = beta[0].abs();
    if !(b1 > 0.0) || !b1.is_finite() {
        return Err(Error::InvalidArgument("first coefficient is zero; scale normalisation undefined".into()));
    }
    beta.iter_mut().for_each(|b| *b /= b1);
    beta[0] = sign;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceFit {
    pub beta: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates weight construction, update and normalisation until the
/// running max/min of the (normalised) iterates is stable for `T` rounds.
///
/// The starting point defaults to `e_1` and is normalised before the first
/// round; its first coefficient must be nonzero.
pub fn multinomial_estimate(
    data: &ChoiceDataset,
    config: &GdConfig,
    term: MatchingTermination,
    m: usize,
) -> Result<ChoiceFit> {
    config.validate()?;
    term.validate()?;
    let p = data.p();
    let mut beta = match &config.initial_guess {
        Some(g) => {
            check_len("initial beta", p, g.len())?;
            g.clone()
        }
        None => {
            let mut e = vec![0.0; p];
            e[0] = 1.0;
            e
        }
    };
    let sign = if beta[0] < 0.0 { -1.0 } else { 1.0 };
    normalize_first(&mut beta, sign)?;
    let mut detector = StabilityDetector::new(&beta, term.stability_rounds);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let weights = choice_knn_weights(&data.x2, &beta, m)?;
        let mut next = multinomial_update_step(data, &beta, &weights, config.learning_rate)?;
        if next.iter().any(|v| !v.is_finite()) || normalize_first(&mut next, sign).is_err() {
            return Err(Error::Divergence { iterations, trace });
        }
        let entry = TraceEntry {
            iteration: iterations,
            max_change: max_abs_diff(&next, &beta),
            loss: f64::NAN,
        };
        record(&mut trace, entry);
        beta = next;
        let stable = detector.observe(&beta);
        if stable || iterations >= term.max_iterations {
            record_last(&mut trace, entry);
            return Ok(ChoiceFit {
                beta,
                trace,
                iterations,
                converged: stable,
            });
        }
    }
}

/// Draws `n` choices with `x_ij ~ N(0, 1)` iid and logistic `ε_j`.
pub fn generate_choice_dataset(n: usize, true_beta: &[f64], seed: u64) -> Result<ChoiceDataset> {
    let p = true_beta.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x1 = Vec::with_capacity(n * p);
    let mut x2 = Vec::with_capacity(n * p);
    let mut y1 = Vec::with_capacity(n);
    let logistic = |rng: &mut ChaCha8Rng| {
        // open interval keeps the logit finite
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        (u / (1.0 - u)).ln()
    };
    for _ in 0..n {
        let mut u1 = 0.0;
        for &b in true_beta {
            let v: f64 = StandardNormal.sample(&mut rng);
            u1 += v * b;
            x1.push(v);
        }
        let mut u2 = 0.0;
        for &b in true_beta {
            let v: f64 = StandardNormal.sample(&mut rng);
            u2 += v * b;
            x2.push(v);
        }
        let y1s = u1 - logistic(&mut rng);
        let y2s = u2 - logistic(&mut rng);
        y1.push(y1s > 0.0 && y1s > y2s);
    }
    ChoiceDataset::new(Matrix::from_row_major(n, p, x1)?, Matrix::from_row_major(n, p, x2)?, y1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_neighbours() {
        let x2 = Matrix::from_rows(&[[0.0], [0.4], [1.0]]).unwrap();
        let w = choice_knn_weights(&x2, &[1.0], 1).unwrap();
        assert_eq!(w.neighbors, vec![1, 0, 1]);
        let w = choice_knn_weights(&x2, &[0.0], 1).unwrap();
        assert_eq!(w.neighbors, vec![1, 0, 0]);
        assert!(choice_knn_weights(&Matrix::from_rows(&[[1.0]]).unwrap(), &[1.0], 1).is_err());
    }

    fn three_rows(y1: Vec<bool>) -> ChoiceDataset {
        ChoiceDataset::new(
            Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0], [2.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[[0.0, 0.0], [0.4, 0.0], [1.0, 0.0]]).unwrap(),
            y1,
        )
        .unwrap()
    }

    #[test]
    fn hand_step() {
        // neighbours 0→1, 1→0, 2→1; y = (1, 0, 1)
        // Σ = (0 − 1)·x_0 + (1 − 0)·x_1 + (0 − 1)·x_2 = (−2.5, −3)
        let data = three_rows(vec![true, false, true]);
        let w = choice_knn_weights(data.x2(), &[1.0, 0.5], 1).unwrap();
        let b = multinomial_update_step(&data, &[1.0, 0.5], &w, 1.0).unwrap();
        assert!((b[0] - (1.0 + 2.5 / 3.0)).abs() < 1e-12);
        assert!((b[1] - (0.5 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_choice_returns_start() {
        let data = three_rows(vec![false; 3]);
        let cfg = GdConfig {
            initial_guess: Some(vec![-2.0, 1.0]),
            ..GdConfig::default()
        };
        let term = MatchingTermination {
            stability_rounds: 4,
            max_iterations: 100,
        };
        let fit = multinomial_estimate(&data, &cfg, term, 1).unwrap();
        assert_eq!(fit.beta, vec![-1.0, 0.5]);
        assert_eq!(fit.iterations, 4);
    }

    #[test]
    fn normalisation_keeps_sign() {
        let mut b = vec![-0.5, 1.0];
        normalize_first(&mut b, 1.0).unwrap();
        assert_eq!(b, vec![1.0, 2.0]);
        assert!(normalize_first(&mut [0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn generated_data_is_deterministic() {
        let a = generate_choice_dataset(50, &[1.0, -0.5], 3).unwrap();
        assert_eq!(a, generate_choice_dataset(50, &[1.0, -0.5], 3).unwrap());
        let share = a.y1().iter().filter(|&&b| b).count();
        assert!(share > 0 && share < 50);
    }
}
