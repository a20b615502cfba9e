//! Orthonormal shifted-Legendre sieves on `[0, 1]` and `[0, 1]²`, sieve least
//! squares, and AIC-type order selection.
//!
//! Entry `j` of the univariate basis is `P̃_j(u) = √(2j+1) · P_j(2u − 1)`, so
//! that `∫₀¹ P̃_j P̃_k = 1{j = k}`. The tensor basis of order `q` stores
//! `P̃_s(u) · P̃_t(v)` at flat position `s · (q + 1) + t` (row-major in `(s, t)`).
//!
//! Arguments outside `[0, 1]` are clamped before evaluation. Indices such as
//! `z0 + Z'δ` are first mapped into the unit interval by an [`AffineRescale`]
//! fitted to the sample range, and the map is stored with the coefficients so
//! the fitted function can be evaluated at new points.

use alloc::vec;
use alloc::vec::Vec;

// unused when std is linked (tests), where f64 has inherent math methods
#[allow(unused_imports)]
use num_traits::Float;


use crate::error::{check_len, Error, Result};
use crate::linalg::{cholesky_solve, dot, Matrix};

/// Ridge added to every internal sieve fit.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// Lower bound on the residual variance inside the AIC logarithm.
pub const AIC_VARIANCE_FLOOR: f64 = 1e-12;

/// Writes `P̃_0(u), …, P̃_q(u)` into `out` (length `q + 1`).
pub fn legendre_into(u: f64, out: &mut [f64]) {
    let u = u.clamp(0.0, 1.0);
    let x = 2.0 * u - 1.0;
    let q1 = out.len();
    if q1 == 0 {
        return;
    }
    // plain Legendre recursion, normalised afterwards
    let (mut prev, mut cur) = (1.0, x);
    out[0] = 1.0;
    if q1 > 1 {
        out[1] = x;
    }
    for j in 1..q1.saturating_sub(1) {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
        out[j + 1] = next;
    }
    for (j, v) in out.iter_mut().enumerate() {
        *v *= (2.0 * j as f64 + 1.0).sqrt();
    }
}

/// Orthonormal shifted-Legendre basis of order `q` at `u`.
pub fn legendre_univariate(u: f64, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; q + 1];
    legendre_into(u, &mut out);
    out
}

/// Writes the `(q + 1)²` tensor basis at `(u, v)` into `out`, using `scratch`
/// (length `2(q + 1)`) for the univariate factors.
pub fn tensor_into(u: f64, v: f64, q: usize, scratch: &mut [f64], out: &mut [f64]) {
    let q1 = q + 1;
    let (pu, pv) = scratch[..2 * q1].split_at_mut(q1);
    legendre_into(u, pu);
    legendre_into(v, pv);
    for s in 0..q1 {
        let a = pu[s];
        let row = &mut out[s * q1..(s + 1) * q1];
        for (o, b) in row.iter_mut().zip(pv.iter()) {
            *o = a * b;
        }
    }
}

/// Tensor-product basis of order `q` at `(u, v)`.
pub fn tensor_bivariate(u: f64, v: f64, q: usize) -> Vec<f64> {
    let mut scratch = vec![0.0; 2 * (q + 1)];
    let mut out = vec![0.0; (q + 1) * (q + 1)];
    tensor_into(u, v, q, &mut scratch, &mut out);
    out
}

/// Flat position of `P̃_s(u)·P̃_t(v)` in the tensor basis.
#[inline]
pub fn tensor_flat_index(s: usize, t: usize, q: usize) -> usize {
    s * (q + 1) + t
}

/// Inverse of [`tensor_flat_index`].
#[inline]
pub fn tensor_pair(flat: usize, q: usize) -> (usize, usize) {
    (flat / (q + 1), flat % (q + 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SieveKind {
    Univariate,
    Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SieveBasis {
    pub order: usize,
    pub kind: SieveKind,
}

impl SieveBasis {
    pub fn univariate(order: usize) -> Self {
        Self {
            order,
            kind: SieveKind::Univariate,
        }
    }

    pub fn tensor(order: usize) -> Self {
        Self {
            order,
            kind: SieveKind::Tensor,
        }
    }

    pub fn dim(&self) -> usize {
        let q1 = self.order + 1;
        match self.kind {
            SieveKind::Univariate => q1,
            SieveKind::Tensor => q1 * q1,
        }
    }
}

/// Sieve coefficients tagged with the basis they multiply.
#[derive(Clone, Debug, PartialEq)]
pub struct SieveCoefficients {
    pub values: Vec<f64>,
    pub basis: SieveBasis,
}

impl SieveCoefficients {
    pub fn new(values: Vec<f64>, basis: SieveBasis) -> Result<Self> {
        check_len("sieve coefficients", basis.dim(), values.len())?;
        Ok(Self { values, basis })
    }
}

/// Affine map `s ↦ (s − lo) / width` sending a sample range onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineRescale {
    pub lo: f64,
    pub width: f64,
}

impl AffineRescale {
    pub const IDENTITY: Self = Self { lo: 0.0, width: 1.0 };

    /// Fits the map to the range of `values`. A degenerate range maps every
    /// sample value to `0.5`.
    pub fn fit<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() || !hi.is_finite() {
            return Self::IDENTITY;
        }
        let width = hi - lo;
        if width > 0.0 {
            Self { lo, width }
        } else {
            Self {
                lo: lo - 0.5,
                width: 1.0,
            }
        }
    }

    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        (s - self.lo) / self.width
    }
}

/// Accumulates `Σ w_i r_i r_i'` and `Σ w_i r_i y_i` for sieve least squares.
#[derive(Clone, Debug)]
pub struct GramAccumulator {
    dim: usize,
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            gram: vec![0.0; dim * dim],
            rhs: vec![0.0; dim],
        }
    }

    #[inline]
    pub fn add(&mut self, row: &[f64], response: f64) {
        let dim = self.dim;
        for i in 0..dim {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let g = &mut self.gram[i * dim..i * dim + i + 1];
            for (gij, rj) in g.iter_mut().zip(&row[..=i]) {
                *gij += ri * rj;
            }
            self.rhs[i] += ri * response;
        }
    }

    /// Solves `(G + ridge·I) π = b`.
    pub fn solve(&self, ridge: f64) -> Result<Vec<f64>> {
        let dim = self.dim;
        let mut g = self.gram.clone();
        for i in 0..dim {
            g[i * dim + i] += ridge;
        }
        cholesky_solve(&g, &self.rhs, dim)
    }
}

/// Least squares of `responses` on the basis evaluations in `rows`, restricted
/// to rows with `mask[i]`:
/// `argmin_π Σ mask_i (y_i − rows_i'π)² + ridge‖π‖²`.
pub fn sieve_ols_fit(
    basis: SieveBasis,
    rows: &Matrix,
    responses: &[f64],
    mask: &[bool],
    ridge: f64,
) -> Result<SieveCoefficients> {
    check_len("basis columns", basis.dim(), rows.cols())?;
    check_len("responses", rows.rows(), responses.len())?;
    check_len("mask", rows.rows(), mask.len())?;
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument("ridge must be nonnegative".into()));
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::InsufficientData("no rows selected for the sieve fit".into()));
    }
    let mut acc = GramAccumulator::new(basis.dim());
    for ((row, &y), &m) in rows.iter_rows().zip(responses).zip(mask) {
        if m {
            acc.add(row, y);
        }
    }
    SieveCoefficients::new(acc.solve(ridge)?, basis)
}

/// A fitted univariate sieve function of an index, `s ↦ Φ(rescale(s))'π`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnivariateSieve {
    pub coefficients: SieveCoefficients,
    pub rescale: AffineRescale,
}

impl UnivariateSieve {
    pub fn eval(&self, s: f64) -> f64 {
        let mut buf = vec![0.0; self.coefficients.basis.dim()];
        legendre_into(self.rescale.apply(s), &mut buf);
        dot(&buf, &self.coefficients.values)
    }
}

/// A fitted bivariate sieve function `(u, v) ↦ Φ(ru(u), rv(v))'Π`.
#[derive(Clone, Debug, PartialEq)]
pub struct BivariateSieve {
    pub coefficients: SieveCoefficients,
    pub u_rescale: AffineRescale,
    pub v_rescale: AffineRescale,
}

impl BivariateSieve {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let q = self.coefficients.basis.order;
        let mut scratch = vec![0.0; 2 * (q + 1)];
        let mut buf = vec![0.0; (q + 1) * (q + 1)];
        tensor_into(
            self.u_rescale.apply(u),
            self.v_rescale.apply(v),
            q,
            &mut scratch,
            &mut buf,
        );
        dot(&buf, &self.coefficients.values)
    }
}

/// AIC-type order selection: returns the candidate order minimising
/// `ln(max(σ̂²_q, floor)) + 2·k_q / effective_n`, where `k_q` is the number of
/// sieve functions of that order and `σ̂²_q` is the mean squared residual of
/// the fitted values over masked-in rows. Ties go to the smaller order.
///
/// `fitter` returns fitted values for every row; a candidate whose fit fails
/// is skipped with a warning.
pub fn select_order_aic<F>(
    kind: SieveKind,
    candidates: &[usize],
    effective_n: usize,
    responses: &[f64],
    mask: Option<&[bool]>,
    mut fitter: F,
) -> Result<usize>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate sieve orders".into()));
    }
    if effective_n == 0 {
        return Err(Error::InvalidArgument("effective sample size must be positive".into()));
    }
    let mut order_sorted = candidates.to_vec();
    order_sorted.sort_unstable();
    order_sorted.dedup();
    let mut best: Option<(f64, usize)> = None;
    for q in order_sorted {
        let fitted = match fitter(q) {
            Ok(f) if f.len() == responses.len() => f,
            Ok(f) => {
                log::warn!("sieve order {q}: fitter returned {} values, expected {}", f.len(), responses.len());
                continue;
            }
            Err(e) => {
                log::warn!("sieve order {q} skipped: {e}");
                continue;
            }
        };
        let (mut ss, mut count) = (0.0, 0usize);
        for (i, (y, f)) in responses.iter().zip(&fitted).enumerate() {
            if mask.map_or(true, |m| m[i]) {
                ss += (y - f) * (y - f);
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let sigma2 = (ss / count as f64).max(AIC_VARIANCE_FLOOR);
        let k = SieveBasis { order: q, kind }.dim() as f64;
        let crit = sigma2.ln() + 2.0 * k / effective_n as f64;
        if !crit.is_finite() {
            log::warn!("sieve order {q} skipped: criterion not finite");
            continue;
        }
        if best.map_or(true, |(c, _)| crit < c) {
            best = Some((crit, q));
        }
    }
    best.map(|(_, q)| q).ok_or(Error::NoOrderSelected)
}

/// Fits a univariate sieve of `responses` on `index` (masked rows only) with
/// the index rescaled to the range of the masked-in values.
pub fn fit_univariate(
    order: usize,
    index: &[f64],
    responses: &[f64],
    mask: Option<&[bool]>,
    ridge: f64,
) -> Result<UnivariateSieve> {
    check_len("responses", index.len(), responses.len())?;
    let keep = |i: usize| mask.map_or(true, |m| m[i]);
    let rescale = AffineRescale::fit((0..index.len()).filter(|&i| keep(i)).map(|i| index[i]));
    let basis = SieveBasis::univariate(order);
    let mut acc = GramAccumulator::new(basis.dim());
    let mut buf = vec![0.0; basis.dim()];
    let mut any = false;
    for i in (0..index.len()).filter(|&i| keep(i)) {
        legendre_into(rescale.apply(index[i]), &mut buf);
        acc.add(&buf, responses[i]);
        any = true;
    }
    if !any {
        return Err(Error::InsufficientData("no rows selected for the sieve fit".into()));
    }
    Ok(UnivariateSieve {
        coefficients: SieveCoefficients::new(acc.solve(ridge)?, basis)?,
        rescale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on
    /// the Legendre recursion; independent of `legendre_into`.
    fn gauss_legendre(npts: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; npts];
        let mut w = vec![0.0; npts];
        for i in 0..npts {
            let mut z = (core::f64::consts::PI * (i as f64 + 0.75) / (npts as f64 + 0.5)).cos();
            loop {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 0..npts {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
                }
                let pp = npts as f64 * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() < 1e-15 {
                    x[i] = z;
                    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
                    break;
                }
            }
        }
        (x, w)
    }

    #[test]
    fn constant_and_midpoint_values() {
        assert_eq!(legendre_univariate(0.37, 0), vec![1.0]);
        let v = legendre_univariate(0.5, 1);
        assert_eq!(v[0], 1.0);
        assert!(v[1].abs() < 1e-15);
        let v = legendre_univariate(1.0, 1);
        assert!((v[1] - 3.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let (x, w) = gauss_legendre(64);
        let q = 5;
        let mut gram = [[0.0; 6]; 6];
        for (xi, wi) in x.iter().zip(&w) {
            let u = 0.5 * (xi + 1.0);
            let p = legendre_univariate(u, q);
            for j in 0..=q {
                for k in 0..=q {
                    gram[j][k] += 0.5 * wi * p[j] * p[k];
                }
            }
        }
        for j in 0..=q {
            for k in 0..=q {
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((gram[j][k] - target).abs() < 1e-10, "({j},{k}) = {}", gram[j][k]);
            }
        }
    }

    #[test]
    fn sample_gram_approaches_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = 4;
        let n = 100_000;
        let mut acc = GramAccumulator::new(q + 1);
        let mut buf = vec![0.0; q + 1];
        for _ in 0..n {
            legendre_into(rng.random::<f64>(), &mut buf);
            acc.add(&buf, 0.0);
        }
        for j in 0..=q {
            for k in 0..=j {
                let g = acc.gram[j * (q + 1) + k] / n as f64;
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((g - target).abs() < 2e-2);
            }
        }
    }

    #[test]
    fn inputs_are_clamped() {
        assert_eq!(legendre_univariate(-3.0, 3), legendre_univariate(0.0, 3));
        assert_eq!(legendre_univariate(7.0, 3), legendre_univariate(1.0, 3));
    }

    #[test]
    fn tensor_layout() {
        assert_eq!(tensor_bivariate(0.2, 0.9, 0), vec![1.0]);
        let t = tensor_bivariate(0.5, 0.5, 1);
        assert_eq!(t[0], 1.0);
        assert!(t[1..].iter().all(|v| v.abs() < 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let q = 3;
            let t = tensor_bivariate(u, v, q);
            let (pu, pv) = (legendre_univariate(u, q), legendre_univariate(v, q));
            assert_eq!(t.len(), 16);
            for s in 0..=q {
                for r in 0..=q {
                    assert_eq!(t[tensor_flat_index(s, r, q)], pu[s] * pv[r]);
                }
            }
        }
        for q in 0..6 {
            for f in 0..(q + 1) * (q + 1) {
                let (s, t) = tensor_pair(f, q);
                assert_eq!(tensor_flat_index(s, t, q), f);
            }
        }
    }

    #[test]
    fn ols_constant_basis_gives_mean() {
        let rows = Matrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let fit = sieve_ols_fit(SieveBasis::univariate(0), &rows, &[0.0, 1.0, 1.0], &[true; 3], 0.0).unwrap();
        assert!((fit.values[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ols_recovers_exact_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = SieveBasis::univariate(3);
        let truth = [0.3, -1.2, 0.8, 0.05];
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..30 {
            let r = legendre_univariate(rng.random(), 3);
            y.push(dot(&r, &truth));
            data.extend(r);
        }
        let rows = Matrix::from_row_major(30, 4, data).unwrap();
        let fit = sieve_ols_fit(basis, &rows, &y, &[true; 30], 0.0).unwrap();
        for (a, b) in fit.values.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ols_singular_without_ridge() {
        let rows = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        let err = sieve_ols_fit(SieveBasis::univariate(1), &rows, &[1.0, 2.0, 3.0], &[true; 3], 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular { dimension: 1 }));
        assert!(sieve_ols_fit(SieveBasis::univariate(1), &rows, &[1.0, 2.0, 3.0], &[true; 3], 1e-6).is_ok());
        assert!(matches!(
            sieve_ols_fit(SieveBasis::univariate(1), &rows, &[1.0, 2.0, 3.0], &[false; 3], 0.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn aic_tie_prefers_smaller_order() {
        let y = [0.0, 1.0, 0.0, 1.0];
        let q = select_order_aic(SieveKind::Univariate, &[3, 1], 4, &y, None, |_| Ok(vec![0.5; 4])).unwrap();
        assert_eq!(q, 1);
    }

    #[test]
    fn aic_floors_zero_variance() {
        let y = [0.25, 0.5];
        // perfect fit at order 2 still competes through the floor, not -inf
        let q = select_order_aic(SieveKind::Univariate, &[0, 2], 2, &y, None, |q| {
            Ok(if q == 2 { y.to_vec() } else { vec![0.375; 2] })
        })
        .unwrap();
        let crit2 = AIC_VARIANCE_FLOOR.ln() + 2.0 * 3.0 / 2.0;
        assert!(crit2.is_finite());
        assert_eq!(q, 2);
    }

    #[test]
    fn aic_skips_failures_and_errors_when_all_fail() {
        let y = [0.0, 1.0];
        let q = select_order_aic(SieveKind::Tensor, &[0, 1], 2, &y, None, |q| {
            if q == 0 {
                Err(Error::Singular { dimension: 0 })
            } else {
                Ok(vec![0.5; 2])
            }
        })
        .unwrap();
        assert_eq!(q, 1);
        let err = select_order_aic(SieveKind::Tensor, &[0, 1], 2, &y, None, |_| {
            Err(Error::Singular { dimension: 0 })
        })
        .unwrap_err();
        assert!(matches!(err, Error::NoOrderSelected));
    }

    #[test]
    fn rescale_handles_degenerate_range() {
        let r = AffineRescale::fit([2.0, 2.0]);
        assert_eq!(r.apply(2.0), 0.5);
        let r = AffineRescale::fit([1.0, 3.0, 2.0]);
        assert_eq!(r.apply(1.0), 0.0);
        assert_eq!(r.apply(3.0), 1.0);
    }
}
