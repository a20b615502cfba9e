//! Observed sample and the two linear indices of the selection and outcome
//! equations.

use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, Matrix};

/// Observed sample `{z0_i, Z_i, x0_i, X_i, D_i, Y_i}`.
///
/// `z0` and `x0` are the regressors whose coefficients are normalised to one.
/// `y[i]` is `Some` exactly when `d[i]` is true; the constructor enforces this
/// and every other shape invariant, so estimators never re-validate.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    z0: Vec<f64>,
    z: Matrix,
    x0: Vec<f64>,
    x: Matrix,
    d: Vec<bool>,
    y: Vec<Option<bool>>,
    selected: usize,
}

impl Dataset {
    pub fn new(
        z0: Vec<f64>,
        z: Matrix,
        x0: Vec<f64>,
        x: Matrix,
        d: Vec<bool>,
        y: Vec<Option<bool>>,
    ) -> Result<Self> {
        let n = z0.len();
        if n == 0 {
            return Err(Error::InsufficientData("dataset has no rows".into()));
        }
        check_len("z rows", n, z.rows())?;
        check_len("x0 length", n, x0.len())?;
        check_len("x rows", n, x.rows())?;
        check_len("d length", n, d.len())?;
        check_len("y length", n, y.len())?;
        for (i, (&di, yi)) in d.iter().zip(&y).enumerate() {
            if di != yi.is_some() {
                let reason = if di {
                    "outcome missing for a selected row"
                } else {
                    "outcome present for an unselected row"
                };
                return Err(Error::InvalidData {
                    row: i,
                    reason: reason.into(),
                });
            }
        }
        let finite = |v: &[f64]| v.iter().position(|x| !x.is_finite());
        let bad = finite(&z0)
            .or_else(|| finite(&x0))
            .or_else(|| finite(z.as_slice()).map(|k| k / z.cols().max(1)))
            .or_else(|| finite(x.as_slice()).map(|k| k / x.cols().max(1)));
        if let Some(row) = bad {
            return Err(Error::InvalidData {
                row,
                reason: "non-finite regressor".into(),
            });
        }
        let selected = d.iter().filter(|&&b| b).count();
        Ok(Self {
            z0,
            z,
            x0,
            x,
            d,
            y,
            selected,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.z0.len()
    }

    /// Number of free selection regressors `p_Z`.
    #[inline]
    pub fn p_z(&self) -> usize {
        self.z.cols()
    }

    /// Number of free outcome regressors `p_X`.
    #[inline]
    pub fn p_x(&self) -> usize {
        self.x.cols()
    }

    /// `S_n = Σ D_i`.
    #[inline]
    pub fn selected_count(&self) -> usize {
        self.selected
    }

    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    pub fn y(&self) -> &[Option<bool>] {
        &self.y
    }

    /// `D_i` as 0/1.
    pub fn d_f64(&self) -> Vec<f64> {
        self.d.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// `D_i Y_i` as 0/1 (zero where unobserved).
    pub fn dy_f64(&self) -> Vec<f64> {
        self.y
            .iter()
            .map(|y| if *y == Some(true) { 1.0 } else { 0.0 })
            .collect()
    }

    /// Indices of rows with `D_i = 1`, ascending.
    pub fn selected_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.d[i]).collect()
    }
}

/// Coefficients `(δ, β)` of the free regressors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterPoint {
    pub delta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ParameterPoint {
    pub fn new(delta: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if delta.iter().chain(&beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("parameter entries must be finite".into()));
        }
        Ok(Self { delta, beta })
    }

    pub fn zeros(p_z: usize, p_x: usize) -> Self {
        Self {
            delta: alloc::vec![0.0; p_z],
            beta: alloc::vec![0.0; p_x],
        }
    }

    pub fn check_conformable(&self, data: &Dataset) -> Result<()> {
        check_len("delta", data.p_z(), self.delta.len())?;
        check_len("beta", data.p_x(), self.beta.len())
    }
}

/// Location of one observation in the two-index plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexPair {
    /// `z0 + Z'δ`.
    pub z_index: f64,
    /// `x0 + X'β`.
    pub x_index: f64,
}

fn linear_index(offset: &[f64], regressors: &Matrix, coef: &[f64], what: &'static str) -> Result<Vec<f64>> {
    check_len(what, regressors.cols(), coef.len())?;
    Ok(offset
        .iter()
        .zip(regressors.iter_rows().chain(core::iter::repeat(&[][..])))
        .map(|(o, row)| o + dot(row, coef))
        .collect())
}

/// `z0 + Z·δ`.
pub fn selection_index(data: &Dataset, delta: &[f64]) -> Result<Vec<f64>> {
    linear_index(&data.z0, &data.z, delta, "delta")
}

/// `x0 + X·β`.
pub fn outcome_index(data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    linear_index(&data.x0, &data.x, beta, "beta")
}

pub fn index_pairs(z_index: &[f64], x_index: &[f64]) -> Vec<IndexPair> {
    z_index
        .iter()
        .zip(x_index)
        .map(|(&z, &x)| IndexPair {
            z_index: z,
            x_index: x,
        })
        .collect()
}
