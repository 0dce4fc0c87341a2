//! ARX input-output models and their block observable canonical form.
//!
//! The model relates the current output to `n_hat` past outputs and inputs,
//!
//! ```text
//! y_k = -F_1 y_{k-1} - ... - F_n y_{k-n} + G_1 u_{k-1} + ... + G_n u_{k-n}
//! ```
//!
//! with `F_i` of size `p x p` and `G_i` of size `p x m`. The coefficients are
//! stacked column-major into a single vector `theta = [vec(F_1 .. F_n); vec(G_1 .. G_n)]`
//! so that the prediction is linear in `theta` through a regressor matrix
//! built with a Kronecker product.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, PcacError, Result};

/// Model order and signal dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Model order (number of past samples in the ARX recursion).
    pub n_hat: usize,
    /// Output dimension.
    pub p: usize,
    /// Input dimension.
    pub m: usize,
}

impl ModelDims {
    pub fn new(n_hat: usize, p: usize, m: usize) -> Result<Self> {
        if n_hat == 0 || p == 0 || m == 0 {
            return Err(PcacError::InvalidConfig(format!(
                "model dimensions must be positive (n_hat={n_hat}, p={p}, m={m})"
            )));
        }
        Ok(Self { n_hat, p, m })
    }

    /// Single-input single-output model of order `n_hat`.
    pub fn siso(n_hat: usize) -> Result<Self> {
        Self::new(n_hat, 1, 1)
    }

    /// Length of the coefficient vector, `n_hat * p * (m + p)`.
    pub fn n_params(&self) -> usize {
        self.n_hat * self.p * (self.m + self.p)
    }

    /// Dimension of the BOCF state, `n_hat * p`.
    pub fn state_dim(&self) -> usize {
        self.n_hat * self.p
    }

    fn f_offset(&self, i: usize) -> usize {
        (i - 1) * self.p * self.p
    }

    fn g_offset(&self, i: usize) -> usize {
        self.n_hat * self.p * self.p + (i - 1) * self.p * self.m
    }
}

/// Stacked ARX coefficient estimate `[vec(F_1 .. F_n); vec(G_1 .. G_n)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxParameterVector {
    dims: ModelDims,
    theta: DVector<f64>,
}

impl ArxParameterVector {
    pub fn new(dims: ModelDims, theta: DVector<f64>) -> Result<Self> {
        check_len("parameter vector", dims.n_params(), theta.len())?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(PcacError::InvalidConfig(
                "parameter vector has non-finite entries".into(),
            ));
        }
        Ok(Self { dims, theta })
    }

    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            theta: DVector::zeros(dims.n_params()),
        }
    }

    pub fn from_element(dims: ModelDims, value: f64) -> Self {
        Self {
            dims,
            theta: DVector::from_element(dims.n_params(), value),
        }
    }

    /// Builds the vector from explicit coefficient matrices.
    pub fn from_matrices(dims: ModelDims, f: &[DMatrix<f64>], g: &[DMatrix<f64>]) -> Result<Self> {
        check_len("F coefficient count", dims.n_hat, f.len())?;
        check_len("G coefficient count", dims.n_hat, g.len())?;
        let mut theta = DVector::zeros(dims.n_params());
        for (idx, (fi, gi)) in f.iter().zip(g).enumerate() {
            let i = idx + 1;
            check_len("F rows", dims.p, fi.nrows())?;
            check_len("F cols", dims.p, fi.ncols())?;
            check_len("G rows", dims.p, gi.nrows())?;
            check_len("G cols", dims.m, gi.ncols())?;
            let fo = dims.f_offset(i);
            theta
                .rows_mut(fo, dims.p * dims.p)
                .copy_from_slice(fi.as_slice());
            let go = dims.g_offset(i);
            theta
                .rows_mut(go, dims.p * dims.m)
                .copy_from_slice(gi.as_slice());
        }
        Self::new(dims, theta)
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.theta
    }

    /// `F_i` for `i` in `1..=n_hat`.
    pub fn f(&self, i: usize) -> DMatrix<f64> {
        let d = self.dims;
        let off = d.f_offset(i);
        DMatrix::from_column_slice(d.p, d.p, &self.theta.as_slice()[off..off + d.p * d.p])
    }

    /// `G_i` for `i` in `1..=n_hat`.
    pub fn g(&self, i: usize) -> DMatrix<f64> {
        let d = self.dims;
        let off = d.g_offset(i);
        DMatrix::from_column_slice(d.p, d.m, &self.theta.as_slice()[off..off + d.p * d.m])
    }

    /// The `F` half of the vector.
    pub fn theta_f(&self) -> &[f64] {
        &self.theta.as_slice()[..self.dims.n_hat * self.dims.p * self.dims.p]
    }

    /// The `G` half of the vector.
    pub fn theta_g(&self) -> &[f64] {
        &self.theta.as_slice()[self.dims.n_hat * self.dims.p * self.dims.p..]
    }
}

/// Past outputs and inputs, most recent first. Pre-start samples are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IoHistory {
    dims: ModelDims,
    y: VecDeque<DVector<f64>>,
    u: VecDeque<DVector<f64>>,
}

impl IoHistory {
    pub fn new(dims: ModelDims) -> Self {
        Self {
            dims,
            y: (0..dims.n_hat).map(|_| DVector::zeros(dims.p)).collect(),
            u: (0..dims.n_hat).map(|_| DVector::zeros(dims.m)).collect(),
        }
    }

    /// Builds a history from explicit samples, `ys[0] = y_{k-1}`, `us[0] = u_{k-1}`.
    pub fn from_samples(dims: ModelDims, ys: &[DVector<f64>], us: &[DVector<f64>]) -> Result<Self> {
        check_len("output history length", dims.n_hat, ys.len())?;
        check_len("input history length", dims.n_hat, us.len())?;
        for y in ys {
            check_len("output sample", dims.p, y.len())?;
        }
        for u in us {
            check_len("input sample", dims.m, u.len())?;
        }
        Ok(Self {
            dims,
            y: ys.iter().cloned().collect(),
            u: us.iter().cloned().collect(),
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    /// `y_{k-i}` for `i` in `1..=n_hat`.
    pub fn y(&self, i: usize) -> &DVector<f64> {
        &self.y[i - 1]
    }

    /// `u_{k-i}` for `i` in `1..=n_hat`.
    pub fn u(&self, i: usize) -> &DVector<f64> {
        &self.u[i - 1]
    }

    /// Shifts in the sample pair `(y_k, u_k)`; the oldest pair drops out.
    pub fn push(&mut self, y: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        check_len("output sample", self.dims.p, y.len())?;
        check_len("input sample", self.dims.m, u.len())?;
        self.y.pop_back();
        self.u.pop_back();
        self.y.push_front(y.clone());
        self.u.push_front(u.clone());
        Ok(())
    }
}

/// Regressor `phi_k = [-y_{k-1}' .. -y_{k-n}' u_{k-1}' .. u_{k-n}'] (x) I_p`.
pub fn build_regressor(history: &IoHistory, dims: ModelDims) -> Result<DMatrix<f64>> {
    if history.dims != dims {
        return Err(PcacError::DimensionMismatch {
            what: "history model order",
            expected: dims.n_hat,
            got: history.dims.n_hat,
        });
    }
    let p = dims.p;
    let mut row = Vec::with_capacity(dims.n_hat * (dims.p + dims.m));
    for i in 1..=dims.n_hat {
        row.extend(history.y(i).iter().map(|v| -v));
    }
    for i in 1..=dims.n_hat {
        row.extend(history.u(i).iter().copied());
    }
    let mut phi = DMatrix::zeros(p, dims.n_params());
    for (j, w) in row.iter().enumerate() {
        for r in 0..p {
            phi[(r, j * p + r)] = *w;
        }
    }
    Ok(phi)
}

/// One-step prediction `y_hat = phi * theta`.
pub fn predict_output(theta: &ArxParameterVector, phi: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_len("regressor columns", theta.theta.len(), phi.ncols())?;
    check_len("regressor rows", theta.dims.p, phi.nrows())?;
    Ok(phi * &theta.theta)
}

/// State-space matrices of the block observable canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct BocfRealization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Assembles `(A, B, C)` from the coefficient estimate.
///
/// `A` carries `-F_i` in its first block column and identity blocks on the
/// block super-diagonal, `B` stacks the `G_i`, and `C = [I_p 0 .. 0]`.
pub fn assemble_bocf(theta_next: &ArxParameterVector, dims: ModelDims) -> Result<BocfRealization> {
    if theta_next.dims != dims {
        return Err(PcacError::DimensionMismatch {
            what: "parameter vector",
            expected: dims.n_params(),
            got: theta_next.theta.len(),
        });
    }
    let (n, p, m) = (dims.n_hat, dims.p, dims.m);
    let nx = n * p;
    let mut a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, m);
    for i in 1..=n {
        let row = (i - 1) * p;
        a.view_mut((row, 0), (p, p)).copy_from(&(-theta_next.f(i)));
        b.view_mut((row, 0), (p, m)).copy_from(&theta_next.g(i));
        if i < n {
            for d in 0..p {
                a[(row + d, row + p + d)] = 1.0;
            }
        }
    }
    let mut c = DMatrix::zeros(p, nx);
    for d in 0..p {
        c[(d, d)] = 1.0;
    }
    Ok(BocfRealization { a, b, c })
}

/// Explicit BOCF state at step `k` from the measurement `y_k`, the history
/// through `k-1`, and the updated coefficients.
pub fn compute_bocf_state(
    history: &IoHistory,
    y_now: &DVector<f64>,
    theta_next: &ArxParameterVector,
) -> Result<DVector<f64>> {
    let dims = theta_next.dims;
    if history.dims != dims {
        return Err(PcacError::DimensionMismatch {
            what: "history model order",
            expected: dims.n_hat,
            got: history.dims.n_hat,
        });
    }
    check_len("current output", dims.p, y_now.len())?;
    let (n, p) = (dims.n_hat, dims.p);
    let mut x = DVector::zeros(n * p);
    x.rows_mut(0, p).copy_from(y_now);
    for j in 2..=n {
        let mut block = DVector::zeros(p);
        for i in 1..=(n - j + 1) {
            block -= theta_next.f(i + j - 1) * history.y(i);
            block += theta_next.g(i + j - 1) * history.u(i);
        }
        x.rows_mut((j - 1) * p, p).copy_from(&block);
    }
    Ok(x)
}
