//! The two constrained convex subproblems behind every dictionary update:
//! nonnegative L1-penalized least squares (sparse coding) and the
//! nonnegativity-constrained quadratic program that refits the dictionary
//! against the aggregate statistics.
//!
//! Both solvers are cyclic coordinate / block-coordinate descent with exact
//! per-block minimization, a fixed ascending sweep order, and no internal
//! randomness, so repeated calls with the same inputs are bit-identical.
//! Non-convergence is reported as a status on the returned iterate, never as
//! a hard failure.

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3};

use crate::tensor::{fold_mode3, mode3_unfold};
use crate::{Error, Result};

/// Diagonal floor below which a dictionary column is considered unused by
/// the recent data and left at its previous value.
pub const DEAD_ATOM_FLOOR: f64 = 1e-12;

/// Iteration limits and bounds shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverOptions {
    /// Maximum number of full sweeps.
    pub max_iterations: usize,
    /// Stop when the relative objective decrease per sweep falls below this.
    pub tolerance: f64,
    /// Elementwise upper bound for dictionary entries.
    pub elementwise_cap: f64,
}

impl SolverOptions {
    /// Defaults for sparse coding: 200 sweeps, 1e-6 relative tolerance.
    pub fn sparse_coding(elementwise_cap: f64) -> Self {
        Self { max_iterations: 200, tolerance: 1e-6, elementwise_cap }
    }

    /// Defaults for the dictionary update: 50 sweeps, 1e-6 relative tolerance.
    pub fn dictionary(elementwise_cap: f64) -> Self {
        Self { max_iterations: 50, tolerance: 1e-6, elementwise_cap }
    }

    /// Check the option invariants.
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("solver.max_iterations", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance", "must be positive"));
        }
        if !(self.elementwise_cap > 0.0) {
            return Err(Error::config("solver.elementwise_cap", "must be positive"));
        }
        Ok(())
    }
}

/// Outcome of an iterative solve. Carried alongside the iterate so callers
/// can log non-convergence without losing the result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStatus {
    /// Whether every column met the tolerance within the sweep budget.
    pub converged: bool,
    /// Largest number of sweeps used by any column.
    pub sweeps: usize,
    /// Final relative objective decrease observed (largest over columns).
    pub last_decrease: f64,
    /// Largest objective increase between consecutive sweeps; nonpositive
    /// up to rounding for an exact block-minimization scheme.
    pub max_sweep_increase: f64,
}

impl SolveStatus {
    fn new() -> Self {
        Self { converged: true, sweeps: 0, last_decrease: 0.0, max_sweep_increase: f64::NEG_INFINITY }
    }

    fn merge(&mut self, other: &SolveStatus) {
        self.converged &= other.converged;
        self.sweeps = self.sweeps.max(other.sweeps);
        self.last_decrease = self.last_decrease.max(other.last_decrease);
        self.max_sweep_increase = self.max_sweep_increase.max(other.max_sweep_increase);
    }
}

/// Sparse codes together with the solve status.
#[derive(Debug, Clone)]
pub struct CodingResult {
    /// The `r x m` nonnegative code matrix.
    pub codes: Array2<f64>,
    /// Convergence report.
    pub status: SolveStatus,
}

/// Updated dictionary together with the solve status.
#[derive(Debug, Clone)]
pub struct DictionaryUpdate {
    /// The `d x k x r` nonnegative dictionary tensor.
    pub values: Array3<f64>,
    /// Convergence report.
    pub status: SolveStatus,
}

/// Value of the sparse-coding objective `||X - WH||_F^2 + lambda * sum(H)`.
pub fn coding_objective(
    x: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    lambda: f64,
) -> f64 {
    let residual = &x.to_owned() - &w.dot(&h);
    residual.iter().map(|v| v * v).sum::<f64>() + lambda * h.sum()
}

/// Value of the dictionary surrogate `tr(V A V^T) - 2 tr(B V)` for the
/// unfolded dictionary `V`.
pub fn dictionary_objective(
    v: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) -> f64 {
    let va = v.dot(&a);
    let quad: f64 = va.iter().zip(v.iter()).map(|(p, q)| p * q).sum();
    let lin: f64 = b.dot(&v).diag().sum();
    quad - 2.0 * lin
}

/// Solve `min_{H >= 0} ||X - WH||_F^2 + lambda ||H||_1` by cyclic coordinate
/// descent with nonnegative soft-thresholding.
///
/// Columns are independent and solved one at a time in order. Exceeding the
/// sweep budget is reported in the status, not as an error.
pub fn nonneg_lasso(
    x: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<CodingResult> {
    opts.validate()?;
    if lambda < 0.0 {
        return Err(Error::config("lambda", "must be nonnegative"));
    }
    let (n, m) = x.dim();
    let (wn, r) = w.dim();
    if wn != n {
        return Err(Error::dims("nonneg_lasso", format!("{n} rows in W"), format!("{wn} rows")));
    }

    // Gram matrix and correlations; each coordinate update is then O(r).
    let gram = w.t().dot(&w);
    let corr = w.t().dot(&x);

    let mut codes = Array2::zeros((r, m));
    let mut status = SolveStatus::new();
    for col in 0..m {
        let xsq: f64 = x.column(col).iter().map(|v| v * v).sum();
        let col_status = solve_column(
            &gram,
            &corr.column(col).to_owned(),
            xsq,
            lambda,
            opts,
            &mut codes.column_mut(col),
        );
        status.merge(&col_status);
    }
    if m == 0 {
        status.max_sweep_increase = 0.0;
    }
    Ok(CodingResult { codes, status })
}

/// Coordinate descent on a single column. `corr = W^T x`, `xsq = ||x||^2`.
fn solve_column(
    gram: &Array2<f64>,
    corr: &Array1<f64>,
    xsq: f64,
    lambda: f64,
    opts: &SolverOptions,
    h: &mut ndarray::ArrayViewMut1<'_, f64>,
) -> SolveStatus {
    let r = corr.len();
    let half_lambda = lambda / 2.0;
    // grad_part = G h, maintained incrementally.
    let mut gh = Array1::<f64>::zeros(r);
    let objective = |h: &ndarray::ArrayViewMut1<'_, f64>, gh: &Array1<f64>| -> f64 {
        let mut f = xsq + lambda * h.sum();
        for j in 0..r {
            f += h[j] * (gh[j] - 2.0 * corr[j]);
        }
        f
    };

    let mut status = SolveStatus::new();
    let mut prev = objective(h, &gh);
    for sweep in 1..=opts.max_iterations {
        for j in 0..r {
            let denom = gram[(j, j)];
            let new = if denom <= DEAD_ATOM_FLOOR {
                // Zero atom: the objective is linear in h_j with slope
                // lambda >= 0, so the minimizer is 0.
                0.0
            } else {
                (h[j] + (corr[j] - gh[j] - half_lambda) / denom).max(0.0)
            };
            let delta = new - h[j];
            if delta != 0.0 {
                for l in 0..r {
                    gh[l] += gram[(l, j)] * delta;
                }
                h[j] = new;
            }
        }
        let current = objective(h, &gh);
        let decrease = prev - current;
        status.sweeps = sweep;
        status.last_decrease = decrease.abs() / prev.abs().max(1.0);
        status.max_sweep_increase = status.max_sweep_increase.max(-decrease);
        if decrease.abs() <= opts.tolerance * prev.abs().max(1.0) {
            break;
        }
        prev = current;
        if sweep == opts.max_iterations {
            status.converged = false;
        }
    }
    status
}

/// Solve `min_{0 <= W <= cap} tr(W^(3) A (W^(3))^T) - 2 tr(B W^(3))` by
/// cyclic block coordinate descent over the columns of the unfolded
/// dictionary, warm-started at `w_prev`.
///
/// Each column update is an exact box-constrained minimization, so the
/// surrogate objective is non-increasing across sweeps. Columns whose
/// aggregate weight `A[j, j]` falls below [`DEAD_ATOM_FLOOR`] are kept at
/// their previous value.
pub fn dictionary_update(
    w_prev: ArrayView3<'_, f64>,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    opts: &SolverOptions,
) -> Result<DictionaryUpdate> {
    opts.validate()?;
    let (d, k, r) = w_prev.dim();
    let dk = d * k;
    if a.dim() != (r, r) {
        return Err(Error::dims("dictionary_update A", format!("{r} x {r}"), format!("{:?}", a.dim())));
    }
    if b.dim() != (r, dk) {
        return Err(Error::dims("dictionary_update B", format!("{r} x {dk}"), format!("{:?}", b.dim())));
    }
    debug_assert!(
        a.indexed_iter().all(|((i, j), &v)| (v - a[(j, i)]).abs() <= 1e-8 * v.abs().max(1.0)),
        "A must be symmetric"
    );

    let cap = opts.elementwise_cap;
    let mut v = mode3_unfold(w_prev);
    let mut status = SolveStatus::new();
    let mut prev = dictionary_objective(v.view(), a, b);
    for sweep in 1..=opts.max_iterations {
        for j in 0..r {
            let ajj = a[(j, j)];
            if ajj <= DEAD_ATOM_FLOOR {
                continue;
            }
            // Exact minimization of the separable quadratic in column j,
            // projected onto [0, cap].
            let va_j = v.dot(&a.column(j));
            for p in 0..dk {
                let unconstrained = v[(p, j)] + (b[(j, p)] - va_j[p]) / ajj;
                v[(p, j)] = unconstrained.clamp(0.0, cap);
            }
        }
        let current = dictionary_objective(v.view(), a, b);
        let decrease = prev - current;
        status.sweeps = sweep;
        status.last_decrease = decrease.abs() / prev.abs().max(1.0);
        status.max_sweep_increase = status.max_sweep_increase.max(-decrease);
        if decrease.abs() <= opts.tolerance * prev.abs().max(1.0) {
            break;
        }
        prev = current;
        if sweep == opts.max_iterations {
            status.converged = false;
        }
    }

    let values = fold_mode3(v.view(), d, k)?;
    Ok(DictionaryUpdate { values, status })
}
