//! Panel and tensor containers, the Hankel embedding, and the mode-3
//! unfolding convention shared by every other module.
//!
//! All tensors here are dense 3-mode arrays indexed `[row, time, window]`
//! for data (`d x k x m`) or `[row, time, atom]` for dictionaries
//! (`d x k x r`). The mode-3 unfolding vectorizes each `d x k` slab into a
//! column of length `d*k` with the row index `i` outer and the time index
//! `a` inner, i.e. unfolded row `i * k + a`. Folding is its exact inverse.
//! Every solver and the partial-fitting predictor rely on this one
//! convention; nothing else in the crate vectorizes slabs by hand.

use chrono::NaiveDate;
use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3};
use rand::Rng;

use crate::{Error, Result};

/// Identifies one row of a panel: an observed entity and the kind of count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SeriesLabel {
    /// Observed entity (a country in the bundled data).
    pub entity: String,
    /// Kind of count carried by the row, e.g. `confirmed`.
    pub case_type: String,
}

impl SeriesLabel {
    /// Build a label from anything string-like.
    pub fn new(entity: impl Into<String>, case_type: impl Into<String>) -> Self {
        Self { entity: entity.into(), case_type: case_type.into() }
    }
}

/// A labeled `d x T` matrix of nonnegative observations, one row per
/// (entity, case type) pair and one column per day.
#[derive(Debug, Clone)]
pub struct TimeSeriesPanel {
    values: Array2<f64>,
    row_labels: Vec<SeriesLabel>,
    t0: NaiveDate,
}

impl TimeSeriesPanel {
    /// Validate and wrap a matrix of observations.
    ///
    /// Entries must be finite and nonnegative; `row_labels` must have one
    /// unique label per row.
    pub fn new(values: Array2<f64>, row_labels: Vec<SeriesLabel>, t0: NaiveDate) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyPanel("panel must have at least one row and one column"));
        }
        check_nonneg(&values.view(), "panel values")?;
        if row_labels.len() != values.nrows() {
            return Err(Error::InvalidLabels(format!(
                "{} labels for {} rows",
                row_labels.len(),
                values.nrows()
            )));
        }
        for (i, a) in row_labels.iter().enumerate() {
            for b in &row_labels[i + 1..] {
                if a == b {
                    return Err(Error::InvalidLabels(format!(
                        "duplicate label ({}, {})",
                        a.entity, a.case_type
                    )));
                }
            }
        }
        Ok(Self { values, row_labels, t0 })
    }

    /// Wrap a bare matrix with generated labels, for synthetic data.
    pub fn synthetic(values: Array2<f64>) -> Result<Self> {
        let labels =
            (0..values.nrows()).map(|i| SeriesLabel::new(format!("series_{i}"), "value")).collect();
        Self::new(values, labels, NaiveDate::from_ymd_opt(2020, 1, 1).unwrap())
    }

    /// Number of rows `d`.
    pub fn num_series(&self) -> usize {
        self.values.nrows()
    }

    /// Number of observed days `T`.
    pub fn num_days(&self) -> usize {
        self.values.ncols()
    }

    /// The underlying `d x T` matrix.
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Row labels, one per row in order.
    pub fn row_labels(&self) -> &[SeriesLabel] {
        &self.row_labels
    }

    /// Calendar date of column 0.
    pub fn t0(&self) -> NaiveDate {
        self.t0
    }

    /// View of the columns `start..=end`.
    pub fn segment(&self, start: usize, end: usize) -> ArrayView2<'_, f64> {
        self.values.slice(ndarray::s![.., start..=end])
    }

    /// Replace the values while keeping labels and dates, revalidating.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::new(values, self.row_labels.clone(), self.t0)
    }
}

/// Sliding-window embedding of a panel segment: a `d x k x m` tensor whose
/// slice `i` is the `k x m` Hankel matrix of row `i` of the segment,
/// `m = N_eff - k + 1`.
#[derive(Debug, Clone)]
pub struct HankelTensor {
    values: Array3<f64>,
    window: usize,
    source_len: usize,
}

impl HankelTensor {
    /// Number of rows `d`.
    pub fn num_rows(&self) -> usize {
        self.values.shape()[0]
    }

    /// Window length `k`.
    pub fn window(&self) -> usize {
        self.window
    }

    /// Number of windows `m`.
    pub fn num_windows(&self) -> usize {
        self.values.shape()[2]
    }

    /// Number of source columns `N_eff` the embedding was built from.
    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// The underlying `d x k x m` tensor.
    pub fn values(&self) -> ArrayView3<'_, f64> {
        self.values.view()
    }

    /// Mode-3 unfolding as a `dk x m` matrix.
    pub fn unfold(&self) -> Array2<f64> {
        mode3_unfold(self.values.view())
    }
}

/// Embed a `d x N_eff` segment as a `d x k x (N_eff - k + 1)` Hankel tensor.
///
/// Entry `[i, a, b]` equals `segment[i, b + a]`, so each slice is constant
/// along its anti-diagonals.
pub fn hankel_embed(segment: ArrayView2<'_, f64>, window: usize) -> Result<HankelTensor> {
    if window == 0 {
        return Err(Error::ZeroWindow);
    }
    let (d, n_eff) = segment.dim();
    if window > n_eff {
        return Err(Error::WindowTooLong { window, available: n_eff });
    }
    check_nonneg(&segment, "hankel segment")?;
    let m = n_eff - window + 1;
    let values =
        Array3::from_shape_fn((d, window, m), |(i, a, b)| segment[(i, b + a)]);
    Ok(HankelTensor { values, window, source_len: n_eff })
}

/// Mode-3 unfolding of a `d x k x m` tensor into a `dk x m` matrix.
///
/// Column `b` is the vectorization of slab `[:, :, b]` with unfolded row
/// `i * k + a` (row index outer, time index inner).
pub fn mode3_unfold(tensor: ArrayView3<'_, f64>) -> Array2<f64> {
    let (d, k, m) = tensor.dim();
    Array2::from_shape_fn((d * k, m), |(row, b)| tensor[(row / k, row % k, b)])
}

/// Exact inverse of [`mode3_unfold`]: reshape a `dk x m` matrix back into a
/// `d x k x m` tensor.
pub fn fold_mode3(matrix: ArrayView2<'_, f64>, d: usize, k: usize) -> Result<Array3<f64>> {
    let (rows, m) = matrix.dim();
    if rows != d * k {
        return Err(Error::dims("fold_mode3", format!("{} rows (d*k)", d * k), format!("{rows} rows")));
    }
    Ok(Array3::from_shape_fn((d, k, m), |(i, a, b)| matrix[(i * k + a, b)]))
}

/// A `d x k x r` nonnegative dictionary of k-step joint evolution patterns,
/// one atom per mode-3 index, plus the per-atom importance accumulator of
/// sparse-code row sums.
#[derive(Debug, Clone)]
pub struct DictionaryTensor {
    values: Array3<f64>,
    importance: Array1<f64>,
}

impl DictionaryTensor {
    /// Validate and wrap a `d x k x r` tensor with a zeroed accumulator.
    pub fn new(values: Array3<f64>) -> Result<Self> {
        let (d, k, r) = values.dim();
        if d == 0 || k == 0 || r == 0 {
            return Err(Error::dims("dictionary", "nonzero d, k, r", format!("{d} x {k} x {r}")));
        }
        for ((i, a, j), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { what: "dictionary", row: i * k + a, col: j });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry { what: "dictionary", row: i * k + a, col: j, value: v });
            }
        }
        let importance = Array1::zeros(r);
        Ok(Self { values, importance })
    }

    /// Fresh dictionary with i.i.d. Uniform(0, 1) entries drawn in row-major
    /// `(row, time, atom)` order from `rng`.
    pub fn random(d: usize, k: usize, r: usize, rng: &mut impl Rng) -> Self {
        let data: Vec<f64> = (0..d * k * r).map(|_| rng.gen_range(0.0..1.0)).collect();
        let values = Array3::from_shape_vec((d, k, r), data).expect("shape matches data length");
        Self { values, importance: Array1::zeros(r) }
    }

    /// Number of rows `d`.
    pub fn num_rows(&self) -> usize {
        self.values.shape()[0]
    }

    /// Window length `k`.
    pub fn window(&self) -> usize {
        self.values.shape()[1]
    }

    /// Number of atoms `r`.
    pub fn num_atoms(&self) -> usize {
        self.values.shape()[2]
    }

    /// The underlying `d x k x r` tensor.
    pub fn values(&self) -> ArrayView3<'_, f64> {
        self.values.view()
    }

    /// Mode-3 unfolding as a `dk x r` matrix (one column per atom).
    pub fn unfold(&self) -> Array2<f64> {
        mode3_unfold(self.values.view())
    }

    /// Mode-3 unfolding of the leading `prefix` time rows,
    /// a `d*prefix x r` matrix. Used by partial fitting.
    pub fn unfold_prefix(&self, prefix: usize) -> Result<Array2<f64>> {
        if prefix > self.window() {
            return Err(Error::dims(
                "unfold_prefix",
                format!("prefix <= {}", self.window()),
                prefix.to_string(),
            ));
        }
        let sliced = self.values.slice(ndarray::s![.., ..prefix, ..]);
        Ok(mode3_unfold(sliced))
    }

    /// Replace the atom values, keeping the importance accumulator.
    pub(crate) fn set_values(&mut self, values: Array3<f64>) {
        debug_assert_eq!(values.dim(), self.values.dim());
        self.values = values;
    }

    /// Add per-atom code row sums to the importance accumulator.
    pub(crate) fn accumulate_importance(&mut self, row_sums: &Array1<f64>) {
        debug_assert_eq!(row_sums.len(), self.importance.len());
        self.importance += row_sums;
    }

    /// The raw (unnormalized) importance accumulator.
    pub fn importance(&self) -> &Array1<f64> {
        &self.importance
    }

    /// Reorder atoms (and their importance entries) by `order`, which must
    /// be a permutation of `0..r`.
    pub fn permute_atoms(&self, order: &[usize]) -> Result<Self> {
        let r = self.num_atoms();
        let mut seen = vec![false; r];
        if order.len() != r || order.iter().any(|&j| j >= r || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::dims("permute_atoms", format!("permutation of 0..{r}"), format!("{order:?}")));
        }
        let (d, k, _) = self.values.dim();
        let values = Array3::from_shape_fn((d, k, r), |(i, a, j)| self.values[(i, a, order[j])]);
        let importance = Array1::from_iter(order.iter().map(|&j| self.importance[j]));
        Ok(Self { values, importance })
    }

    /// Construct with an explicit importance accumulator (checkpoint load).
    pub(crate) fn with_importance(values: Array3<f64>, importance: Array1<f64>) -> Result<Self> {
        let mut dict = Self::new(values)?;
        if importance.len() != dict.num_atoms() {
            return Err(Error::dims(
                "dictionary importance",
                format!("{} entries", dict.num_atoms()),
                format!("{} entries", importance.len()),
            ));
        }
        dict.importance = importance;
        Ok(dict)
    }
}

fn check_nonneg(m: &ArrayView2<'_, f64>, what: &'static str) -> Result<()> {
    for ((row, col), &v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteEntry { what, row, col });
        }
        if v < 0.0 {
            return Err(Error::NegativeEntry { what, row, col, value: v });
        }
    }
    Ok(())
}
