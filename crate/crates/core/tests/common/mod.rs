//! Shared helpers for the integration suites: an independent active-set
//! enumeration oracle for the nonnegative lasso, and loaders for the bundled
//! case-count fixtures.

use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};

use onmf_core::data::{
    assemble_panel, load_case_csv, preprocess, to_daily_new, CaseType, TransformSpec,
};
use onmf_core::tensor::TimeSeriesPanel;

/// Repository-level fixtures directory.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

/// Countries bundled in the snapshot fixture, in panel row order.
pub fn snapshot_countries() -> Vec<String> {
    ["Korea, South", "China", "US", "Italy", "Spain", "Germany"]
        .map(String::from)
        .to_vec()
}

/// Load the bundled 18 x 80 snapshot and apply the default preprocessing
/// (5-day trailing average, log(x + 1)).
pub fn load_snapshot_panel() -> TimeSeriesPanel {
    let dir = fixtures_dir();
    let mut series = std::collections::BTreeMap::new();
    let case_types = [CaseType::Confirmed, CaseType::Deaths, CaseType::Recovered];
    let mut t0 = None;
    for case_type in case_types {
        let path = dir.join(format!("time_series_covid19_{case_type}_global.csv"));
        let table = load_case_csv(&path, case_type).expect("fixture parses");
        t0.get_or_insert(table.dates[0]);
        let (daily, _) = to_daily_new(&table);
        for country in snapshot_countries() {
            let values = daily.get(&country).expect("fixture has country").clone();
            series.insert((case_type, country), values);
        }
    }
    let raw = assemble_panel(&series, &snapshot_countries(), &case_types, t0.unwrap())
        .expect("panel assembles");
    preprocess(&raw, &TransformSpec::default()).expect("panel preprocesses")
}

/// Global minimum of `||x - Wh||^2 + lambda * sum(h)` over `h >= 0` for every
/// column of `x`, found by exhaustive support enumeration (valid for
/// `r <= 2`): the optimum's support solves the unconstrained stationarity
/// system restricted to that support, so scanning all supports and keeping
/// the best feasible candidate finds the global minimizer.
pub fn nonneg_lasso_oracle(x: &Array2<f64>, w: &Array2<f64>, lambda: f64) -> f64 {
    let r = w.ncols();
    assert!(r <= 2, "oracle enumerates supports only up to two atoms");
    (0..x.ncols()).map(|c| column_oracle(x.column(c), w, lambda)).sum()
}

fn column_oracle(x: ArrayView1<'_, f64>, w: &Array2<f64>, lambda: f64) -> f64 {
    let r = w.ncols();
    let mut best = x.dot(&x); // empty support
    for mask in 1u32..(1 << r) {
        let support: Vec<usize> = (0..r).filter(|j| mask & (1 << j) != 0).collect();
        let candidate = match support.as_slice() {
            [j] => {
                let wj = w.column(*j);
                let gram = wj.dot(&wj);
                if gram < 1e-12 {
                    continue;
                }
                let h = (wj.dot(&x) - lambda / 2.0) / gram;
                if h <= 0.0 {
                    continue;
                }
                objective(x, w, &[(*j, h)], lambda)
            }
            [j, l] => {
                let wj = w.column(*j);
                let wl = w.column(*l);
                let a11 = wj.dot(&wj);
                let a12 = wj.dot(&wl);
                let a22 = wl.dot(&wl);
                let det = a11 * a22 - a12 * a12;
                if det.abs() < 1e-12 {
                    continue;
                }
                let b1 = wj.dot(&x) - lambda / 2.0;
                let b2 = wl.dot(&x) - lambda / 2.0;
                let hj = (a22 * b1 - a12 * b2) / det;
                let hl = (a11 * b2 - a12 * b1) / det;
                if hj <= 0.0 || hl <= 0.0 {
                    continue;
                }
                objective(x, w, &[(*j, hj), (*l, hl)], lambda)
            }
            _ => unreachable!("r <= 2"),
        };
        best = best.min(candidate);
    }
    best
}

fn objective(x: ArrayView1<'_, f64>, w: &Array2<f64>, h: &[(usize, f64)], lambda: f64) -> f64 {
    let mut residual = x.to_owned();
    let mut penalty = 0.0;
    for &(j, value) in h {
        residual -= &(&w.column(j) * value);
        penalty += lambda * value;
    }
    residual.dot(&residual) + penalty
}
