//! Partial fitting, one-step prediction, recursive extrapolation,
//! reconstruction, and the three-stage ensemble scheme.
//!
//! A one-step prediction codes the most recent `k - 1` observations against
//! the first `k - 1` time rows of every atom, then reads the combined atoms'
//! final time row as the prediction. Feeding predictions back as context
//! extrapolates further into the future; the extrapolation is a
//! deterministic dynamical system once the dictionary is fixed, so all
//! ensemble spread comes from the randomized learning phases.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::learner::{AggregateState, LearnerConfig, OnlineLearner, SolverTuning};
use crate::solver::{nonneg_lasso, SolverOptions};
use crate::tensor::{hankel_embed, DictionaryTensor, TimeSeriesPanel};
use crate::{Error, Result};

/// Configuration of the full minibatch / online / extrapolation scheme.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    /// Minibatch-phase learner settings (including `beta` for that phase).
    pub learner: LearnerConfig,
    /// Learning exponent for the online phase.
    pub online_beta: f64,
    /// L1 weight for partial fitting (one-step prediction and
    /// extrapolation).
    pub lambda_prime: f64,
    /// Extrapolation horizon `L` in days.
    pub horizon: usize,
    /// Number of independent randomized trials.
    pub n_trials: usize,
    /// Restrict the minibatch phase to the first `k` columns so every
    /// recorded prediction uses only data from its own past.
    pub strict_causal: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            learner: LearnerConfig::default(),
            online_beta: 4.0,
            lambda_prime: 0.0,
            horizon: 30,
            n_trials: 8,
            strict_causal: false,
        }
    }
}

impl SchemeConfig {
    /// Check the config invariants, reporting the offending field.
    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        if !(self.online_beta > 0.0) {
            return Err(Error::config("scheme.online_beta", "must be positive"));
        }
        if !(self.lambda_prime >= 0.0) {
            return Err(Error::config("scheme.lambda_prime", "must be nonnegative"));
        }
        if self.n_trials == 0 {
            return Err(Error::config("scheme.n_trials", "must be at least 1"));
        }
        Ok(())
    }
}

/// Ensemble outputs of the scheme, in the (transformed) units of the input
/// panel.
#[derive(Debug, Clone)]
pub struct PredictionEnsemble {
    /// Mean in-sample one-step predictions over trials, `d x (T - k + 1)`;
    /// column `j` predicts panel column `k + j` (the last column predicts
    /// one day past the panel).
    pub one_step: Array2<f64>,
    /// Pointwise population standard deviation of the one-step predictions
    /// over trials.
    pub one_step_std: Array2<f64>,
    /// Panel column index predicted by `one_step` column 0 (equals `k`).
    pub one_step_offset: usize,
    /// Per-trial extrapolated curves, `n_successes x d x L`.
    pub extrapolation_trials: Array3<f64>,
    /// Pointwise mean of the extrapolated curves, `d x L`.
    pub mean: Array2<f64>,
    /// Pointwise population standard deviation of the extrapolated curves,
    /// `d x L`.
    pub std: Array2<f64>,
}

/// Final dictionary and ensemble predictions of a scheme run.
#[derive(Debug, Clone)]
pub struct SchemeOutput {
    /// Final dictionary of the first successful trial.
    pub dictionary: DictionaryTensor,
    /// Final aggregate state of the first successful trial.
    pub aggregate: AggregateState,
    /// Ensemble predictions.
    pub ensemble: PredictionEnsemble,
}

/// Code the last `k - 1` observations against the leading `k - 1` time rows
/// of every atom and read the fitted atoms' final time row as the one-step
/// prediction.
///
/// `context` is `d x (k - 1)` with its last column the most recent
/// observation. Returns all zeros with a warning when the truncated
/// dictionary has no support.
pub fn partial_fit_predict(
    dict: &DictionaryTensor,
    context: ArrayView2<'_, f64>,
    lambda_prime: f64,
    opts: &SolverOptions,
) -> Result<Array1<f64>> {
    let d = dict.num_rows();
    let k = dict.window();
    if k < 2 {
        return Err(Error::dims("partial_fit_predict", "window k >= 2", format!("k = {k}")));
    }
    if context.dim() != (d, k - 1) {
        return Err(Error::dims(
            "partial_fit_predict",
            format!("{d} x {} context", k - 1),
            format!("{:?}", context.dim()),
        ));
    }
    for ((row, col), &v) in context.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteEntry { what: "context", row, col });
        }
        if v < 0.0 {
            return Err(Error::NegativeEntry { what: "context", row, col, value: v });
        }
    }

    let truncated = dict.unfold_prefix(k - 1)?;
    if truncated.iter().all(|&v| v == 0.0) {
        log::warn!("partial fit against an all-zero dictionary; predicting zeros");
        return Ok(Array1::zeros(d));
    }

    // Vectorize the context row-major (row outer, time inner), matching the
    // mode-3 unfolding convention.
    let stacked: Vec<f64> = context.rows().into_iter().flat_map(|r| r.to_vec()).collect();
    let x = Array2::from_shape_vec((d * (k - 1), 1), stacked).expect("length matches shape");

    let coding = nonneg_lasso(x.view(), truncated.view(), lambda_prime, opts)?;
    if !coding.status.converged {
        log::warn!("partial fit did not converge in {} sweeps", coding.status.sweeps);
    }

    let full = dict.unfold().dot(&coding.codes);
    Ok(Array1::from_shape_fn(d, |i| full[(i * k + (k - 1), 0)]))
}

/// Iterate [`partial_fit_predict`] `horizon` times, shifting the context by
/// one day and appending each prediction. Returns the `d x horizon` matrix
/// of extrapolated values.
pub fn recursive_extrapolate(
    dict: &DictionaryTensor,
    tail: ArrayView2<'_, f64>,
    horizon: usize,
    lambda_prime: f64,
    opts: &SolverOptions,
) -> Result<Array2<f64>> {
    let d = dict.num_rows();
    let mut context = tail.to_owned();
    let mut out = Array2::zeros((d, horizon));
    for step in 0..horizon {
        let prediction = partial_fit_predict(dict, context.view(), lambda_prime, opts)?;
        if prediction.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinitePrediction { step });
        }
        out.column_mut(step).assign(&prediction);
        // Shift the window: drop the oldest column, append the prediction.
        let cols = context.ncols();
        for c in 0..cols.saturating_sub(1) {
            let next = context.column(c + 1).to_owned();
            context.column_mut(c).assign(&next);
        }
        context.column_mut(cols - 1).assign(&prediction);
    }
    Ok(out)
}

/// Sparse-code every length-`k` sliding window of the panel against the
/// dictionary and average the window reconstructions over each column they
/// cover.
pub fn reconstruct(
    dict: &DictionaryTensor,
    panel: &TimeSeriesPanel,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<Array2<f64>> {
    let d = dict.num_rows();
    let k = dict.window();
    let t_len = panel.num_days();
    if panel.num_series() != d {
        return Err(Error::dims(
            "reconstruct",
            format!("panel with {d} rows"),
            format!("{} rows", panel.num_series()),
        ));
    }
    if t_len < k {
        return Err(Error::WindowTooLong { window: k, available: t_len });
    }

    let hankel = hankel_embed(panel.values(), k)?;
    let data = hankel.unfold();
    let w = dict.unfold();
    let coding = nonneg_lasso(data.view(), w.view(), lambda, opts)?;
    if !coding.status.converged {
        log::warn!("reconstruction coding did not converge in {} sweeps", coding.status.sweeps);
    }
    let recon = w.dot(&coding.codes); // dk x m

    let mut sums = Array2::<f64>::zeros((d, t_len));
    for b in 0..recon.ncols() {
        for a in 0..k {
            for i in 0..d {
                sums[(i, b + a)] += recon[(i * k + a, b)];
            }
        }
    }
    // Column c is covered by windows b in [max(0, c-k+1), min(c, T-k)].
    for c in 0..t_len {
        let lo = c.saturating_sub(k - 1);
        let hi = c.min(t_len - k);
        let n = (hi - lo + 1) as f64;
        for i in 0..d {
            sums[(i, c)] /= n;
        }
    }
    Ok(sums)
}

struct TrialOutput {
    one_step: Array2<f64>,
    extrapolation: Array2<f64>,
    dictionary: DictionaryTensor,
    aggregate: AggregateState,
}

/// Run the full scheme: minibatch initialization, online learning with
/// concurrent one-step prediction, and recursive extrapolation, repeated
/// over `n_trials` independently seeded trials (seed, seed+1, ...).
///
/// Trials run in parallel; the reduction is by trial index, so outputs are
/// deterministic. Individual trial failures are logged and skipped; the run
/// fails only when every trial fails.
pub fn run_scheme(
    panel: &TimeSeriesPanel,
    cfg: &SchemeConfig,
    tuning: &SolverTuning,
) -> Result<SchemeOutput> {
    run_scheme_with_init(panel, cfg, tuning, None)
}

/// [`run_scheme`] starting every trial from an externally supplied state
/// (e.g. a loaded checkpoint) instead of minibatch initialization. With an
/// initial state the scheme is deterministic, so all trials coincide.
pub fn run_scheme_with_init(
    panel: &TimeSeriesPanel,
    cfg: &SchemeConfig,
    tuning: &SolverTuning,
    init: Option<(&DictionaryTensor, &AggregateState)>,
) -> Result<SchemeOutput> {
    cfg.validate()?;
    let k = cfg.learner.segment_length;
    let t_len = panel.num_days();
    if t_len < k {
        return Err(Error::WindowTooLong { window: k, available: t_len });
    }

    let results: Vec<Result<TrialOutput>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| run_trial(panel, cfg, tuning, trial as u64, init))
        .collect();

    let mut successes = Vec::with_capacity(cfg.n_trials);
    let mut first_failure = None;
    for (trial, result) in results.into_iter().enumerate() {
        match result {
            Ok(output) => successes.push(output),
            Err(err) => {
                log::warn!("trial {trial} failed: {err}");
                if first_failure.is_none() {
                    first_failure = Some(err.to_string());
                }
            }
        }
    }
    if successes.is_empty() {
        return Err(Error::AllTrialsFailed {
            trials: cfg.n_trials,
            first: first_failure.unwrap_or_else(|| "no trials run".into()),
        });
    }

    let d = panel.num_series();
    let horizon = cfg.horizon;
    let n = successes.len();
    let t_prime = t_len - k + 1;

    let one_step_stack: Vec<&Array2<f64>> = successes.iter().map(|s| &s.one_step).collect();
    let (one_step, one_step_std) = pointwise_stats(&one_step_stack, d, t_prime);

    let extrap_stack: Vec<&Array2<f64>> = successes.iter().map(|s| &s.extrapolation).collect();
    let (mean, std) = pointwise_stats(&extrap_stack, d, horizon);

    let mut extrapolation_trials = Array3::zeros((n, d, horizon));
    for (idx, trial) in successes.iter().enumerate() {
        extrapolation_trials.index_axis_mut(Axis(0), idx).assign(&trial.extrapolation);
    }

    let first = successes.into_iter().next().expect("nonempty successes");
    Ok(SchemeOutput {
        dictionary: first.dictionary,
        aggregate: first.aggregate,
        ensemble: PredictionEnsemble {
            one_step,
            one_step_std,
            one_step_offset: k,
            extrapolation_trials,
            mean,
            std,
        },
    })
}

fn run_trial(
    panel: &TimeSeriesPanel,
    cfg: &SchemeConfig,
    tuning: &SolverTuning,
    trial: u64,
    init: Option<(&DictionaryTensor, &AggregateState)>,
) -> Result<TrialOutput> {
    let k = cfg.learner.segment_length;
    let t_len = panel.num_days();

    let mut learner = match init {
        Some((dict, agg)) => {
            let opts = tuning.resolve(panel)?;
            OnlineLearner::from_state(dict.clone(), agg.clone(), cfg.learner.clone(), opts)?
        }
        None => {
            let trial_cfg = LearnerConfig {
                seed: cfg.learner.seed.wrapping_add(trial),
                ..cfg.learner.clone()
            };
            if cfg.strict_causal {
                // Initialization may only see the first k columns, so every
                // prediction at t + 1 >= k depends on columns <= t alone.
                let prefix = panel.with_values(panel.segment(0, k - 1).to_owned())?;
                OnlineLearner::minibatch(&prefix, &trial_cfg, tuning)?
            } else {
                OnlineLearner::minibatch(panel, &trial_cfg, tuning)?
            }
        }
    };

    learner.set_beta(cfg.online_beta);

    // Online learning with concurrent one-step prediction: after updating on
    // the window ending at t, predict column t + 1 from the last k - 1
    // observations.
    let t_prime = t_len - k + 1;
    let mut one_step = Array2::zeros((panel.num_series(), t_prime));
    for t in (k - 1)..t_len {
        learner.online_step(panel, t)?;
        let context = panel.segment(t + 2 - k, t);
        let prediction = partial_fit_predict(
            learner.dictionary(),
            context,
            cfg.lambda_prime,
            &learner.options().coding,
        )?;
        one_step.column_mut(t + 1 - k).assign(&prediction);
    }

    let tail = panel.segment(t_len + 1 - k, t_len - 1);
    let extrapolation = recursive_extrapolate(
        learner.dictionary(),
        tail,
        cfg.horizon,
        cfg.lambda_prime,
        &learner.options().coding,
    )?;

    Ok(TrialOutput {
        one_step,
        extrapolation,
        dictionary: learner.dictionary().clone(),
        aggregate: learner.aggregate().clone(),
    })
}

/// Pointwise mean and population standard deviation across equally shaped
/// matrices, accumulated in index order.
fn pointwise_stats(stack: &[&Array2<f64>], rows: usize, cols: usize) -> (Array2<f64>, Array2<f64>) {
    let n = stack.len() as f64;
    let mut mean = Array2::<f64>::zeros((rows, cols));
    for m in stack {
        mean += *m;
    }
    mean /= n;
    let mut var = Array2::<f64>::zeros((rows, cols));
    for m in stack {
        let diff = *m - &mean;
        var += &(&diff * &diff);
    }
    var /= n;
    (mean, var.mapv(f64::sqrt))
}
