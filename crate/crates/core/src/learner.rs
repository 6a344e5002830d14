//! Online and minibatch dictionary learning over a time-series panel.
//!
//! One learning step embeds the most recent `min(N, t+1)` columns as a
//! Hankel tensor, sparse-codes its windows against the current dictionary,
//! folds codes and data into the recursively discounted aggregates
//! `A <- (1-w) A + w H H^T` and `B <- (1-w) B + w H X^T` with `w = step^-beta`,
//! and refits the dictionary against `(A, B)`. Minibatch learning applies the
//! same step to windows sampled uniformly from recent history, starting from
//! an i.i.d. Uniform(0, 1) initialization; it is used to warm-start the
//! online learner when the series is too short for online learning alone.
//!
//! All randomness (initialization and window sampling) comes from a single
//! ChaCha generator seeded from the config, so a learner is a pure function
//! of `(panel, config)`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::solver::{
    coding_objective, dictionary_update, nonneg_lasso, SolveStatus, SolverOptions,
};
use crate::tensor::{hankel_embed, DictionaryTensor, TimeSeriesPanel};
use crate::{Error, Result};

/// Hyperparameters of the learning algorithms.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Memory size `N`: number of past days embedded per step.
    pub memory_size: usize,
    /// Segment length `k`: length in days of each evolution pattern.
    pub segment_length: usize,
    /// Number of dictionary atoms `r`.
    pub num_atoms: usize,
    /// L1 weight of the sparse-coding objective.
    pub lambda: f64,
    /// Learning exponent `beta` for the aggregate discounting.
    pub beta: f64,
    /// Number of minibatch iterations `M`.
    pub minibatch_iterations: usize,
    /// RNG seed for initialization and window sampling.
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            memory_size: 100,
            segment_length: 6,
            num_atoms: 50,
            lambda: 3.0,
            beta: 1.0,
            minibatch_iterations: 20,
            seed: 42,
        }
    }
}

impl LearnerConfig {
    /// Check the config invariants, reporting the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.segment_length < 2 {
            return Err(Error::config("learner.segment_length", "must be at least 2"));
        }
        if self.memory_size < self.segment_length {
            return Err(Error::config("learner.memory_size", "must be at least segment_length"));
        }
        if self.num_atoms == 0 {
            return Err(Error::config("learner.num_atoms", "must be at least 1"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::config("learner.lambda", "must be nonnegative"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("learner.beta", "must be positive"));
        }
        Ok(())
    }
}

/// Solver limits as configured, with the elementwise cap still unresolved.
///
/// The cap defaults to 10x the largest value in the training panel, which
/// keeps atom magnitudes on the scale of the data itself and therefore
/// directly readable.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverTuning {
    /// Sweep budget for sparse coding.
    pub max_coding_iterations: usize,
    /// Sweep budget for the dictionary update.
    pub max_dictionary_sweeps: usize,
    /// Relative per-sweep objective tolerance for both solvers.
    pub tolerance: f64,
    /// Explicit elementwise cap; `None` resolves to 10x the panel maximum.
    pub elementwise_cap: Option<f64>,
}

impl Default for SolverTuning {
    fn default() -> Self {
        Self {
            max_coding_iterations: 200,
            max_dictionary_sweeps: 50,
            tolerance: 1e-6,
            elementwise_cap: None,
        }
    }
}

impl SolverTuning {
    /// Check the tuning invariants, reporting the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.max_coding_iterations == 0 {
            return Err(Error::config("solver.max_coding_iterations", "must be at least 1"));
        }
        if self.max_dictionary_sweeps == 0 {
            return Err(Error::config("solver.max_dictionary_sweeps", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance", "must be positive"));
        }
        if let Some(cap) = self.elementwise_cap {
            if !(cap > 0.0) {
                return Err(Error::config("solver.elementwise_cap", "must be positive"));
            }
        }
        Ok(())
    }

    /// Resolve the cap against a training panel and split into per-solver
    /// options.
    pub fn resolve(&self, panel: &TimeSeriesPanel) -> Result<LearnerOptions> {
        self.validate()?;
        let cap = match self.elementwise_cap {
            Some(cap) => cap,
            None => {
                let max = panel.values().iter().cloned().fold(0.0, f64::max);
                (10.0 * max).max(1.0)
            }
        };
        let coding = SolverOptions {
            max_iterations: self.max_coding_iterations,
            tolerance: self.tolerance,
            elementwise_cap: cap,
        };
        let dictionary = SolverOptions {
            max_iterations: self.max_dictionary_sweeps,
            tolerance: self.tolerance,
            elementwise_cap: cap,
        };
        coding.validate()?;
        dictionary.validate()?;
        Ok(LearnerOptions { coding, dictionary })
    }
}

/// Fully resolved solver options for the two subproblems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerOptions {
    /// Options for sparse coding.
    pub coding: SolverOptions,
    /// Options for the dictionary update.
    pub dictionary: SolverOptions,
}

/// Recursively discounted sufficient statistics of past codes and data.
#[derive(Debug, Clone)]
pub struct AggregateState {
    a: Array2<f64>,
    b: Array2<f64>,
    step: u64,
    beta: f64,
}

impl AggregateState {
    /// Random initialization with i.i.d. Uniform(0, 1) entries, step 0.
    ///
    /// The first update has weight `1^-beta = 1` and therefore replaces the
    /// random contents entirely; they only survive when no update ever runs.
    pub fn random(r: usize, dk: usize, beta: f64, rng: &mut impl Rng) -> Self {
        let a_data: Vec<f64> = (0..r * r).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b_data: Vec<f64> = (0..r * dk).map(|_| rng.gen_range(0.0..1.0)).collect();
        Self {
            a: Array2::from_shape_vec((r, r), a_data).expect("shape matches length"),
            b: Array2::from_shape_vec((r, dk), b_data).expect("shape matches length"),
            step: 0,
            beta,
        }
    }

    /// Restore from explicit parts (checkpoint load).
    pub fn from_parts(a: Array2<f64>, b: Array2<f64>, step: u64, beta: f64) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
            return Err(Error::dims(
                "aggregate state",
                "square A with matching B rows",
                format!("A {:?}, B {:?}", a.dim(), b.dim()),
            ));
        }
        if !(beta > 0.0) {
            return Err(Error::config("beta", "must be positive"));
        }
        Ok(Self { a, b, step, beta })
    }

    /// Fold one step's codes `H` (r x m) and unfolded data `X` (dk x m) into
    /// the aggregates with weight `(step + 1)^-beta`, then advance the step.
    pub fn absorb(&mut self, codes: &Array2<f64>, data: &Array2<f64>) {
        let weight = ((self.step + 1) as f64).powf(-self.beta);
        let hht = codes.dot(&codes.t());
        let hxt = codes.dot(&data.t());
        self.a = &self.a * (1.0 - weight) + &hht * weight;
        self.b = &self.b * (1.0 - weight) + &hxt * weight;
        // Keep A exactly symmetric against accumulated rounding.
        self.a = (&self.a + &self.a.t()) / 2.0;
        self.step += 1;
    }

    /// The `r x r` code Gram aggregate.
    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    /// The `r x dk` code/data correlation aggregate.
    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    /// Number of updates folded in so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Current learning exponent.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Switch the learning exponent (used between the minibatch and online
    /// phases).
    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    fn permute(&mut self, order: &[usize]) {
        let r = self.a.nrows();
        self.a = Array2::from_shape_fn((r, r), |(i, j)| self.a[(order[i], order[j])]);
        let dk = self.b.ncols();
        self.b = Array2::from_shape_fn((r, dk), |(i, p)| self.b[(order[i], p)]);
    }
}

/// Diagnostics of one learning step.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Sparse codes of the step's windows (r x m).
    pub codes: Array2<f64>,
    /// Sparse-coding solve status.
    pub coding: SolveStatus,
    /// Dictionary-update solve status.
    pub dictionary: SolveStatus,
    /// Sparse-coding objective value at the returned codes.
    pub objective: f64,
}

/// Dictionary learner holding the evolving dictionary and aggregates.
///
/// The state is owned by one task; run independent learners for independent
/// trials.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    dict: DictionaryTensor,
    agg: AggregateState,
    cfg: LearnerConfig,
    opts: LearnerOptions,
}

impl OnlineLearner {
    /// Minibatch learning: random initialization followed by `M` learning
    /// steps on windows sampled uniformly from recent history.
    pub fn minibatch(
        panel: &TimeSeriesPanel,
        cfg: &LearnerConfig,
        tuning: &SolverTuning,
    ) -> Result<Self> {
        cfg.validate()?;
        let opts = tuning.resolve(panel)?;
        let d = panel.num_series();
        let t_len = panel.num_days();
        let k = cfg.segment_length;
        if t_len < k {
            return Err(Error::WindowTooLong { window: k, available: t_len });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dict = DictionaryTensor::random(d, k, cfg.num_atoms, &mut rng);
        let agg = AggregateState::random(cfg.num_atoms, d * k, cfg.beta, &mut rng);
        let mut learner = Self { dict, agg, cfg: cfg.clone(), opts };

        // Sample windows ending anywhere in the memory range, clamped so a
        // full k-window always exists.
        let lo = (k - 1).max(t_len.saturating_sub(cfg.memory_size));
        let hi = t_len - 1;
        for j in 1..=cfg.minibatch_iterations {
            let t = rng.gen_range(lo..=hi);
            let report = learner.step_on_window(panel, t)?;
            log::info!(
                "minibatch iter {j}/{}: window end t={t}, coding objective {:.6e}",
                cfg.minibatch_iterations,
                report.objective
            );
        }
        Ok(learner)
    }

    /// Rebuild a learner from checkpointed state.
    pub fn from_state(
        dict: DictionaryTensor,
        agg: AggregateState,
        cfg: LearnerConfig,
        opts: LearnerOptions,
    ) -> Result<Self> {
        cfg.validate()?;
        if dict.window() != cfg.segment_length || dict.num_atoms() != cfg.num_atoms {
            return Err(Error::dims(
                "learner state",
                format!("dictionary {} x {} (k x r)", cfg.segment_length, cfg.num_atoms),
                format!("{} x {}", dict.window(), dict.num_atoms()),
            ));
        }
        let dk = dict.num_rows() * dict.window();
        if agg.a.nrows() != cfg.num_atoms || agg.b.ncols() != dk {
            return Err(Error::dims(
                "learner state",
                format!("A {0} x {0}, B {0} x {1}", cfg.num_atoms, dk),
                format!("A {:?}, B {:?}", agg.a.dim(), agg.b.dim()),
            ));
        }
        Ok(Self { dict, agg, cfg, opts })
    }

    /// One online learning step on the window of history ending at column
    /// `t` (0-based, inclusive). Requires `t >= k - 1` so a full window
    /// exists; uses the most recent `min(N, t + 1)` columns.
    pub fn online_step(&mut self, panel: &TimeSeriesPanel, t: usize) -> Result<StepReport> {
        let report = self.step_on_window(panel, t)?;
        log::debug!(
            "online step t={t}: coding objective {:.6e}, step {}",
            report.objective,
            self.agg.step()
        );
        Ok(report)
    }

    fn step_on_window(&mut self, panel: &TimeSeriesPanel, t: usize) -> Result<StepReport> {
        let k = self.cfg.segment_length;
        if panel.num_series() != self.dict.num_rows() {
            return Err(Error::dims(
                "online_step",
                format!("panel with {} rows", self.dict.num_rows()),
                format!("{} rows", panel.num_series()),
            ));
        }
        if t >= panel.num_days() {
            return Err(Error::TimeIndexOutOfRange { index: t, len: panel.num_days() });
        }
        if t + 1 < k {
            return Err(Error::WindowTooLong { window: k, available: t + 1 });
        }
        let start = (t + 1).saturating_sub(self.cfg.memory_size);
        let segment = panel.segment(start, t);

        let hankel = hankel_embed(segment, k)?;
        let data = hankel.unfold();
        let dictionary = self.dict.unfold();

        let coding = nonneg_lasso(data.view(), dictionary.view(), self.cfg.lambda, &self.opts.coding)?;
        if !coding.status.converged {
            log::warn!(
                "sparse coding did not converge in {} sweeps (last decrease {:.3e})",
                coding.status.sweeps,
                coding.status.last_decrease
            );
        }
        let objective =
            coding_objective(data.view(), dictionary.view(), coding.codes.view(), self.cfg.lambda);

        self.agg.absorb(&coding.codes, &data);

        let update = dictionary_update(
            self.dict.values(),
            self.agg.a().view(),
            self.agg.b().view(),
            &self.opts.dictionary,
        )?;
        if !update.status.converged {
            log::warn!(
                "dictionary update did not converge in {} sweeps (last decrease {:.3e})",
                update.status.sweeps,
                update.status.last_decrease
            );
        }
        self.dict.set_values(update.values);

        let row_sums = coding.codes.sum_axis(ndarray::Axis(1));
        self.dict.accumulate_importance(&row_sums);

        Ok(StepReport {
            codes: coding.codes,
            coding: coding.status,
            dictionary: update.status,
            objective,
        })
    }

    /// The current dictionary.
    pub fn dictionary(&self) -> &DictionaryTensor {
        &self.dict
    }

    /// The current aggregate state.
    pub fn aggregate(&self) -> &AggregateState {
        &self.agg
    }

    /// The learner config.
    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    /// The resolved solver options.
    pub fn options(&self) -> &LearnerOptions {
        &self.opts
    }

    /// Switch the learning exponent for subsequent steps.
    pub fn set_beta(&mut self, beta: f64) {
        self.agg.set_beta(beta);
    }

    /// Reorder atoms by descending importance, keeping the aggregates
    /// consistent with the new atom order.
    pub fn sort_by_importance(&mut self) -> Result<()> {
        let order = descending_importance_order(self.dict.importance());
        self.dict = self.dict.permute_atoms(&order)?;
        self.agg.permute(&order);
        Ok(())
    }
}

/// Per-atom importance: the accumulated code row sums normalized to sum 1.
///
/// An all-zero accumulator (no codes ever activated) yields the uniform
/// vector with a warning.
pub fn importance_metric(dict: &DictionaryTensor) -> Array1<f64> {
    let total = dict.importance().sum();
    let r = dict.num_atoms();
    if total <= 0.0 {
        log::warn!("importance accumulator is all-zero; returning uniform importance");
        return Array1::from_elem(r, 1.0 / r as f64);
    }
    dict.importance() / total
}

/// Atoms permuted into descending importance, ties broken by original index.
pub fn sort_atoms_by_importance(dict: &DictionaryTensor) -> DictionaryTensor {
    let order = descending_importance_order(dict.importance());
    dict.permute_atoms(&order).expect("order is a permutation by construction")
}

fn descending_importance_order(importance: &Array1<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&i, &j| importance[j].partial_cmp(&importance[i]).unwrap_or(std::cmp::Ordering::Equal));
    order
}
