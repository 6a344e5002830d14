//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test -p onmf-core --test acceptance -- --nocapture` to see
//! the per-criterion lines. The full 1000-trial ensemble is `--ignored`.

mod common;

use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use onmf_core::checkpoint::ModelCheckpoint;
use onmf_core::data::{inverse_log_values, log_transform, inverse_log_transform};
use onmf_core::export::write_prediction_csv;
use onmf_core::learner::{importance_metric, LearnerConfig, OnlineLearner, SolverTuning};
use onmf_core::predictor::{
    recursive_extrapolate, reconstruct, run_scheme, SchemeConfig,
};
use onmf_core::solver::{nonneg_lasso, SolverOptions};
use onmf_core::tensor::{fold_mode3, hankel_embed, mode3_unfold, DictionaryTensor, TimeSeriesPanel};

fn frob(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// 1. Sparse coding matches exhaustive active-set enumeration on small
//    instances for several penalty levels.
#[test]
fn acceptance_1_solver_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let opts = SolverOptions { max_iterations: 10_000, tolerance: 1e-14, elementwise_cap: 1e6 };
    let mut checked = 0;
    while checked < 100 {
        for &lambda in &[0.0, 0.5, 2.0] {
            let n = rng.gen_range(1..=4);
            let r = rng.gen_range(1..=2);
            let m = rng.gen_range(1..=2);
            let w = Array2::from_shape_fn((n, r), |_| rng.gen_range(0.0..2.0));
            let x = Array2::from_shape_fn((n, m), |_| rng.gen_range(0.0..2.0));
            let result = nonneg_lasso(x.view(), w.view(), lambda, &opts).unwrap();
            let solved = onmf_core::solver::coding_objective(
                x.view(),
                w.view(),
                result.codes.view(),
                lambda,
            );
            let oracle = common::nonneg_lasso_oracle(&x, &w, lambda);
            let gap = solved - oracle;
            assert!(
                gap <= 1e-6 * oracle.abs().max(1.0),
                "objective gap {gap} (solver {solved}, oracle {oracle}, lambda {lambda})"
            );
            assert!(gap >= -1e-8, "solver beat the oracle: gap {gap}");
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("acceptance 1 (solver-oracle equivalence, {checked} instances): PASS");
}

// 2. The dictionary-update surrogate never increases across sweeps over
//    long randomized online runs.
#[test]
fn acceptance_2_monotone_surrogate_descent() {
    let mut panel_rng = ChaCha8Rng::seed_from_u64(2002);
    for sequence in 0..50 {
        let values = Array2::from_shape_fn((3, 40), |_| panel_rng.gen_range(0.05..2.0));
        let panel = TimeSeriesPanel::synthetic(values).unwrap();
        let cfg = LearnerConfig {
            memory_size: 12,
            segment_length: 4,
            num_atoms: 5,
            lambda: 0.4,
            beta: 1.0,
            minibatch_iterations: 0,
            seed: 9000 + sequence,
        };
        let mut learner = OnlineLearner::minibatch(&panel, &cfg, &SolverTuning::default()).unwrap();
        for step in 0..30 {
            let t = 3 + step;
            let report = learner.online_step(&panel, t).unwrap();
            assert!(
                report.dictionary.max_sweep_increase <= 1e-10,
                "sequence {sequence} step {step}: sweep increase {}",
                report.dictionary.max_sweep_increase
            );
        }
    }
    println!("acceptance 2 (monotone surrogate descent, 50 sequences x 30 steps): PASS");
}

// 3. A panel generated by two nonnegative modes is recovered: near-exact
//    window reconstruction and accurate one-step predictions.
#[test]
fn acceptance_3_exact_recovery_sanity() {
    let (d, k, t_len) = (2, 4, 200);
    let (g_decay, g_growth) = (0.97f64, 1.03f64);
    let u = [1.0, 0.3];
    let v = [0.25, 1.0];
    let values = Array2::from_shape_fn((d, t_len), |(i, t)| {
        2.0 * u[i] * g_decay.powi(t as i32) + 0.02 * v[i] * g_growth.powi(t as i32)
    });
    let panel = TimeSeriesPanel::synthetic(values).unwrap();

    let cfg = SchemeConfig {
        learner: LearnerConfig {
            memory_size: 100,
            segment_length: k,
            num_atoms: 2,
            lambda: 0.0,
            beta: 0.7,
            minibatch_iterations: 500,
            seed: 1234,
        },
        online_beta: 0.7,
        lambda_prime: 0.0,
        horizon: 0,
        n_trials: 1,
        strict_causal: false,
    };
    let tuning = SolverTuning { tolerance: 1e-10, ..SolverTuning::default() };
    let out = run_scheme(&panel, &cfg, &tuning).unwrap();

    // Sliding-window factorization residual with the learned dictionary.
    let hankel = hankel_embed(panel.values(), k).unwrap();
    let data = hankel.unfold();
    let w = out.dictionary.unfold();
    let opts = SolverOptions { max_iterations: 500, tolerance: 1e-12, elementwise_cap: 1e6 };
    let coding = nonneg_lasso(data.view(), w.view(), 0.0, &opts).unwrap();
    let residual = &data - &w.dot(&coding.codes);
    let recon_err = frob(&residual) / frob(&data);
    assert!(recon_err < 1e-3, "window factorization relative error {recon_err}");

    // Overlap-averaged reconstruction of the panel itself.
    let averaged = reconstruct(&out.dictionary, &panel, 0.0, &opts).unwrap();
    let avg_err = frob(&(&averaged - &panel.values())) / frob(&panel.values().to_owned());
    assert!(avg_err < 1e-3, "averaged reconstruction relative error {avg_err}");

    // One-step predictions on the last 50 in-sample steps.
    let t_prime = t_len - k + 1;
    let mut err = 0.0;
    let mut norm = 0.0;
    for c in (t_len - 50)..t_len {
        let j = c - k; // one_step column j predicts panel column k + j
        for i in 0..d {
            let diff = out.ensemble.one_step[(i, j)] - panel.values()[(i, c)];
            err += diff * diff;
            norm += panel.values()[(i, c)] * panel.values()[(i, c)];
        }
    }
    let one_step_err = (err / norm).sqrt();
    assert!(one_step_err < 1e-2, "one-step relative error {one_step_err}");
    assert_eq!(out.ensemble.one_step.ncols(), t_prime);
    println!(
        "acceptance 3 (exact recovery: reconstruction {recon_err:.2e}, one-step {one_step_err:.2e}): PASS"
    );
}

// 4. A deterministic period-7 panel is continued by recursive extrapolation.
#[test]
fn acceptance_4_periodic_prediction() {
    let period = 7;
    let t_len = 210;
    let pattern = |t: usize| 1.0 + 0.05 * (2.0 * std::f64::consts::PI * t as f64 / period as f64).cos();
    let values = Array2::from_shape_fn((1, t_len), |(_, t)| pattern(t));
    let panel = TimeSeriesPanel::synthetic(values).unwrap();

    let cfg = SchemeConfig {
        learner: LearnerConfig {
            memory_size: 100,
            segment_length: period,
            num_atoms: 3,
            lambda: 0.0,
            beta: 0.7,
            minibatch_iterations: 500,
            seed: 77,
        },
        online_beta: 0.7,
        lambda_prime: 0.0,
        horizon: 30,
        n_trials: 1,
        strict_causal: false,
    };
    let tuning = SolverTuning { tolerance: 1e-10, ..SolverTuning::default() };
    let out = run_scheme(&panel, &cfg, &tuning).unwrap();

    let mut err = 0.0;
    let mut norm = 0.0;
    for l in 0..30 {
        let expected = pattern(t_len + l);
        let diff = out.ensemble.mean[(0, l)] - expected;
        err += diff * diff;
        norm += expected * expected;
    }
    let rel = (err / norm).sqrt();
    assert!(rel < 1e-2, "extrapolation relative error {rel}");
    println!("acceptance 4 (periodic prediction, 30-step error {rel:.2e}): PASS");
}

// 5. Extrapolating a single geometric atom follows the closed form c * g^i.
#[test]
fn acceptance_5_geometric_extrapolation_closed_form() {
    let g = 0.9f64;
    let c = 2.5f64;
    let atom = Array3::from_shape_vec((1, 2, 1), vec![1.0, g]).unwrap();
    let dict = DictionaryTensor::new(atom).unwrap();
    let tail = Array2::from_elem((1, 1), c);
    let opts = SolverOptions { max_iterations: 500, tolerance: 1e-14, elementwise_cap: 1e6 };
    let out = recursive_extrapolate(&dict, tail.view(), 30, 0.0, &opts).unwrap();
    for i in 0..30 {
        let expected = c * g.powi(i as i32 + 1);
        assert!(
            (out[(0, i)] - expected).abs() <= 1e-8,
            "step {i}: {} vs {expected}",
            out[(0, i)]
        );
    }
    println!("acceptance 5 (geometric extrapolation closed form): PASS");
}

// 6. With beta = 1 the aggregate A_t is the running mean of H_s H_s^T.
#[test]
fn acceptance_6_balanced_average_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let values = Array2::from_shape_fn((2, 40), |_| rng.gen_range(0.05..2.0));
    let panel = TimeSeriesPanel::synthetic(values).unwrap();
    let cfg = LearnerConfig {
        memory_size: 10,
        segment_length: 3,
        num_atoms: 3,
        lambda: 0.2,
        beta: 1.0,
        minibatch_iterations: 0,
        seed: 42,
    };
    let mut learner = OnlineLearner::minibatch(&panel, &cfg, &SolverTuning::default()).unwrap();
    let mut sum: Array2<f64> = Array2::zeros((3, 3));
    for (step, t) in (2..22).enumerate() {
        let report = learner.online_step(&panel, t).unwrap();
        sum = sum + report.codes.dot(&report.codes.t());
        let mean = &sum / (step as f64 + 1.0);
        let diff = learner.aggregate().a() - &mean;
        let max_abs = diff.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(max_abs <= 1e-10, "step {step}: max deviation {max_abs}");
    }
    println!("acceptance 6 (balanced-average identity over 20 steps): PASS");
}

fn snapshot_scheme(n_trials: usize) -> SchemeConfig {
    SchemeConfig {
        learner: LearnerConfig {
            memory_size: 100,
            segment_length: 6,
            num_atoms: 50,
            lambda: 3.0,
            beta: 1.0,
            minibatch_iterations: 20,
            seed: 42,
        },
        online_beta: 4.0,
        lambda_prime: 0.0,
        horizon: 30,
        n_trials,
        strict_causal: false,
    }
}

// 7. The bundled snapshot runs end to end at full scale within budget.
#[test]
fn acceptance_7_full_scale_end_to_end() {
    let panel = common::load_snapshot_panel();
    assert_eq!((panel.num_series(), panel.num_days()), (18, 80));

    let start = Instant::now();
    let cfg = snapshot_scheme(8);
    let out = run_scheme(&panel, &cfg, &SolverTuning::default()).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "scheme took {elapsed:?}");

    // Finite, nonnegative curves in original units.
    let mean_original = inverse_log_values(&out.ensemble.mean, 1.0);
    let one_step_original = inverse_log_values(&out.ensemble.one_step, 1.0);
    assert!(mean_original.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(one_step_original.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(out.ensemble.std.iter().all(|v| v.is_finite() && *v >= 0.0));

    // Importance is a probability vector with concentrated mass.
    let importance = importance_metric(&out.dictionary);
    assert!((importance.sum() - 1.0).abs() < 1e-9);
    assert!(importance.iter().all(|v| *v >= 0.0));
    let top = importance.iter().cloned().fold(0.0f64, f64::max);
    assert!(top >= 0.05, "largest importance {top}");

    // Checkpoint round-trips bit-exactly.
    let opts = SolverTuning::default().resolve(&panel).unwrap();
    let learner =
        OnlineLearner::from_state(out.dictionary.clone(), out.aggregate.clone(), cfg.learner, opts)
            .unwrap();
    let checkpoint = ModelCheckpoint::from_learner(&learner);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    checkpoint.save(&path).unwrap();
    let loaded = ModelCheckpoint::load(&path).unwrap();
    assert!(checkpoint
        .dictionary
        .iter()
        .chain(&checkpoint.aggregate_a)
        .chain(&checkpoint.aggregate_b)
        .chain(&checkpoint.importance)
        .zip(loaded.dictionary.iter().chain(&loaded.aggregate_a).chain(&loaded.aggregate_b).chain(&loaded.importance))
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    println!(
        "acceptance 7 (full-scale end-to-end, 8 trials in {:.1}s, top importance {top:.3}): PASS",
        elapsed.as_secs_f64()
    );
}

// 7b. Opt-in full ensemble at the published trial count.
#[test]
#[ignore = "long-running full ensemble; run explicitly"]
fn acceptance_7_full_ensemble_1000_trials() {
    let panel = common::load_snapshot_panel();
    let start = Instant::now();
    let out = run_scheme(&panel, &snapshot_scheme(1000), &SolverTuning::default()).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 3600.0, "scheme took {elapsed:?}");
    assert_eq!(out.ensemble.extrapolation_trials.shape()[0], 1000);
    assert!(out.ensemble.mean.iter().all(|v| v.is_finite()));
    println!(
        "acceptance 7b (full 1000-trial ensemble in {:.0}s): PASS",
        elapsed.as_secs_f64()
    );
}

// 8. Identical seeds produce byte-identical output files.
#[test]
fn acceptance_8_pipeline_determinism() {
    let panel = common::load_snapshot_panel();
    let cfg = SchemeConfig {
        learner: LearnerConfig { num_atoms: 10, minibatch_iterations: 8, ..snapshot_scheme(2).learner },
        n_trials: 2,
        horizon: 10,
        ..snapshot_scheme(2)
    };
    let dir = tempfile::tempdir().unwrap();
    let spec = onmf_core::data::TransformSpec::default();
    let mut files = Vec::new();
    for run in 0..2 {
        let out = run_scheme(&panel, &cfg, &SolverTuning::default()).unwrap();
        let csv_path = dir.path().join(format!("predictions_{run}.csv"));
        write_prediction_csv(&csv_path, &panel, &out.ensemble, &spec).unwrap();
        let opts = SolverTuning::default().resolve(&panel).unwrap();
        let learner = OnlineLearner::from_state(
            out.dictionary.clone(),
            out.aggregate.clone(),
            cfg.learner.clone(),
            opts,
        )
        .unwrap();
        let cp_path = dir.path().join(format!("model_{run}.json"));
        ModelCheckpoint::from_learner(&learner).save(&cp_path).unwrap();
        files.push((std::fs::read(&csv_path).unwrap(), std::fs::read(&cp_path).unwrap()));
    }
    assert_eq!(files[0].0, files[1].0, "prediction CSVs differ");
    assert_eq!(files[0].1, files[1].1, "checkpoints differ");
    println!("acceptance 8 (byte-identical outputs for identical seeds): PASS");
}

// 9. Transform and embedding identities.
#[test]
fn acceptance_9_transform_and_embedding_roundtrips() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);

    // Log transform round trip to 1e-10 relative.
    let values = Array2::from_shape_fn((4, 60), |_| rng.gen_range(0.0..5e4));
    let panel = TimeSeriesPanel::synthetic(values).unwrap();
    let round = inverse_log_transform(&log_transform(&panel, 1.0).unwrap(), 1.0).unwrap();
    for (a, b) in panel.values().iter().zip(round.values().iter()) {
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    // fold q unfold is exact, and Hankel slices are constant along
    // anti-diagonals, over 1000 random embeds.
    for trial in 0..1000 {
        let d = rng.gen_range(1..4);
        let n = rng.gen_range(2..12);
        let k = rng.gen_range(1..=n);
        let segment = Array2::from_shape_fn((d, n), |_| rng.gen_range(0.0..10.0));
        let hankel = hankel_embed(segment.view(), k).unwrap();
        let tensor = hankel.values().to_owned();
        let back = fold_mode3(mode3_unfold(tensor.view()).view(), d, k).unwrap();
        assert!(
            tensor.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "trial {trial}: fold/unfold not exact"
        );
        for i in 0..d {
            for a in 0..k.saturating_sub(1) {
                for b in 0..hankel.num_windows().saturating_sub(1) {
                    assert_eq!(
                        tensor[(i, a + 1, b)],
                        tensor[(i, a, b + 1)],
                        "trial {trial}: anti-diagonal broken"
                    );
                }
            }
        }
    }
    println!("acceptance 9 (transform/embedding roundtrips, 1000 embeds): PASS");
}
