mod common;

use common::random_censored;
use nalgebra::DMatrix;
use proptest::prelude::*;
use survsl_core::censoring::{fit_censoring_km, ipcw_weights, IpcwWeights, DEFAULT_WEIGHT_FLOOR};
use survsl_core::learners::{LearnerKind, LearnerSpec};
use survsl_core::losses::LossKind;
use survsl_core::rng;
use survsl_core::superlearner::{
    combine_risks, fit_super_learner, optimize_weights, ScreeningConfig, ScreeningMode, SuperLearnerConfig, SuperLearnerModel,
};
use rand::Rng;

fn stacking_instance(seed: u64) -> (DMatrix<f64>, IpcwWeights) {
    let d = random_censored(150, 1, &[1.0], 0.5, seed);
    let w = ipcw_weights(&fit_censoring_km(&d), &d, 0.5, DEFAULT_WEIGHT_FLOOR).unwrap();
    let mut r = rng::seeded(seed + 1000);
    let x = d.covariates().column(0).clone_owned();
    let oof = DMatrix::from_fn(d.n(), 3, |i, k| {
        let noise: f64 = r.gen_range(-1.0..1.0) * (k as f64 + 0.5);
        survsl_core::numeric::inv_logit(-1.0 + x[i] * (1.0 - 0.3 * k as f64) + noise)
    });
    (oof, w)
}

fn grid_loss(oof: &DMatrix<f64>, w: &IpcwWeights, loss: LossKind, step: usize) -> f64 {
    let cols: Vec<Vec<f64>> = (0..3).map(|k| oof.column(k).iter().copied().collect()).collect();
    let mut best = f64::INFINITY;
    for a in 0..=step {
        for b in 0..=(step - a) {
            let wt = [a as f64 / step as f64, b as f64 / step as f64, (step - a - b) as f64 / step as f64];
            let r = combine_risks(&cols, &wt).unwrap();
            best = best.min(loss.evaluate(&r, w).unwrap());
        }
    }
    best
}

#[test]
fn weights_reach_grid_search_optimum() {
    for seed in 0..4 {
        let (oof, w) = stacking_instance(seed);
        for loss in [LossKind::IpcwBrier, LossKind::NegativeBinomialLoglik] {
            let fit = optimize_weights(&oof, loss, &w).unwrap();
            assert!(fit.loss <= grid_loss(&oof, &w, loss, 50) + 1e-4, "{loss:?} seed {seed}");
            assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn auc_weights_reach_grid_search_optimum() {
    let (oof, w) = stacking_instance(9);
    let fit = optimize_weights(&oof, LossKind::AurocT, &w).unwrap();
    assert!(fit.loss <= grid_loss(&oof, &w, LossKind::AurocT, 40) + 1e-4);
}

fn small_pool() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::new(LearnerKind::CoxMainTerms),
        LearnerSpec::new(LearnerKind::WeibullAft),
        LearnerSpec::new(LearnerKind::RandomSurvivalForest).with("ntree", 20.0),
    ]
}

fn cfg(loss: LossKind, seed: u64) -> SuperLearnerConfig {
    SuperLearnerConfig { loss, k_folds: 4, inner_folds: 3, ..SuperLearnerConfig::new(0.6, seed) }
}

#[test]
fn fit_reports_vertex_dominance_and_simplex_weights() {
    let d = random_censored(400, 3, &[0.7, -0.4, 0.0], 0.4, 17);
    for loss in [LossKind::IpcwBrier, LossKind::NegativeBinomialLoglik, LossKind::AurocT] {
        let m = fit_super_learner(&small_pool(), &d, &cfg(loss, 2)).unwrap();
        let best = m.cv_report.candidates.iter().map(|c| c.cv_loss).fold(f64::INFINITY, f64::min);
        assert!(m.cv_report.ensemble_cv_loss <= best + 1e-9, "{loss:?}");
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.weights.iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn fit_is_deterministic_and_round_trips() {
    let d = random_censored(300, 2, &[0.5, 0.5], 0.4, 23);
    let a = fit_super_learner(&small_pool(), &d, &cfg(LossKind::IpcwBrier, 5)).unwrap();
    let b = fit_super_learner(&small_pool(), &d, &cfg(LossKind::IpcwBrier, 5)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let back = SuperLearnerModel::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), a.to_json().unwrap());
    assert_eq!(back.predict_risk(d.covariates(), 0.6).unwrap(), a.predict_risk(d.covariates(), 0.6).unwrap());
}

#[test]
fn single_learner_gets_full_weight() {
    let d = random_censored(200, 2, &[0.5, 0.5], 0.4, 1);
    let m = fit_super_learner(&[LearnerSpec::new(LearnerKind::CoxMainTerms)], &d, &cfg(LossKind::IpcwBrier, 1)).unwrap();
    assert_eq!(m.weights, vec![1.0]);
}

#[test]
fn screening_keeps_signal_columns() {
    let d = random_censored(600, 5, &[1.0, 0.0, 0.0, 0.0, -1.0], 0.3, 31);
    for mode in [ScreeningMode::Once, ScreeningMode::WithinFolds] {
        let c = SuperLearnerConfig {
            screening: Some(ScreeningConfig { alpha: 1.0, lambda: 0.05, mode }),
            ..cfg(LossKind::IpcwBrier, 3)
        };
        let m = fit_super_learner(&[LearnerSpec::new(LearnerKind::CoxMainTerms)], &d, &c).unwrap();
        let kept = &m.screening.as_ref().unwrap().retained;
        assert!(kept.contains(&"x1".to_string()) && kept.contains(&"x5".to_string()), "{kept:?}");
    }
}

#[test]
fn tuned_learner_picks_from_grid() {
    let d = random_censored(300, 4, &[0.8, 0.0, 0.0, 0.0], 0.3, 6);
    let spec = LearnerSpec::new(LearnerKind::ElasticnetCox).with_grid("lambda", vec![0.001, 0.05, 5.0]);
    let m = fit_super_learner(&[spec], &d, &cfg(LossKind::IpcwBrier, 4)).unwrap();
    let lam = m.candidates[0].hyperparameters["lambda"];
    assert!(lam == 0.001 || lam == 0.05, "chose {lam}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Raising one learner's risk never lowers the combined risk.
    #[test]
    fn combination_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, bump in 0.0f64..0.5, w0 in 0.0f64..1.0) {
        let wt = [w0, 1.0 - w0];
        let base = combine_risks(&[vec![a], vec![b]], &wt).unwrap()[0];
        let up = combine_risks(&[vec![(a + bump).min(1.0)], vec![b]], &wt).unwrap()[0];
        prop_assert!(up >= base - 1e-15);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn combination_rejects_off_simplex_weights(w0 in 1.01f64..3.0) {
        prop_assert!(combine_risks(&[vec![0.2], vec![0.4]], &[w0, 1.0 - w0]).is_err());
    }
}
