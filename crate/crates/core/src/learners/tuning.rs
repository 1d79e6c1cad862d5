//! Grid search over a spec's tuning grid with inner k-fold cross-validation.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use super::{FitContext, LearnerSpec};
use crate::censoring::{fit_censoring_km, ipcw_weights};
use crate::dataset::{fold_split, split_folds, SurvivalDataset};
use crate::error::{Error, Result};
use crate::rng::child_seed;

/// Every combination of the grid values (duplicates removed), most regularized first.
pub fn grid_points(spec: &LearnerSpec) -> Vec<BTreeMap<String, f64>> {
    let mut points = vec![BTreeMap::new()];
    for (key, values) in &spec.tuning_grid {
        let mut vals = values.clone();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v);
                    q
                })
            })
            .collect();
    }
    let order = spec.kind.regularization_order();
    points.sort_by(|a, b| {
        for &(key, larger_is_stronger) in order {
            let (x, y) = (a.get(key), b.get(key));
            if let (Some(x), Some(y)) = (x, y) {
                let c = if larger_is_stronger { y.total_cmp(x) } else { x.total_cmp(y) };
                if c.is_ne() {
                    return c;
                }
            }
        }
        // remaining keys: lexicographic, for a total deterministic order
        a.iter().map(|(_, v)| *v).collect::<Vec<_>>().partial_cmp(&b.iter().map(|(_, v)| *v).collect::<Vec<_>>()).unwrap()
    });
    points
}

fn apply_point(spec: &LearnerSpec, point: &BTreeMap<String, f64>) -> LearnerSpec {
    let mut out = spec.clone();
    out.tuning_grid.clear();
    for (k, v) in point {
        out.hyperparameters.insert(k.clone(), *v);
    }
    out
}

/// Pick hyperparameters from `spec.tuning_grid` by inner cross-validated loss
/// at `ctx.tau`. Ties go to the more regularized point. A grid point whose fit
/// fails on more than half of the inner folds is disqualified.
pub fn tune_hyperparameters(spec: &LearnerSpec, data: &SurvivalDataset, ctx: &FitContext, seed: u64) -> Result<LearnerSpec> {
    if spec.tuning_grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no tuning grid", spec.kind)));
    }
    spec.validate()?;
    let points = grid_points(spec);
    if points.len() == 1 {
        return Ok(apply_point(spec, &points[0]));
    }
    let k = ctx.inner_folds;
    let folds = split_folds(data, k, child_seed(seed, 0x7475_6e65))?;
    let censoring = fit_censoring_km(data);
    let weights = ipcw_weights(&censoring, data, ctx.tau, ctx.weight_floor)?;

    let results: Vec<std::result::Result<f64, String>> = points
        .par_iter()
        .map(|point| {
            let candidate = apply_point(spec, point);
            let mut risk = vec![f64::NAN; data.n()];
            let mut failures = 0;
            let mut last_error = String::new();
            for f in 0..k {
                let (train, test) = fold_split(&folds, f);
                let fitted = candidate.fit(&data.subset(&train), child_seed(seed, f as u64 + 1));
                let pred = fitted.and_then(|m| m.predict_risk(data.subset(&test).covariates(), ctx.tau));
                match pred {
                    Ok(r) => {
                        for (&i, v) in test.iter().zip(r) {
                            risk[i] = v;
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        last_error = e.to_string();
                    }
                }
            }
            if 2 * failures > k {
                return Err(format!("{point:?}: failed on {failures}/{k} folds ({last_error})"));
            }
            let keep: Vec<usize> = (0..data.n()).filter(|&i| risk[i].is_finite()).collect();
            let r: Vec<f64> = keep.iter().map(|&i| risk[i]).collect();
            ctx.loss.evaluate(&r, &weights.subset(&keep)).map_err(|e| format!("{point:?}: {e}"))
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut failures = Vec::new();
    for (idx, res) in results.into_iter().enumerate() {
        match res {
            Ok(loss) if loss.is_finite() => {
                if best.map_or(true, |(_, b)| loss < b) {
                    best = Some((idx, loss));
                }
            }
            Ok(loss) => failures.push(format!("{:?}: non-finite loss {loss}", points[idx])),
            Err(msg) => {
                warn!("{}: grid point disqualified: {msg}", spec.kind);
                failures.push(msg);
            }
        }
    }
    match best {
        Some((idx, _)) => Ok(apply_point(spec, &points[idx])),
        None => Err(Error::AllLearnersFailed(
            failures.into_iter().map(|m| format!("{} tuning: {m}", spec.kind)).collect(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::super::LearnerKind;
    use super::*;

    #[test]
    fn grid_is_ordered_by_regularization() {
        let spec = LearnerSpec::new(LearnerKind::ElasticnetCox)
            .with_grid("lambda", vec![0.01, 0.1, 0.01])
            .with_grid("alpha", vec![0.5, 1.0]);
        let pts = grid_points(&spec);
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[0]["lambda"], pts[0]["alpha"]), (0.1, 1.0));
        assert_eq!((pts[1]["lambda"], pts[1]["alpha"]), (0.1, 0.5));
        assert_eq!((pts[3]["lambda"], pts[3]["alpha"]), (0.01, 0.5));
    }
}
