//! Random survival forest: bootstrap trees grown with the log-rank splitting
//! rule, Nelson–Aalen cumulative hazards in the terminal nodes, and ensemble
//! survival `exp(-mean_b H_b(t | x))`.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ph::CumulativeHazard;
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub ntree: usize,
    pub mtry: usize,
    /// Minimum number of (in-bag) subjects in each terminal node.
    pub nodesize: usize,
    /// Random candidate thresholds per feature; 0 tries every observed value.
    pub nsplit: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { ntree: 500, mtry: 3, nodesize: 20, nsplit: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { hazard: CumulativeHazard },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> &CumulativeHazard {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split { feature, threshold, left, right } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { hazard } => return hazard,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestFit {
    pub trees: Vec<Tree>,
}

impl ForestFit {
    pub fn cumulative_hazard(&self, x: &DMatrix<f64>, t: f64) -> Vec<f64> {
        let nt = self.trees.len() as f64;
        (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.trees.iter().map(|tree| tree.leaf_for(&row).eval(t)).sum::<f64>() / nt
            })
            .collect()
    }

    pub fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Vec<f64> {
        if t <= 0.0 {
            return vec![1.0; x.nrows()];
        }
        self.cumulative_hazard(x, t).into_iter().map(|h| (-h).exp()).collect()
    }
}

/// The in-bag sample of tree `tree` (indices drawn with replacement).
pub fn bootstrap_sample(n: usize, seed: u64, tree: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, tree as u64);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Nelson–Aalen estimate over the given (possibly repeated) subjects.
pub fn nelson_aalen(times: &[f64], events: &[bool], members: &[usize]) -> CumulativeHazard {
    let mut sorted: Vec<usize> = members.to_vec();
    sorted.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = CumulativeHazard { times: Vec::new(), cumhaz: Vec::new() };
    let mut at_risk = sorted.len();
    let mut h = 0.0;
    let mut pos = 0;
    while pos < sorted.len() {
        let t = times[sorted[pos]];
        let mut end = pos;
        let mut d = 0usize;
        while end < sorted.len() && times[sorted[end]] == t {
            if events[sorted[end]] {
                d += 1;
            }
            end += 1;
        }
        if d > 0 {
            h += d as f64 / at_risk as f64;
            out.times.push(t);
            out.cumhaz.push(h);
        }
        at_risk -= end - pos;
        pos = end;
    }
    out
}

/// Standardized log-rank statistic (squared) for a left/right partition of
/// `members`, which must be sorted by time.
fn log_rank(times: &[f64], events: &[bool], members: &[usize], left: &[bool]) -> f64 {
    let m = members.len();
    let n_left = left.iter().filter(|&&l| l).count();
    let mut at_risk = m as f64;
    let mut at_risk_left = n_left as f64;
    let mut num = 0.0;
    let mut var = 0.0;
    let mut pos = 0;
    while pos < m {
        let t = times[members[pos]];
        let mut end = pos;
        let (mut d, mut d_left, mut leave, mut leave_left) = (0.0, 0.0, 0.0, 0.0);
        while end < m && times[members[end]] == t {
            let is_left = left[end];
            if events[members[end]] {
                d += 1.0;
                if is_left {
                    d_left += 1.0;
                }
            }
            leave += 1.0;
            if is_left {
                leave_left += 1.0;
            }
            end += 1;
        }
        if d > 0.0 {
            let frac = at_risk_left / at_risk;
            num += d_left - d * frac;
            if at_risk > 1.0 {
                var += d * frac * (1.0 - frac) * (at_risk - d) / (at_risk - 1.0);
            }
        }
        at_risk -= leave;
        at_risk_left -= leave_left;
        pos = end;
    }
    if var > 0.0 {
        num * num / var
    } else {
        0.0
    }
}

fn grow_tree(data: &SurvivalDataset, cfg: &ForestConfig, seed: u64, tree_index: usize) -> Tree {
    let times = data.times();
    let events = data.events();
    let x = data.covariates();
    let p = data.p();
    let mut inbag = bootstrap_sample(data.n(), seed, tree_index);
    inbag.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
    // split decisions use a separate stream from the bootstrap draw
    let mut rng = rng::stream(rng::child_seed(seed, 1), tree_index as u64);

    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, members sorted by time)
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, inbag)];
    nodes.push(Node::Leaf { hazard: CumulativeHazard { times: vec![], cumhaz: vec![] } });
    while let Some((slot, members)) = stack.pop() {
        let m = members.len();
        let has_event = members.iter().any(|&i| events[i]);
        let mut best: Option<(f64, usize, f64)> = None;
        if has_event && m >= 2 * cfg.nodesize && p > 0 {
            let features = sample(&mut rng, p, cfg.mtry.min(p));
            let mut left = vec![false; m];
            for feature in features.iter() {
                let mut values: Vec<f64> = members.iter().map(|&i| x[(i, feature)]).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                if values.len() < 2 {
                    continue;
                }
                // thresholds are observed values except the largest (x <= thr goes left)
                let candidates: Vec<f64> = if cfg.nsplit == 0 || values.len() - 1 <= cfg.nsplit {
                    values[..values.len() - 1].to_vec()
                } else {
                    let mut picks: Vec<usize> = sample(&mut rng, values.len() - 1, cfg.nsplit).into_vec();
                    picks.sort_unstable();
                    picks.into_iter().map(|k| values[k]).collect()
                };
                for thr in candidates {
                    let mut n_left = 0;
                    for (slot_l, &i) in left.iter_mut().zip(&members) {
                        *slot_l = x[(i, feature)] <= thr;
                        n_left += usize::from(*slot_l);
                    }
                    if n_left < cfg.nodesize || m - n_left < cfg.nodesize {
                        continue;
                    }
                    let stat = log_rank(times, events, &members, &left);
                    if stat > best.map_or(0.0, |b| b.0) {
                        best = Some((stat, feature, thr));
                    }
                }
            }
        }
        match best {
            Some((_, feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| x[(i, feature)] <= threshold);
                let left_slot = nodes.len();
                nodes.push(Node::Leaf { hazard: CumulativeHazard { times: vec![], cumhaz: vec![] } });
                let right_slot = nodes.len();
                nodes.push(Node::Leaf { hazard: CumulativeHazard { times: vec![], cumhaz: vec![] } });
                nodes[slot] = Node::Split { feature, threshold, left: left_slot, right: right_slot };
                stack.push((right_slot, r));
                stack.push((left_slot, l));
            }
            None => {
                nodes[slot] = Node::Leaf { hazard: nelson_aalen(times, events, &members) };
            }
        }
    }
    Tree { nodes }
}

pub fn fit_random_survival_forest(data: &SurvivalDataset, cfg: &ForestConfig, seed: u64) -> Result<ForestFit> {
    if cfg.ntree == 0 {
        return Err(Error::InvalidArgument("ntree must be at least 1".into()));
    }
    if cfg.nodesize == 0 {
        return Err(Error::InvalidArgument("nodesize must be at least 1".into()));
    }
    if cfg.mtry == 0 || cfg.mtry > data.p() {
        return Err(Error::InvalidArgument(format!("mtry must lie in [1, p={}], got {}", data.p(), cfg.mtry)));
    }
    let trees = (0..cfg.ntree).into_par_iter().map(|b| grow_tree(data, cfg, seed, b)).collect();
    Ok(ForestFit { trees })
}
