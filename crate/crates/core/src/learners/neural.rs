//! One-hidden-layer survival network: `g(x) = v . tanh(W x + b)` is a log
//! relative risk trained on the negative Cox partial likelihood (Breslow ties,
//! risk sets within each mini-batch) plus L2 weight decay on `W` and `v`,
//! using Adam. The baseline hazard is the Breslow estimator on the full
//! training data.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ph::{self, CumulativeHazard};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::numeric::Standardizer;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub n_nodes: usize,
    pub decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Start with zero hidden-to-output weights (constant risk at initialization).
    pub zero_output_init: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { n_nodes: 20, decay: 0.1, batch_size: 256, epochs: 1, learning_rate: 0.01, zero_output_init: false }
    }
}

/// Network parameters. `hidden` is `n_nodes x p`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub p: usize,
    pub hidden: Vec<f64>,
    pub bias: Vec<f64>,
    pub output: Vec<f64>,
}

impl Network {
    pub fn n_nodes(&self) -> usize {
        self.bias.len()
    }

    pub fn n_params(&self) -> usize {
        self.hidden.len() + self.bias.len() + self.output.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.hidden.clone();
        v.extend(&self.bias);
        v.extend(&self.output);
        v
    }

    pub fn from_flat(p: usize, n_nodes: usize, flat: &[f64]) -> Self {
        let h = n_nodes * p;
        Self {
            p,
            hidden: flat[..h].to_vec(),
            bias: flat[h..h + n_nodes].to_vec(),
            output: flat[h + n_nodes..h + 2 * n_nodes].to_vec(),
        }
    }

    fn activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|k| {
                let a: f64 = self.bias[k] + (0..self.p).map(|j| self.hidden[k * self.p + j] * x[j]).sum::<f64>();
                a.tanh()
            })
            .collect()
    }

    /// Log relative risk for one (standardized) covariate row.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.activations(x).iter().zip(&self.output).map(|(h, v)| h * v).sum()
    }

    /// Mini-batch objective and its gradient (flat, same layout as [`Network::to_flat`]):
    /// `-(1/|B|) l_B(g) + (decay / 2) (|W|^2 + |v|^2)`.
    pub fn batch_loss_and_gradient(&self, rows: &[Vec<f64>], times: &[f64], events: &[bool], decay: f64) -> (f64, Vec<f64>) {
        let m = rows.len() as f64;
        let acts: Vec<Vec<f64>> = rows.iter().map(|r| self.activations(r)).collect();
        let g: Vec<f64> = acts.iter().map(|h| h.iter().zip(&self.output).map(|(a, v)| a * v).sum()).collect();
        let (ll, dg, _) = ph::eta_derivatives(times, events, &g);
        let penalty = 0.5 * decay * (self.hidden.iter().map(|w| w * w).sum::<f64>() + self.output.iter().map(|w| w * w).sum::<f64>());
        let loss = -ll / m + penalty;
        let nn = self.n_nodes();
        let h_len = nn * self.p;
        let mut grad = vec![0.0; self.n_params()];
        for (i, row) in rows.iter().enumerate() {
            // d loss / d g_i
            let gi = -dg[i] / m;
            if gi == 0.0 {
                continue;
            }
            for k in 0..nn {
                let hk = acts[i][k];
                grad[h_len + nn + k] += gi * hk;
                let da = gi * self.output[k] * (1.0 - hk * hk);
                grad[h_len + k] += da;
                for j in 0..self.p {
                    grad[k * self.p + j] += da * row[j];
                }
            }
        }
        for (gw, w) in grad[..h_len].iter_mut().zip(&self.hidden) {
            *gw += decay * w;
        }
        for (gv, v) in grad[h_len + nn..].iter_mut().zip(&self.output) {
            *gv += decay * v;
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFit {
    pub scaler: Standardizer,
    pub network: Network,
    pub baseline: CumulativeHazard,
    pub final_loss: f64,
}

impl NetworkFit {
    pub fn log_risk(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let z = self.scaler.apply(x);
        (0..z.nrows())
            .map(|i| {
                let row: Vec<f64> = z.row(i).iter().copied().collect();
                self.network.forward(&row)
            })
            .collect()
    }

    pub fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Vec<f64> {
        if t <= 0.0 {
            return vec![1.0; x.nrows()];
        }
        let h0 = self.baseline.eval(t);
        self.log_risk(x).into_iter().map(|g| (-h0 * g.exp()).exp()).collect()
    }
}

pub fn fit_survival_nn(data: &SurvivalDataset, cfg: &NetworkConfig, seed: u64) -> Result<NetworkFit> {
    if cfg.n_nodes == 0 {
        return Err(Error::InvalidArgument("n_nodes must be at least 1".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    if !(cfg.decay >= 0.0) || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("decay must be nonnegative and learning_rate positive".into()));
    }
    if data.n_events() == 0 {
        return Err(Error::InsufficientData("no events observed".into()));
    }
    let scaler = Standardizer::fit(data.covariates());
    let z = scaler.apply(data.covariates());
    let (n, p) = z.shape();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| z.row(i).iter().copied().collect()).collect();
    let mut rng = rng::seeded(seed);
    let nn = cfg.n_nodes;
    let hidden_bound = (6.0 / (p + nn) as f64).sqrt();
    let output_bound = (6.0 / (nn + 1) as f64).sqrt();
    let mut net = Network {
        p,
        hidden: (0..nn * p).map(|_| rng.gen_range(-hidden_bound..hidden_bound)).collect(),
        bias: vec![0.0; nn],
        output: (0..nn)
            .map(|_| if cfg.zero_output_init { 0.0 } else { rng.gen_range(-output_bound..output_bound) })
            .collect(),
    };

    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut params = net.to_flat();
    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let b_rows: Vec<Vec<f64>> = batch.iter().map(|&i| rows[i].clone()).collect();
            let b_times: Vec<f64> = batch.iter().map(|&i| data.times()[i]).collect();
            let b_events: Vec<bool> = batch.iter().map(|&i| data.events()[i]).collect();
            let (loss, grad) = net.batch_loss_and_gradient(&b_rows, &b_times, &b_events, cfg.decay);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {epoch}; try a smaller learning_rate (currently {})",
                    cfg.learning_rate
                )));
            }
            last_loss = loss;
            step += 1;
            let c1 = 1.0 - beta1.powi(step);
            let c2 = 1.0 - beta2.powi(step);
            for k in 0..params.len() {
                m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
                m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
                params[k] -= cfg.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
            }
            net = Network::from_flat(p, nn, &params);
        }
    }
    let g: Vec<f64> = rows.iter().map(|r| net.forward(r)).collect();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("network produced non-finite risk scores".into()));
    }
    let baseline = ph::breslow(data.times(), data.events(), &g, None);
    Ok(NetworkFit { scaler, network: net, baseline, final_loss: last_loss })
}
