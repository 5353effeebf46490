//! Level-set growing training loop for [`LyapunovNet`].

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lipschitz_from_norms, lipschitz_norm_sensitivity, LyapunovNet, NetCandidate};
use crate::certificate::{certify_roa, CertifyOptions, RoaEstimate, StateGrid, StepMap};
use crate::linalg;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Target set per epoch is `{x : v(x) < level_multiplier · c}`.
    pub level_multiplier: f64,
    /// Cap on SGD steps per epoch.
    pub max_steps_per_epoch: usize,
    /// Gradient steps are rescaled to at most this Euclidean norm.
    pub max_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 50,
            batch_size: 256,
            seed: 0,
            level_multiplier: 1.5,
            max_steps_per_epoch: 16,
            max_grad_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(self.level_multiplier > 1.0) || !self.level_multiplier.is_finite() {
            return Err(Error::invalid("level_multiplier", "must exceed 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.max_steps_per_epoch == 0 {
            return Err(Error::invalid("max_steps_per_epoch", "must be at least 1"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::invalid("max_grad_norm", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Net with the largest certified size over all recorded epochs.
    pub net: LyapunovNet,
    pub estimate: RoaEstimate,
    /// Certified size before training (entry 0) and after each epoch.
    pub history: Vec<usize>,
    pub best_epoch: usize,
}

fn certify_net(net: &LyapunovNet, step: &dyn StepMap, grid: &StateGrid, opts: &CertifyOptions) -> Result<RoaEstimate> {
    let cand = NetCandidate::new(net, step)?;
    certify_roa(&cand, step, grid, opts)
}

/// Grows the certified level set of `net` for the closed loop `step`.
///
/// Each epoch minimizes, by mini-batch SGD over grid states in the expanded
/// target set, the hinge `max(0, v(step(x)) − v(x) + L·mu) / v(x)`. Dividing
/// by `v(x)` removes the trivial descent direction of shrinking the net.
pub fn train(
    net: LyapunovNet,
    step: &dyn StepMap,
    grid: &StateGrid,
    cfg: &TrainConfig,
    opts: &CertifyOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = grid.dim();
    if net.input_dim() != n || step.dim() != n {
        return Err(Error::dim("net, step and grid dimensions differ"));
    }
    let mu = grid.mu();
    let lip = step.lipschitz();
    let r0 = opts.exemption.resolve(grid);

    let mut net = net;
    let mut estimate = certify_net(&net, step, grid, opts)?;
    let mut history = vec![estimate.size_cells];
    let mut best = (net.clone(), estimate.clone(), 0usize);

    let mut x = vec![0.0; n];
    let mut sx = vec![0.0; n];
    for epoch in 1..=cfg.epochs {
        // Target set: non-exempt cells inside the expanded level.
        let level = cfg.level_multiplier * estimate.threshold_c;
        let mut ranked: Vec<(f64, usize)> = Vec::new();
        for idx in 0..grid.len() {
            grid.center(idx, &mut x);
            if linalg::euclid(&x) > r0 {
                ranked.push((net.eval(&x), idx));
            }
        }
        let mut target: Vec<usize> = ranked.iter().filter(|(v, _)| *v < level).map(|(_, i)| *i).collect();
        if target.is_empty() {
            ranked.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            target = ranked.iter().take(cfg.batch_size).map(|(_, i)| *i).collect();
        }
        if target.is_empty() {
            break;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        target.shuffle(&mut rng);

        for batch in target.chunks(cfg.batch_size).take(cfg.max_steps_per_epoch) {
            let norms = net.layer_norms();
            let mut acc = net.zero_weight_grads();
            let mut norm_coef = vec![0.0; norms.len()];
            let mut active = 0usize;
            for &idx in batch {
                grid.center(idx, &mut x);
                step.apply(&x, &mut sx);
                let rho = linalg::euclid(&x) + mu;
                let v = net.eval(&x);
                if !(v > 0.0) {
                    continue;
                }
                let margin = net.eval(&sx) - v + lipschitz_from_norms(net.activation(), &norms, lip, rho) * mu;
                if !(margin > 0.0) {
                    continue;
                }
                active += 1;
                net.backprop(&sx, 1.0 / v, Some(&mut acc));
                net.backprop(&x, -1.0 / v - margin / (v * v), Some(&mut acc));
                for (c, s) in norm_coef
                    .iter_mut()
                    .zip(lipschitz_norm_sensitivity(net.activation(), &norms, lip, rho))
                {
                    *c += s * mu / v;
                }
            }
            if active == 0 {
                continue;
            }
            for (l, w) in net.weights().iter().enumerate() {
                if norm_coef[l] != 0.0 {
                    let (_, u, vr) = linalg::top_singular_triplet(w);
                    acc[l] += (&u * vr.transpose()) * norm_coef[l];
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let mut grad = net.weight_grads_to_params(&acc);
            let gnorm = linalg::euclid(&grad) * scale;
            let clip = if gnorm > cfg.max_grad_norm {
                cfg.max_grad_norm / gnorm
            } else {
                1.0
            };
            for g in grad.iter_mut() {
                *g *= scale * clip;
            }
            let params: Vec<f64> = net
                .params()
                .iter()
                .zip(&grad)
                .map(|(p, g)| p - cfg.learning_rate * g)
                .collect();
            if params.iter().any(|p| !p.is_finite()) {
                break;
            }
            net.set_params(&params)?;
        }

        estimate = certify_net(&net, step, grid, opts)?;
        history.push(estimate.size_cells);
        if estimate.size_cells > best.1.size_cells {
            best = (net.clone(), estimate.clone(), epoch);
        }
    }
    let (net, estimate, best_epoch) = best;
    Ok(TrainOutcome {
        net,
        estimate,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::{build_grid, ExemptionRadius, LinearStep};
    use crate::linalg::Matrix;
    use crate::nn::Activation;

    fn setup() -> (LinearStep, StateGrid) {
        let a = Matrix::from_row_slice(2, 2, &[0.99, 0.02, -0.03, 0.97]);
        (
            LinearStep::new(a).unwrap(),
            build_grid(&[-1.0, -1.0], &[1.0, 1.0], &[41, 41]).unwrap(),
        )
    }

    #[test]
    fn training_never_returns_worse_than_untrained() {
        let (step, grid) = setup();
        let net = LyapunovNet::init(&[2, 8, 8], 1e-2, Activation::Tanh, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 64,
            ..TrainConfig::default()
        };
        let opts = CertifyOptions {
            exemption: ExemptionRadius::Absolute(0.1),
        };
        let out = train(net, &step, &grid, &cfg, &opts).unwrap();
        assert_eq!(out.history.len(), 6);
        assert!(out.estimate.size_cells >= out.history[0]);
        assert_eq!(out.estimate.size_cells, *out.history.iter().max().unwrap());
        assert_eq!(out.history[out.best_epoch], out.estimate.size_cells);
    }

    #[test]
    fn training_is_deterministic() {
        let (step, grid) = setup();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 32,
            seed: 9,
            ..TrainConfig::default()
        };
        let opts = CertifyOptions::default();
        let run = || {
            let net = LyapunovNet::init(&[2, 4, 4], 1e-2, Activation::Tanh, 1).unwrap();
            train(net, &step, &grid, &cfg, &opts).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            level_multiplier: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
