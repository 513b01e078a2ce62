use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{loss, loss_and_grads, ModelError, ModelParams};
use crate::slottok::{slot_offsets, Token};

/// AdamW with linear warmup and cosine decay, on random fixed-length windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    /// Windows per optimizer step.
    pub batch_windows: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    /// Final learning rate as a fraction of the peak.
    pub min_lr_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; zero disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    /// Leading fraction of the stream used for training; the rest validates.
    pub train_fraction: f64,
    pub eval_interval: usize,
    pub val_windows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_windows: 4,
            learning_rate: 1e-3,
            warmup_steps: 100,
            min_lr_ratio: 0.1,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: 1.0,
            seed: 0,
            train_fraction: 0.8,
            eval_interval: 100,
            val_windows: 8,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.min_lr_ratio + (1.0 - self.min_lr_ratio) * cosine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen.
    pub params: ModelParams<f32>,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub history: Vec<LossRecord>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss {
        step: usize,
        /// Parameters before the failing update.
        last_good: Box<ModelParams<f32>>,
    },
}

/// Token index splitting `tokens` into train and validation parts, snapped to
/// the slot boundary nearest to `fraction` of the length.
pub fn split_index(tokens: &[Token], fraction: f64) -> usize {
    let target = (tokens.len() as f64 * fraction).round() as usize;
    slot_offsets(tokens)
        .into_iter()
        .min_by_key(|&o| o.abs_diff(target))
        .unwrap_or(0)
}

fn windows(stream: &[Token], starts: &[usize], len: usize) -> (Vec<Vec<Token>>, Vec<Vec<Token>>) {
    starts
        .iter()
        .map(|&s| {
            (
                stream[s..s + len].to_vec(),
                stream[s + 1..s + len + 1].to_vec(),
            )
        })
        .unzip()
}

/// Trains `init` on `tokens`, calling `report` after every logged step.
pub fn train(
    init: ModelParams<f32>,
    tokens: &[Token],
    cfg: &TrainConfig,
    report: &mut dyn FnMut(&LossRecord),
) -> Result<TrainOutcome, TrainError> {
    let window = init.config.context_len;
    let split = split_index(tokens, cfg.train_fraction);
    let (train_part, val_part) = tokens.split_at(split);
    for part in [train_part, val_part] {
        if part.len() < window + 1 {
            return Err(ModelError::InsufficientData {
                tokens: part.len(),
                needed: window + 1,
            }
            .into());
        }
    }
    let val_span = val_part.len() - window - 1;
    let n_val = cfg.val_windows.max(1);
    let val_starts: Vec<usize> = (0..n_val)
        .map(|i| {
            if n_val == 1 {
                0
            } else {
                i * val_span / (n_val - 1)
            }
        })
        .collect();
    let (val_x, val_y) = windows(val_part, &val_starts, window);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init;
    let n = params.len();
    let (mut m, mut v) = (vec![0f64; n], vec![0f64; n]);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;

    for step in 0..cfg.steps {
        let starts: Vec<usize> = (0..cfg.batch_windows.max(1))
            .map(|_| rng.random_range(0..train_part.len() - window))
            .collect();
        let (xs, ys) = windows(train_part, &starts, window);
        let (train_loss, grads) = loss_and_grads(&params, &xs, &ys, Some(&mut rng))?;
        if !train_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteLoss {
                step,
                last_good: Box::new(params),
            });
        }

        let norm = grads
            .iter()
            .map(|&g| (g as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let clip = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            cfg.grad_clip / norm
        } else {
            1.0
        };
        let lr = cfg.lr_at(step);
        let before = params.clone();
        let t = (step + 1) as i32;
        let (bc1, bc2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        for i in 0..n {
            let g = grads[i] as f64 * clip;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.eps);
            let p = params.data[i] as f64;
            params.data[i] = (p - lr * (update + cfg.weight_decay * p)) as f32;
        }
        if !params.all_finite() {
            return Err(TrainError::NonFiniteLoss {
                step,
                last_good: Box::new(before),
            });
        }

        let last = step + 1 == cfg.steps;
        let val_loss = if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) || last {
            let l = loss(&params, &val_x, &val_y)?;
            if !l.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step,
                    last_good: Box::new(best.map_or(params, |b| b.2)),
                });
            }
            if best.as_ref().is_none_or(|b| l < b.0) {
                best = Some((l, step, params.clone()));
            }
            Some(l)
        } else {
            None
        };
        let record = LossRecord {
            step,
            train_loss,
            val_loss,
            lr,
        };
        report(&record);
        history.push(record);
    }

    let (best_val_loss, best_step, params) = match best {
        Some(b) => b,
        None => (loss(&params, &val_x, &val_y)?, 0, params),
    };
    Ok(TrainOutcome {
        params,
        best_step,
        best_val_loss,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nanoformer::ModelConfig;
    use crate::slottok::parse_tokens;

    fn periodic_stream(slots: usize) -> Vec<Token> {
        let mut out = Vec::new();
        for i in 0..slots {
            let d = (i % 10) as u8;
            let text = if d.is_multiple_of(2) {
                format!("{d:X} : PDCCH-DCI1_0 0 1 , PDSCH 0 1 [ 0 , 6 0 ] ( 1 , E ) ;")
            } else {
                format!("{d:X} : EMPTY ;")
            };
            out.extend(parse_tokens(&text).unwrap());
        }
        out
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let cfg = TrainConfig {
            steps: 1000,
            warmup_steps: 100,
            ..TrainConfig::default()
        };
        assert!((cfg.lr_at(0) - 1e-5).abs() < 1e-12);
        assert!((cfg.lr_at(99) - 1e-3).abs() < 1e-12);
        assert!((cfg.lr_at(100) - 1e-3).abs() < 1e-12);
        assert!((cfg.lr_at(999) - 1e-4).abs() < 1e-6);
        assert!(cfg.lr_at(500) < cfg.lr_at(300));
    }

    #[test]
    fn split_snaps_to_slot_boundary() {
        let s = periodic_stream(10);
        let i = split_index(&s, 0.8);
        assert_eq!(s[i - 1], Token::SEMICOLON);
    }

    #[test]
    fn loss_falls_on_periodic_stream() {
        let stream = periodic_stream(400);
        let init = ModelParams::init(ModelConfig::default().with_context(32), 0).unwrap();
        let cfg = TrainConfig {
            steps: 300,
            batch_windows: 2,
            learning_rate: 1e-2,
            warmup_steps: 20,
            eval_interval: 50,
            val_windows: 4,
            ..TrainConfig::default()
        };
        let mut calls = 0;
        let out = train(init, &stream, &cfg, &mut |_| calls += 1).unwrap();
        assert_eq!(calls, 300);
        let first = out.history[0].val_loss.unwrap();
        assert!(
            out.best_val_loss < first * 0.5,
            "{first} -> {}",
            out.best_val_loss
        );
        let vals: Vec<f64> = out.history.iter().filter_map(|r| r.val_loss).collect();
        assert_eq!(vals.len(), 7);
        assert_eq!(
            out.best_val_loss,
            vals.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }

    #[test]
    fn short_stream_is_rejected() {
        let init = ModelParams::init(ModelConfig::default().with_context(64), 0).unwrap();
        let err = train(
            init,
            &periodic_stream(5),
            &TrainConfig::default(),
            &mut |_| {},
        );
        assert!(matches!(
            err,
            Err(TrainError::Model(ModelError::InsufficientData { .. }))
        ));
    }

    #[test]
    fn divergence_returns_last_good_parameters() {
        let init = ModelParams::init(ModelConfig::default().with_context(16), 0).unwrap();
        let cfg = TrainConfig {
            steps: 50,
            learning_rate: 1e30,
            warmup_steps: 0,
            grad_clip: 0.0,
            ..TrainConfig::default()
        };
        match train(init, &periodic_stream(100), &cfg, &mut |_| {}) {
            Err(TrainError::NonFiniteLoss { last_good, .. }) => assert!(last_good.all_finite()),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.best_step)),
        }
    }
}
