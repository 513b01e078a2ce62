use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Decoder, ModelError, ModelParams, Scalar};
use crate::slottok::{Token, VOCAB_SIZE};
use crate::synchk::{SlotGrammarState, TokenMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Multinomial,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Logits are divided by this before the softmax. Zero or below means greedy.
    pub temperature: f64,
    pub mode: SamplingMode,
    pub seed: u64,
    /// A slot that has not closed after this many tokens is abandoned.
    pub max_tokens_per_slot: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            temperature: 1.0,
            mode: SamplingMode::Multinomial,
            seed: 0,
            max_tokens_per_slot: 256,
        }
    }
}

/// Restricts which tokens may be sampled next.
pub trait MaskProvider {
    fn allowed(&self) -> TokenMask;
    fn advance(&mut self, token: Token);
}

impl MaskProvider for SlotGrammarState {
    fn allowed(&self) -> TokenMask {
        self.allowed_next()
    }

    fn advance(&mut self, token: Token) {
        if let Ok(next) = self.feed(token) {
            *self = next;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSlot {
    /// Generated tokens, ending with `;`.
    pub tokens: Vec<Token>,
    /// Model probabilities over the vocabulary at each step, before any
    /// masking or temperature.
    pub step_probabilities: Vec<[f32; VOCAB_SIZE]>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("context must be empty or end with ';'")]
    BadContext,
    #[error("mask allows no token at step {step}")]
    EmptyMask { step: usize },
    #[error("slot not closed after {} tokens", partial.len())]
    SlotOverflow { partial: Vec<Token> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Generates one slot after `context`, token by token, until `;`.
///
/// Contexts longer than the model window are truncated to their most recent
/// tokens. When the window fills during generation, the cache is rebuilt
/// from the most recent half window.
pub fn sample_slot<F: Scalar>(
    params: &ModelParams<F>,
    context: &[Token],
    cfg: &SamplerConfig,
    mut mask: Option<&mut dyn MaskProvider>,
) -> Result<SampledSlot, SampleError> {
    if context.last().is_some_and(|&t| t != Token::SEMICOLON) {
        return Err(SampleError::BadContext);
    }
    let window = params.config.context_len;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut decoder = Decoder::new(params);
    let mut logits: Option<Vec<F>> = if context.is_empty() {
        None
    } else {
        Some(decoder.feed(&context[context.len().saturating_sub(window)..])?)
    };
    let mut history: Vec<Token> = context.to_vec();
    let mut out = SampledSlot {
        tokens: Vec::new(),
        step_probabilities: Vec::new(),
    };

    loop {
        if out.tokens.len() == cfg.max_tokens_per_slot {
            return Err(SampleError::SlotOverflow {
                partial: out.tokens,
            });
        }
        let allowed = match mask.as_deref() {
            Some(m) => m.allowed(),
            None => TokenMask::all(),
        };
        if allowed.is_empty() {
            return Err(SampleError::EmptyMask {
                step: out.tokens.len(),
            });
        }
        let raw: Vec<f64> = match &logits {
            Some(l) => l.iter().map(|x| x.to_f64().unwrap()).collect(),
            None => vec![0.0; VOCAB_SIZE],
        };
        let mut probs = [0f32; VOCAB_SIZE];
        for (p, q) in probs.iter_mut().zip(softmax(&raw, 1.0)) {
            *p = q as f32;
        }
        out.step_probabilities.push(probs);

        let token = choose(&raw, &allowed, cfg, &mut rng);
        out.tokens.push(token);
        history.push(token);
        if let Some(m) = mask.as_deref_mut() {
            m.advance(token);
        }
        if token == Token::SEMICOLON {
            return Ok(out);
        }
        if decoder.is_full() {
            decoder.reset();
            let keep = (window / 2).max(1);
            logits = Some(decoder.feed(&history[history.len() - keep..])?);
        } else {
            logits = Some(decoder.step(token)?);
        }
    }
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|x| x / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn argmax_allowed(logits: &[f64], allowed: &TokenMask) -> Token {
    allowed
        .tokens()
        .max_by(|a, b| {
            logits[a.index()]
                .total_cmp(&logits[b.index()])
                .then(b.cmp(a))
        })
        .expect("mask is non-empty")
}

fn choose(logits: &[f64], allowed: &TokenMask, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Token {
    if cfg.mode == SamplingMode::Greedy || cfg.temperature <= 0.0 {
        return argmax_allowed(logits, allowed);
    }
    let probs = softmax(logits, cfg.temperature);
    let masked: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if allowed.as_slice()[i] { p } else { 0.0 })
        .collect();
    let total: f64 = masked.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return argmax_allowed(logits, allowed);
    }
    let mut r = rng.random::<f64>() * total;
    let mut last = None;
    for (i, &p) in masked.iter().enumerate() {
        if p > 0.0 {
            last = Some(i);
            if r < p {
                return Token::new(i as u8).unwrap();
            }
            r -= p;
        }
    }
    Token::new(last.unwrap() as u8).unwrap()
}
