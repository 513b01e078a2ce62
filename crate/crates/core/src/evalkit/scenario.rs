use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{channel_precision, relative_levenshtein, BoxStats, EvalError, PrecisionRow};
use crate::nanoformer::{sample_slot, ModelParams, SampleError, SamplerConfig};
use crate::slottok::{slot_offsets, Token};
use crate::synchk::{validate, SlotGrammarState, Violation};

/// Slots of context fed to the predictor; the slot after them is predicted.
pub const CONTEXT_SLOTS: usize = 10;
pub const MAX_CONTEXT_TOKENS: usize = 1024;

/// Produces the slot that follows `context` (which ends with `;`).
pub trait Predictor: Sync {
    fn predict(
        &self,
        context: &[Token],
        sampler: &SamplerConfig,
        checker: bool,
    ) -> Result<Prediction, SampleError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub tokens: Vec<Token>,
    /// The slot did not close within the token budget.
    pub overflow: bool,
}

/// A trained model; with the checker on, decoding is grammar-constrained.
pub struct ModelPredictor<'a>(pub &'a ModelParams<f32>);

impl Predictor for ModelPredictor<'_> {
    fn predict(
        &self,
        context: &[Token],
        sampler: &SamplerConfig,
        checker: bool,
    ) -> Result<Prediction, SampleError> {
        let mut state = SlotGrammarState::after_context(context);
        let mask = checker.then_some(&mut state as &mut dyn crate::nanoformer::MaskProvider);
        match sample_slot(self.0, context, sampler, mask) {
            Ok(s) => Ok(Prediction {
                tokens: s.tokens,
                overflow: false,
            }),
            Err(SampleError::SlotOverflow { partial }) => Ok(Prediction {
                tokens: partial,
                overflow: true,
            }),
            Err(e) => Err(e),
        }
    }
}

/// Baseline that always predicts an empty slot with the right slot digit.
pub struct EmptySlotPredictor;

impl Predictor for EmptySlotPredictor {
    fn predict(
        &self,
        context: &[Token],
        _: &SamplerConfig,
        _: bool,
    ) -> Result<Prediction, SampleError> {
        let digit = SlotGrammarState::after_context(context)
            .expected_slot_digit()
            .unwrap_or(0);
        Ok(Prediction {
            tokens: vec![
                Token::hex(digit),
                Token::COLON,
                Token::EMPTY,
                Token::SEMICOLON,
            ],
            overflow: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub checker: bool,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    /// Slot index (within the evaluated stream) of the first context slot.
    pub window_start: usize,
    pub sampler_seed: u64,
    pub reference: String,
    pub predicted: String,
    pub levenshtein: usize,
    pub reference_len: usize,
    pub relative: f64,
    pub overflow: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checker: bool,
    pub seed: u64,
    pub temperature: f64,
    pub n_samples: usize,
    pub levenshtein: BoxStats,
    pub relative_levenshtein: BoxStats,
    /// Samples whose prediction passed the grammar check.
    pub valid_fraction: f64,
    pub precision: Vec<PrecisionRow>,
    pub samples: Vec<SampleRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

/// Sampler seed of sample `index`; identical for checker on and off so the
/// two runs are paired.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

/// Samples `n_samples` windows of eleven consecutive slots from `stream`,
/// predicts the last slot from the first ten and scores the prediction.
pub fn evaluate_scenario(
    predictor: &dyn Predictor,
    stream: &[Token],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let offsets = slot_offsets(stream);
    let n_slots = offsets.len() - 1;
    let complete = stream.last() == Some(&Token::SEMICOLON);
    let usable = if complete {
        n_slots
    } else {
        n_slots.saturating_sub(1)
    };
    if usable < CONTEXT_SLOTS + 1 {
        return Err(EvalError::InsufficientData {
            slots: usable,
            needed: CONTEXT_SLOTS + 1,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<usize> = (0..cfg.n_samples)
        .map(|_| rng.random_range(0..=usable - CONTEXT_SLOTS - 1))
        .collect();

    let run = |index: usize| -> Result<(SampleRecord, Vec<Token>, Vec<Token>), EvalError> {
        let s = starts[index];
        let ctx_end = offsets[s + CONTEXT_SLOTS];
        let ctx_start = offsets[s].max(ctx_end.saturating_sub(MAX_CONTEXT_TOKENS));
        let context = &stream[ctx_start..ctx_end];
        let reference = stream[ctx_end..offsets[s + CONTEXT_SLOTS + 1]].to_vec();
        let sampler_seed = sample_seed(cfg.seed, index);
        let sampler = SamplerConfig {
            seed: sampler_seed,
            ..cfg.sampler
        };
        let pred = predictor.predict(context, &sampler, cfg.checker)?;
        let d = relative_levenshtein(&pred.tokens, &reference)?;
        let digit = reference[0].hex_value().unwrap_or(0);
        let record = SampleRecord {
            index,
            window_start: s,
            sampler_seed,
            reference: crate::slottok::render_tokens(&reference),
            predicted: crate::slottok::render_tokens(&pred.tokens),
            levenshtein: d.levenshtein,
            reference_len: d.reference_len,
            relative: d.relative(),
            overflow: pred.overflow,
            violations: validate(&pred.tokens, digit),
        };
        Ok((record, pred.tokens, reference))
    };

    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cfg.n_samples.max(1));
    let mut results: Vec<Option<Result<_, EvalError>>> = (0..cfg.n_samples).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = cfg.n_samples.div_ceil(threads).max(1);
        for (ci, slots) in results.chunks_mut(chunk).enumerate() {
            let run = &run;
            scope.spawn(move || {
                for (j, slot) in slots.iter_mut().enumerate() {
                    *slot = Some(run(ci * chunk + j));
                }
            });
        }
    });

    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut pairs = Vec::with_capacity(cfg.n_samples);
    for r in results {
        let (record, pred, reference) = r.expect("every sample ran")?;
        samples.push(record);
        pairs.push((pred, reference));
    }
    let lev: Vec<f64> = samples.iter().map(|s| s.levenshtein as f64).collect();
    let rel: Vec<f64> = samples.iter().map(|s| s.relative).collect();
    let empty = BoxStats {
        median: 0.0,
        lower_quartile: 0.0,
        upper_quartile: 0.0,
        lower_whisker: 0.0,
        upper_whisker: 0.0,
        n: 0,
    };
    let valid = samples.iter().filter(|s| s.violations.is_empty()).count();
    Ok(EvalReport {
        checker: cfg.checker,
        seed: cfg.seed,
        temperature: cfg.sampler.temperature,
        n_samples: cfg.n_samples,
        levenshtein: BoxStats::from_values(&lev).unwrap_or(empty),
        relative_levenshtein: BoxStats::from_values(&rel).unwrap_or(empty),
        valid_fraction: if samples.is_empty() {
            0.0
        } else {
            valid as f64 / samples.len() as f64
        },
        precision: channel_precision(&pairs),
        samples,
    })
}

/// `metric,checker,median,q1,q3,lower_whisker,upper_whisker,n` for each report.
pub fn box_stats_csv(reports: &[&EvalReport]) -> String {
    let mut out = String::from("metric,checker,median,q1,q3,lower_whisker,upper_whisker,n\n");
    for r in reports {
        for (name, b) in [
            ("levenshtein", &r.levenshtein),
            ("relative_levenshtein", &r.relative_levenshtein),
        ] {
            out.push_str(&format!(
                "{name},{},{},{},{},{},{},{}\n",
                if r.checker { "on" } else { "off" },
                b.median,
                b.lower_quartile,
                b.upper_quartile,
                b.lower_whisker,
                b.upper_whisker,
                b.n
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::slottok::encode_stream;
    use crate::trafficgen::{generate_scenario, ScenarioConfig, Traffic};

    /// Replays the true next slot of a known stream.
    struct Oracle(HashMap<Vec<Token>, Vec<Token>>);

    impl Oracle {
        fn new(stream: &[Token]) -> Self {
            let off = slot_offsets(stream);
            let mut map = HashMap::new();
            for s in 0..off.len().saturating_sub(CONTEXT_SLOTS + 1) {
                let end = off[s + CONTEXT_SLOTS];
                let start = off[s].max(end.saturating_sub(MAX_CONTEXT_TOKENS));
                map.insert(
                    stream[start..end].to_vec(),
                    stream[end..off[s + CONTEXT_SLOTS + 1]].to_vec(),
                );
            }
            Oracle(map)
        }
    }

    impl Predictor for Oracle {
        fn predict(
            &self,
            ctx: &[Token],
            _: &SamplerConfig,
            _: bool,
        ) -> Result<Prediction, SampleError> {
            Ok(Prediction {
                tokens: self.0[ctx].clone(),
                overflow: false,
            })
        }
    }

    fn stream(slots: usize) -> Vec<Token> {
        let cfg = ScenarioConfig::new(vec![Traffic::Downlink; 2], slots, 4);
        encode_stream(&generate_scenario(&cfg).unwrap()).unwrap()
    }

    fn cfg(n: usize) -> EvalConfig {
        EvalConfig {
            n_samples: n,
            seed: 7,
            checker: true,
            sampler: SamplerConfig::default(),
        }
    }

    #[test]
    fn oracle_scores_perfectly() {
        let s = stream(300);
        let report = evaluate_scenario(&Oracle::new(&s), &s, &cfg(50)).unwrap();
        assert!(report.samples.iter().all(|r| r.levenshtein == 0));
        assert_eq!(report.relative_levenshtein.upper_whisker, 0.0);
        assert_eq!(report.valid_fraction, 1.0);
        assert!(report.precision.iter().all(|p| p.channel_tp == Some(1.0)));
    }

    #[test]
    fn empty_baseline_and_determinism() {
        let s = stream(300);
        let a = evaluate_scenario(&EmptySlotPredictor, &s, &cfg(40)).unwrap();
        let b = evaluate_scenario(&EmptySlotPredictor, &s, &cfg(40)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.samples.iter().all(|r| r.violations.is_empty()));
        assert!(a.samples.iter().all(|r| r.relative <= 1.0));
    }

    #[test]
    fn too_few_slots() {
        let s = stream(300);
        let off = slot_offsets(&s);
        assert_eq!(
            evaluate_scenario(&EmptySlotPredictor, &s[..off[8]], &cfg(1)),
            Err(EvalError::InsufficientData {
                slots: 8,
                needed: 11
            })
        );
    }

    #[test]
    fn paired_seeds_do_not_depend_on_checker() {
        let s = stream(300);
        let on = evaluate_scenario(&EmptySlotPredictor, &s, &cfg(10)).unwrap();
        let off = evaluate_scenario(
            &EmptySlotPredictor,
            &s,
            &EvalConfig {
                checker: false,
                ..cfg(10)
            },
        )
        .unwrap();
        for (a, b) in on.samples.iter().zip(&off.samples) {
            assert_eq!(
                (a.window_start, a.sampler_seed),
                (b.window_start, b.sampler_seed)
            );
        }
        assert!(box_stats_csv(&[&on, &off]).lines().count() == 5);
    }
}
