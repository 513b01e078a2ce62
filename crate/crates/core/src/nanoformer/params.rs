use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError, Scalar};

/// Offsets of one decoder layer's tensors inside the flat parameter buffer.
///
/// Weight matrices are stored output-major: `[out, in]`.
#[derive(Debug, Clone)]
pub struct LayerLayout {
    pub ln1_gain: Range<usize>,
    pub ln1_bias: Range<usize>,
    pub qkv_weight: Range<usize>,
    pub qkv_bias: Range<usize>,
    pub attn_proj_weight: Range<usize>,
    pub attn_proj_bias: Range<usize>,
    pub ln2_gain: Range<usize>,
    pub ln2_bias: Range<usize>,
    pub ff_in_weight: Range<usize>,
    pub ff_in_bias: Range<usize>,
    pub ff_out_weight: Range<usize>,
    pub ff_out_bias: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub token_embedding: Range<usize>,
    pub position_embedding: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub final_gain: Range<usize>,
    pub final_bias: Range<usize>,
    /// Separate output head; `None` when tied to the token embedding.
    pub lm_head: Option<Range<usize>>,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (v, t, c, f) = (cfg.vocab, cfg.context_len, cfg.embed_dim, cfg.ff_dim);
        let mut cur = Cursor(0);
        let token_embedding = cur.take(v * c);
        let position_embedding = cur.take(t * c);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerLayout {
                ln1_gain: cur.take(c),
                ln1_bias: cur.take(c),
                qkv_weight: cur.take(3 * c * c),
                qkv_bias: cur.take(3 * c),
                attn_proj_weight: cur.take(c * c),
                attn_proj_bias: cur.take(c),
                ln2_gain: cur.take(c),
                ln2_bias: cur.take(c),
                ff_in_weight: cur.take(f * c),
                ff_in_bias: cur.take(f),
                ff_out_weight: cur.take(c * f),
                ff_out_bias: cur.take(c),
            })
            .collect();
        let final_gain = cur.take(c);
        let final_bias = cur.take(c);
        let lm_head = (!cfg.tie_embeddings).then(|| cur.take(v * c));
        ParamLayout {
            token_embedding,
            position_embedding,
            layers,
            final_gain,
            final_bias,
            lm_head,
            total: cur.0,
        }
    }

    /// Ranges initialised from N(0, 0.02); everything else is a bias (zero)
    /// or a normalization gain (one).
    fn normal_ranges(&self) -> Vec<Range<usize>> {
        let mut out = vec![
            self.token_embedding.clone(),
            self.position_embedding.clone(),
        ];
        for l in &self.layers {
            out.extend([
                l.qkv_weight.clone(),
                l.attn_proj_weight.clone(),
                l.ff_in_weight.clone(),
                l.ff_out_weight.clone(),
            ]);
        }
        out.extend(self.lm_head.clone());
        out
    }

    fn gain_ranges(&self) -> Vec<Range<usize>> {
        let mut out: Vec<_> = self
            .layers
            .iter()
            .flat_map(|l| [l.ln1_gain.clone(), l.ln2_gain.clone()])
            .collect();
        out.push(self.final_gain.clone());
        out
    }

    /// Output-head weights: the separate head if present, else the token embedding.
    pub fn output_head(&self) -> Range<usize> {
        self.lm_head
            .clone()
            .unwrap_or_else(|| self.token_embedding.clone())
    }
}

/// All learnable tensors in one flat buffer, addressed through [`ParamLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F = f32> {
    pub config: ModelConfig,
    pub data: Vec<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Deterministic initialisation: N(0, 0.02) for embeddings and projection
    /// weights, zero biases, unit normalization gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut data = vec![F::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 0.02).unwrap();
        for r in layout.normal_ranges() {
            for x in &mut data[r] {
                *x = F::from_f64(normal.sample(&mut rng)).unwrap();
            }
        }
        for r in layout.gain_ranges() {
            data[r].fill(F::one());
        }
        Ok(ModelParams { config, data })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.config)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Trainable parameters excluding the position embeddings.
    pub fn count_excluding_positions(&self) -> usize {
        self.data.len() - self.layout().position_embedding.len()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        ModelParams {
            config: self.config,
            data: self
                .data
                .iter()
                .map(|x| G::from_f64(x.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }
}

/// Parameter count of `cfg` excluding position embeddings, without allocating.
pub fn count_excluding_positions(cfg: &ModelConfig) -> usize {
    let layout = ParamLayout::new(cfg);
    layout.total - layout.position_embedding.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_count_is_near_2700() {
        let params = ModelParams::<f32>::init(ModelConfig::default(), 0).unwrap();
        let n = params.count_excluding_positions();
        assert_eq!(n, 2888);
        assert!((2400..=3000).contains(&n));
        assert_eq!(params.len(), n + 1024 * 8);
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::<f32>::init(ModelConfig::default(), 11).unwrap();
        let b = ModelParams::<f32>::init(ModelConfig::default(), 11).unwrap();
        let c = ModelParams::<f32>::init(ModelConfig::default(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_values_by_role() {
        let p = ModelParams::<f64>::init(ModelConfig::default(), 3).unwrap();
        let l = p.layout();
        assert!(p.data[l.layers[0].ln1_gain.clone()]
            .iter()
            .all(|x| *x == 1.0));
        assert!(p.data[l.layers[2].qkv_bias.clone()]
            .iter()
            .all(|x| *x == 0.0));
        let emb = &p.data[l.token_embedding.clone()];
        let std = (emb.iter().map(|x| x * x).sum::<f64>() / emb.len() as f64).sqrt();
        assert!((0.012..0.028).contains(&std), "{std}");
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = ModelConfig {
            embed_dim: 9,
            ..ModelConfig::default()
        };
        assert!(matches!(
            ModelParams::<f32>::init(cfg, 0),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn untied_head_adds_parameters() {
        let cfg = ModelConfig {
            tie_embeddings: false,
            ..ModelConfig::default()
        };
        assert_eq!(count_excluding_positions(&cfg), 2888 + 256);
    }
}
