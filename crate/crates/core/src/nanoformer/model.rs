use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops::{
    gelu_backward, gelu_forward, layernorm_backward, layernorm_forward, matmul_backward,
    matmul_forward, softmax_in_place,
};
use super::{ModelError, ModelParams, ParamLayout, Scalar};
use crate::slottok::Token;

/// Next-token logits, one row of `vocab` values per input position.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<F> {
    pub vocab: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Logits<F> {
    pub fn rows(&self) -> usize {
        self.data.len() / self.vocab
    }

    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.vocab..(t + 1) * self.vocab]
    }

    /// Softmax of row `t`.
    pub fn probabilities(&self, t: usize) -> Vec<F> {
        let mut p = self.row(t).to_vec();
        softmax_in_place(&mut p);
        p
    }
}

/// Saved activations of one decoder layer.
struct LayerActs<F> {
    inp: Vec<F>,
    ln1: Vec<F>,
    ln1_mean: Vec<F>,
    ln1_rstd: Vec<F>,
    qkv: Vec<F>,
    att: Vec<F>,
    att_y: Vec<F>,
    mask1: Option<Vec<F>>,
    mid: Vec<F>,
    ln2: Vec<F>,
    ln2_mean: Vec<F>,
    ln2_rstd: Vec<F>,
    fc: Vec<F>,
    act: Vec<F>,
    mask2: Option<Vec<F>>,
}

struct Acts<F> {
    tokens: Vec<usize>,
    layers: Vec<LayerActs<F>>,
    resid: Vec<F>,
    lnf: Vec<F>,
    lnf_mean: Vec<F>,
    lnf_rstd: Vec<F>,
    logits: Vec<F>,
}

fn check_input<F: Scalar>(params: &ModelParams<F>, tokens: &[Token]) -> Result<(), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if tokens.len() > params.config.context_len {
        return Err(ModelError::TooLong {
            len: tokens.len(),
            context: params.config.context_len,
        });
    }
    Ok(())
}

/// Causal self-attention of one query over keys `0..n`.
///
/// Writes the softmax weights into `att[..n]` and the mixed values into `y`.
#[inline]
fn attend<'a, F: Scalar>(
    q: &[F],
    key: impl Fn(usize) -> &'a [F],
    value: impl Fn(usize) -> &'a [F],
    n: usize,
    scale: F,
    att: &mut [F],
    y: &mut [F],
) {
    for (t2, a) in att[..n].iter_mut().enumerate() {
        let k = key(t2);
        let mut s = F::zero();
        for i in 0..q.len() {
            s += q[i] * k[i];
        }
        *a = s * scale;
    }
    softmax_in_place(&mut att[..n]);
    y.fill(F::zero());
    for (t2, &a) in att[..n].iter().enumerate() {
        let v = value(t2);
        for i in 0..y.len() {
            y[i] += a * v[i];
        }
    }
}

fn dropout_mask<F: Scalar>(
    len: usize,
    p: f32,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Option<Vec<F>> {
    let rng = rng.as_deref_mut()?;
    if p <= 0.0 {
        return None;
    }
    let keep = F::from_f32(1.0 / (1.0 - p)).unwrap();
    Some(
        (0..len)
            .map(|_| {
                if rng.random::<f32>() < p {
                    F::zero()
                } else {
                    keep
                }
            })
            .collect(),
    )
}

fn forward_acts<F: Scalar>(
    params: &ModelParams<F>,
    layout: &ParamLayout,
    tokens: &[Token],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Acts<F> {
    let cfg = &params.config;
    let (c, f, v, h) = (cfg.embed_dim, cfg.ff_dim, cfg.vocab, cfg.n_heads);
    let hd = cfg.head_dim();
    let t_len = tokens.len();
    let w = &params.data;
    let scale = F::one() / F::from_usize(hd).unwrap().sqrt();

    let ids: Vec<usize> = tokens.iter().map(|t| t.index()).collect();
    let wte = &w[layout.token_embedding.clone()];
    let wpe = &w[layout.position_embedding.clone()];
    let mut resid = vec![F::zero(); t_len * c];
    for (t, &id) in ids.iter().enumerate() {
        for i in 0..c {
            resid[t * c + i] = wte[id * c + i] + wpe[t * c + i];
        }
    }

    let mut layers = Vec::with_capacity(layout.layers.len());
    for l in &layout.layers {
        let inp = resid;
        let mut ln1 = vec![F::zero(); t_len * c];
        let mut ln1_mean = vec![F::zero(); t_len];
        let mut ln1_rstd = vec![F::zero(); t_len];
        layernorm_forward(
            &mut ln1,
            &mut ln1_mean,
            &mut ln1_rstd,
            &inp,
            &w[l.ln1_gain.clone()],
            &w[l.ln1_bias.clone()],
            c,
        );
        let mut qkv = vec![F::zero(); t_len * 3 * c];
        matmul_forward(
            &mut qkv,
            &ln1,
            &w[l.qkv_weight.clone()],
            Some(&w[l.qkv_bias.clone()]),
            c,
            3 * c,
        );

        let mut att = vec![F::zero(); h * t_len * t_len];
        let mut att_y = vec![F::zero(); t_len * c];
        for head in 0..h {
            let (qo, ko, vo) = (head * hd, c + head * hd, 2 * c + head * hd);
            for t in 0..t_len {
                let base = (head * t_len + t) * t_len;
                let qkv_ref = &qkv;
                attend(
                    &qkv[t * 3 * c + qo..t * 3 * c + qo + hd],
                    |t2| &qkv_ref[t2 * 3 * c + ko..t2 * 3 * c + ko + hd],
                    |t2| &qkv_ref[t2 * 3 * c + vo..t2 * 3 * c + vo + hd],
                    t + 1,
                    scale,
                    &mut att[base..base + t_len],
                    &mut att_y[t * c + qo..t * c + qo + hd],
                );
            }
        }
        let mut proj = vec![F::zero(); t_len * c];
        matmul_forward(
            &mut proj,
            &att_y,
            &w[l.attn_proj_weight.clone()],
            Some(&w[l.attn_proj_bias.clone()]),
            c,
            c,
        );
        let mask1 = dropout_mask(t_len * c, cfg.dropout, &mut rng);
        let mut mid = inp.clone();
        add_branch(&mut mid, &proj, mask1.as_deref());

        let mut ln2 = vec![F::zero(); t_len * c];
        let mut ln2_mean = vec![F::zero(); t_len];
        let mut ln2_rstd = vec![F::zero(); t_len];
        layernorm_forward(
            &mut ln2,
            &mut ln2_mean,
            &mut ln2_rstd,
            &mid,
            &w[l.ln2_gain.clone()],
            &w[l.ln2_bias.clone()],
            c,
        );
        let mut fc = vec![F::zero(); t_len * f];
        matmul_forward(
            &mut fc,
            &ln2,
            &w[l.ff_in_weight.clone()],
            Some(&w[l.ff_in_bias.clone()]),
            c,
            f,
        );
        let mut act = vec![F::zero(); t_len * f];
        gelu_forward(&mut act, &fc);
        let mut fc_out = vec![F::zero(); t_len * c];
        matmul_forward(
            &mut fc_out,
            &act,
            &w[l.ff_out_weight.clone()],
            Some(&w[l.ff_out_bias.clone()]),
            f,
            c,
        );
        let mask2 = dropout_mask(t_len * c, cfg.dropout, &mut rng);
        resid = mid.clone();
        add_branch(&mut resid, &fc_out, mask2.as_deref());

        layers.push(LayerActs {
            inp,
            ln1,
            ln1_mean,
            ln1_rstd,
            qkv,
            att,
            att_y,
            mask1,
            mid,
            ln2,
            ln2_mean,
            ln2_rstd,
            fc,
            act,
            mask2,
        });
    }

    let mut lnf = vec![F::zero(); t_len * c];
    let mut lnf_mean = vec![F::zero(); t_len];
    let mut lnf_rstd = vec![F::zero(); t_len];
    layernorm_forward(
        &mut lnf,
        &mut lnf_mean,
        &mut lnf_rstd,
        &resid,
        &w[layout.final_gain.clone()],
        &w[layout.final_bias.clone()],
        c,
    );
    let mut logits = vec![F::zero(); t_len * v];
    matmul_forward(&mut logits, &lnf, &w[layout.output_head()], None, c, v);
    Acts {
        tokens: ids,
        layers,
        resid,
        lnf,
        lnf_mean,
        lnf_rstd,
        logits,
    }
}

fn add_branch<F: Scalar>(resid: &mut [F], branch: &[F], mask: Option<&[F]>) {
    match mask {
        Some(m) => {
            for ((r, &b), &k) in resid.iter_mut().zip(branch).zip(m) {
                *r += b * k;
            }
        }
        None => {
            for (r, &b) in resid.iter_mut().zip(branch) {
                *r += b;
            }
        }
    }
}

/// Disjoint mutable views of two ranges, `a` before `b`.
fn pair_mut<F>(buf: &mut [F], a: Range<usize>, b: Range<usize>) -> (&mut [F], &mut [F]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.len()])
}

/// `-log p(target)` for one logit row, accumulated in f64.
fn row_nll<F: Scalar>(row: &[F], target: usize) -> f64 {
    let max = row
        .iter()
        .fold(f64::NEG_INFINITY, |m, x| m.max(x.to_f64().unwrap()));
    let sum: f64 = row.iter().map(|x| (x.to_f64().unwrap() - max).exp()).sum();
    max + sum.ln() - row[target].to_f64().unwrap()
}

/// Backward pass for one window; `dlogits` already holds the loss gradient.
fn backward<F: Scalar>(
    params: &ModelParams<F>,
    layout: &ParamLayout,
    acts: &Acts<F>,
    dlogits: &[F],
    grads: &mut [F],
) {
    let cfg = &params.config;
    let (c, f, v, h) = (cfg.embed_dim, cfg.ff_dim, cfg.vocab, cfg.n_heads);
    let hd = cfg.head_dim();
    let t_len = acts.tokens.len();
    let w = &params.data;
    let scale = F::one() / F::from_usize(hd).unwrap().sqrt();
    let zeros = |n: usize| vec![F::zero(); n];

    let mut dlnf = zeros(t_len * c);
    matmul_backward(
        &mut dlnf,
        &mut grads[layout.output_head()],
        None,
        dlogits,
        &acts.lnf,
        &w[layout.output_head()],
        c,
        v,
    );
    let mut dresid = zeros(t_len * c);
    {
        let (dg, db) = pair_mut(grads, layout.final_gain.clone(), layout.final_bias.clone());
        layernorm_backward(
            &mut dresid,
            dg,
            db,
            &dlnf,
            &acts.resid,
            &w[layout.final_gain.clone()],
            &acts.lnf_mean,
            &acts.lnf_rstd,
            c,
        );
    }

    for (l, a) in layout.layers.iter().zip(&acts.layers).rev() {
        // resid = mid + drop(fc_out)
        let dfc_out = masked(&dresid, a.mask2.as_deref());
        let mut dmid = dresid;
        let mut dact = zeros(t_len * f);
        {
            let (dw, db) = pair_mut(grads, l.ff_out_weight.clone(), l.ff_out_bias.clone());
            matmul_backward(
                &mut dact,
                dw,
                Some(db),
                &dfc_out,
                &a.act,
                &w[l.ff_out_weight.clone()],
                f,
                c,
            );
        }
        let mut dfc = zeros(t_len * f);
        gelu_backward(&mut dfc, &a.fc, &dact);
        let mut dln2 = zeros(t_len * c);
        {
            let (dw, db) = pair_mut(grads, l.ff_in_weight.clone(), l.ff_in_bias.clone());
            matmul_backward(
                &mut dln2,
                dw,
                Some(db),
                &dfc,
                &a.ln2,
                &w[l.ff_in_weight.clone()],
                c,
                f,
            );
        }
        {
            let (dg, db) = pair_mut(grads, l.ln2_gain.clone(), l.ln2_bias.clone());
            layernorm_backward(
                &mut dmid,
                dg,
                db,
                &dln2,
                &a.mid,
                &w[l.ln2_gain.clone()],
                &a.ln2_mean,
                &a.ln2_rstd,
                c,
            );
        }

        // mid = inp + drop(proj)
        let dproj = masked(&dmid, a.mask1.as_deref());
        let mut dinp = dmid;
        let mut datt_y = zeros(t_len * c);
        {
            let (dw, db) = pair_mut(grads, l.attn_proj_weight.clone(), l.attn_proj_bias.clone());
            matmul_backward(
                &mut datt_y,
                dw,
                Some(db),
                &dproj,
                &a.att_y,
                &w[l.attn_proj_weight.clone()],
                c,
                c,
            );
        }

        let mut dqkv = zeros(t_len * 3 * c);
        let mut datt = zeros(t_len);
        for head in 0..h {
            let (qo, ko, vo) = (head * hd, c + head * hd, 2 * c + head * hd);
            for t in 0..t_len {
                let att = &a.att[(head * t_len + t) * t_len..][..t + 1];
                let dy = &datt_y[t * c + qo..t * c + qo + hd];
                let mut dot = F::zero();
                for t2 in 0..=t {
                    let vrow = t2 * 3 * c + vo;
                    let mut s = F::zero();
                    for i in 0..hd {
                        s += dy[i] * a.qkv[vrow + i];
                        dqkv[vrow + i] += att[t2] * dy[i];
                    }
                    datt[t2] = s;
                    dot += att[t2] * s;
                }
                let qrow = t * 3 * c + qo;
                for t2 in 0..=t {
                    let dpre = att[t2] * (datt[t2] - dot) * scale;
                    let krow = t2 * 3 * c + ko;
                    for i in 0..hd {
                        dqkv[qrow + i] += dpre * a.qkv[krow + i];
                        dqkv[krow + i] += dpre * a.qkv[qrow + i];
                    }
                }
            }
        }
        let mut dln1 = zeros(t_len * c);
        {
            let (dw, db) = pair_mut(grads, l.qkv_weight.clone(), l.qkv_bias.clone());
            matmul_backward(
                &mut dln1,
                dw,
                Some(db),
                &dqkv,
                &a.ln1,
                &w[l.qkv_weight.clone()],
                c,
                3 * c,
            );
        }
        {
            let (dg, db) = pair_mut(grads, l.ln1_gain.clone(), l.ln1_bias.clone());
            layernorm_backward(
                &mut dinp,
                dg,
                db,
                &dln1,
                &a.inp,
                &w[l.ln1_gain.clone()],
                &a.ln1_mean,
                &a.ln1_rstd,
                c,
            );
        }
        dresid = dinp;
    }

    let (dwte, dwpe) = pair_mut(
        grads,
        layout.token_embedding.clone(),
        layout.position_embedding.clone(),
    );
    for (t, &id) in acts.tokens.iter().enumerate() {
        for i in 0..c {
            let g = dresid[t * c + i];
            dwte[id * c + i] += g;
            dwpe[t * c + i] += g;
        }
    }
}

fn masked<F: Scalar>(d: &[F], mask: Option<&[F]>) -> Vec<F> {
    match mask {
        Some(m) => d.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => d.to_vec(),
    }
}

/// Logits for every position of `tokens` (no dropout).
pub fn forward<F: Scalar>(
    params: &ModelParams<F>,
    tokens: &[Token],
) -> Result<Logits<F>, ModelError> {
    check_input(params, tokens)?;
    let acts = forward_acts(params, &params.layout(), tokens, None);
    Ok(Logits {
        vocab: params.config.vocab,
        data: acts.logits,
    })
}

fn check_batch<F: Scalar>(
    params: &ModelParams<F>,
    inputs: &[Vec<Token>],
    targets: &[Vec<Token>],
) -> Result<usize, ModelError> {
    if inputs.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if inputs.len() != targets.len() || inputs.iter().zip(targets).any(|(a, b)| a.len() != b.len())
    {
        return Err(ModelError::ShapeMismatch);
    }
    for x in inputs {
        check_input(params, x)?;
    }
    Ok(inputs.iter().map(Vec::len).sum())
}

/// Mean next-token cross-entropy over all target positions, no dropout.
pub fn loss<F: Scalar>(
    params: &ModelParams<F>,
    inputs: &[Vec<Token>],
    targets: &[Vec<Token>],
) -> Result<f64, ModelError> {
    let n = check_batch(params, inputs, targets)?;
    let layout = params.layout();
    let v = params.config.vocab;
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let acts = forward_acts(params, &layout, x, None);
        for (t, tgt) in y.iter().enumerate() {
            total += row_nll(&acts.logits[t * v..(t + 1) * v], tgt.index());
        }
    }
    Ok(total / n as f64)
}

/// Mean cross-entropy and its gradient with respect to every parameter.
///
/// With `rng` set and a non-zero dropout rate, residual-branch dropout is
/// applied.
pub fn loss_and_grads<F: Scalar>(
    params: &ModelParams<F>,
    inputs: &[Vec<Token>],
    targets: &[Vec<Token>],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<F>), ModelError> {
    let n = check_batch(params, inputs, targets)?;
    let layout = params.layout();
    let v = params.config.vocab;
    let inv_n = F::one() / F::from_usize(n).unwrap();
    let mut grads = vec![F::zero(); params.len()];
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let acts = forward_acts(params, &layout, x, rng.as_deref_mut());
        let mut dlogits = acts.logits.clone();
        for (t, tgt) in y.iter().enumerate() {
            let row = &mut dlogits[t * v..(t + 1) * v];
            total += row_nll(row, tgt.index());
            softmax_in_place(row);
            row[tgt.index()] -= F::one();
            for g in row.iter_mut() {
                *g *= inv_n;
            }
        }
        backward(params, &layout, &acts, &dlogits, &mut grads);
    }
    Ok((total / n as f64, grads))
}

/// Incremental decoder with a key/value cache, for sampling one token at a
/// time without recomputing the prefix.
pub struct Decoder<'a, F: Scalar = f32> {
    params: &'a ModelParams<F>,
    layout: ParamLayout,
    /// Per layer, `[context_len, C]` keys and values.
    keys: Vec<Vec<F>>,
    values: Vec<Vec<F>>,
    pos: usize,
}

impl<'a, F: Scalar> Decoder<'a, F> {
    pub fn new(params: &'a ModelParams<F>) -> Self {
        let cfg = &params.config;
        let size = cfg.context_len * cfg.embed_dim;
        Decoder {
            params,
            layout: params.layout(),
            keys: vec![vec![F::zero(); size]; cfg.n_layers],
            values: vec![vec![F::zero(); size]; cfg.n_layers],
            pos: 0,
        }
    }

    /// Number of tokens currently cached.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_full(&self) -> bool {
        self.pos == self.params.config.context_len
    }

    pub fn reset(&mut self) {
        self.pos = 0;
    }

    /// Feeds tokens in order and returns the logits after the last one.
    pub fn feed(&mut self, tokens: &[Token]) -> Result<Vec<F>, ModelError> {
        let mut out = Err(ModelError::EmptyInput);
        for &t in tokens {
            out = self.step(t);
            out.as_ref().map_err(Clone::clone)?;
        }
        out
    }

    /// Appends one token and returns the next-token logits.
    pub fn step(&mut self, token: Token) -> Result<Vec<F>, ModelError> {
        let cfg = self.params.config;
        if self.is_full() {
            return Err(ModelError::TooLong {
                len: self.pos + 1,
                context: cfg.context_len,
            });
        }
        let (c, f, v, h) = (cfg.embed_dim, cfg.ff_dim, cfg.vocab, cfg.n_heads);
        let hd = cfg.head_dim();
        let w = &self.params.data;
        let lay = &self.layout;
        let t = self.pos;
        let scale = F::one() / F::from_usize(hd).unwrap().sqrt();
        let (mut m, mut r) = ([F::zero()], [F::zero()]);

        let id = token.index();
        let wte = &w[lay.token_embedding.clone()];
        let wpe = &w[lay.position_embedding.clone()];
        let mut x: Vec<F> = (0..c).map(|i| wte[id * c + i] + wpe[t * c + i]).collect();
        let mut ln = vec![F::zero(); c];
        let mut qkv = vec![F::zero(); 3 * c];
        let mut att = vec![F::zero(); t + 1];
        let mut y = vec![F::zero(); c];
        let mut branch = vec![F::zero(); c];
        let mut fc = vec![F::zero(); f];
        let mut act = vec![F::zero(); f];

        for (li, l) in lay.layers.iter().enumerate() {
            layernorm_forward(
                &mut ln,
                &mut m,
                &mut r,
                &x,
                &w[l.ln1_gain.clone()],
                &w[l.ln1_bias.clone()],
                c,
            );
            matmul_forward(
                &mut qkv,
                &ln,
                &w[l.qkv_weight.clone()],
                Some(&w[l.qkv_bias.clone()]),
                c,
                3 * c,
            );
            self.keys[li][t * c..(t + 1) * c].copy_from_slice(&qkv[c..2 * c]);
            self.values[li][t * c..(t + 1) * c].copy_from_slice(&qkv[2 * c..]);
            let (keys, values) = (&self.keys[li], &self.values[li]);
            for head in 0..h {
                let o = head * hd;
                attend(
                    &qkv[o..o + hd],
                    |t2| &keys[t2 * c + o..t2 * c + o + hd],
                    |t2| &values[t2 * c + o..t2 * c + o + hd],
                    t + 1,
                    scale,
                    &mut att,
                    &mut y[o..o + hd],
                );
            }
            matmul_forward(
                &mut branch,
                &y,
                &w[l.attn_proj_weight.clone()],
                Some(&w[l.attn_proj_bias.clone()]),
                c,
                c,
            );
            add_branch(&mut x, &branch, None);
            layernorm_forward(
                &mut ln,
                &mut m,
                &mut r,
                &x,
                &w[l.ln2_gain.clone()],
                &w[l.ln2_bias.clone()],
                c,
            );
            matmul_forward(
                &mut fc,
                &ln,
                &w[l.ff_in_weight.clone()],
                Some(&w[l.ff_in_bias.clone()]),
                c,
                f,
            );
            gelu_forward(&mut act, &fc);
            matmul_forward(
                &mut branch,
                &act,
                &w[l.ff_out_weight.clone()],
                Some(&w[l.ff_out_bias.clone()]),
                f,
                c,
            );
            add_branch(&mut x, &branch, None);
        }
        layernorm_forward(
            &mut ln,
            &mut m,
            &mut r,
            &x,
            &w[lay.final_gain.clone()],
            &w[lay.final_bias.clone()],
            c,
        );
        let mut logits = vec![F::zero(); v];
        matmul_forward(&mut logits, &ln, &w[lay.output_head()], None, c, v);
        self.pos += 1;
        Ok(logits)
    }
}
