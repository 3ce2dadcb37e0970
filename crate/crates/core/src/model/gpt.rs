//! Pre-norm decoder-only transformer: forward pass with an activation cache
//! and its hand-derived reverse-mode backward pass.

use rand::Rng;

use super::ops::{
    gelu_backward, gelu_forward, layernorm_backward, layernorm_forward, linear_backward,
    linear_forward, softmax_in_place, Scalar,
};
use super::params::Params;
use crate::error::{Error, Result};

/// Dropout draws, or `None` for evaluation mode.
pub type DropoutRng<'a> = Option<&'a mut dyn rand::RngCore>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

struct LayerCache<T> {
    resid_in: Vec<T>,
    ln1: Vec<T>,
    ln1_mean: Vec<T>,
    ln1_rstd: Vec<T>,
    qkv: Vec<T>,
    /// Post-softmax attention weights `[B, H, T, T]`.
    att: Vec<T>,
    att_mask: Option<Vec<T>>,
    atty: Vec<T>,
    proj_mask: Option<Vec<T>>,
    resid_mid: Vec<T>,
    ln2: Vec<T>,
    ln2_mean: Vec<T>,
    ln2_rstd: Vec<T>,
    fch: Vec<T>,
    fch_gelu: Vec<T>,
    fc2_mask: Option<Vec<T>>,
}

/// Everything the backward pass needs from one batched forward pass.
pub struct ForwardCache<T> {
    pub batch: usize,
    pub seq: usize,
    tokens: Vec<u8>,
    emb_mask: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    resid_final: Vec<T>,
    lnf_mean: Vec<T>,
    lnf_rstd: Vec<T>,
    /// Final normalized hidden states `[B·T, C]` (input to the output head).
    pub hidden: Vec<T>,
    /// `[B·T, V]`.
    pub logits: Vec<T>,
}

fn dropout_mask<T: Scalar>(rng: &mut DropoutRng<'_>, len: usize, p: f64) -> Option<Vec<T>> {
    let rng = rng.as_mut()?;
    if p <= 0.0 {
        return None;
    }
    let keep = T::lit(1.0 / (1.0 - p));
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect(),
    )
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y += alpha·x`
#[inline]
fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v = *v * k;
        }
    }
}

impl<T: Scalar> Params<T> {
    fn check_tokens(&self, tokens: &[u8], batch: usize, seq: usize) -> Result<()> {
        let cfg = &self.config;
        if seq == 0 || seq > cfg.context_window {
            return Err(Error::Structure(format!(
                "sequence length {seq} outside 1..={}",
                cfg.context_window
            )));
        }
        if tokens.len() != batch * seq {
            return Err(Error::Structure(format!(
                "{} tokens do not form a {batch}×{seq} batch",
                tokens.len()
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::Range(format!("token {t} outside the vocabulary")));
        }
        Ok(())
    }

    /// Runs `batch` sequences of length `seq` (row-major in `tokens`).
    /// Dropout is active iff `rng` is provided.
    pub fn forward_batch(
        &self,
        tokens: &[u8],
        batch: usize,
        seq: usize,
        mut rng: DropoutRng<'_>,
    ) -> Result<ForwardCache<T>> {
        self.check_tokens(tokens, batch, seq)?;
        let cfg = &self.config;
        let (c, v, nh) = (cfg.d_model, cfg.vocab_size, cfg.num_heads);
        let hs = cfg.head_dim();
        let n = batch * seq;
        let p = cfg.dropout_prob;
        let lay = &self.layout;

        let wte = self.slot(lay.wte);
        let wpe = self.slot(lay.wpe);
        let mut x = vec![T::zero(); n * c];
        for (row, &tok) in tokens.iter().enumerate() {
            let t = row % seq;
            let tok = tok as usize;
            for i in 0..c {
                x[row * c + i] = wte[tok * c + i] + wpe[t * c + i];
            }
        }
        let emb_mask = dropout_mask(&mut rng, n * c, p);
        apply_mask(&mut x, &emb_mask);

        let scale = T::lit(1.0 / (hs as f64).sqrt());
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for slots in &lay.layers {
            let mut ln1 = vec![T::zero(); n * c];
            let mut ln1_mean = vec![T::zero(); n];
            let mut ln1_rstd = vec![T::zero(); n];
            layernorm_forward(
                &mut ln1,
                &mut ln1_mean,
                &mut ln1_rstd,
                &x,
                self.slot(slots.ln1_w),
                self.slot(slots.ln1_b),
                c,
            );
            let mut qkv = vec![T::zero(); n * 3 * c];
            linear_forward(
                &mut qkv,
                &ln1,
                self.slot(slots.qkv_w),
                Some(self.slot(slots.qkv_b)),
                n,
                c,
                3 * c,
            );

            let mut att = vec![T::zero(); batch * nh * seq * seq];
            for b in 0..batch {
                for h in 0..nh {
                    for t in 0..seq {
                        let q = &qkv[(b * seq + t) * 3 * c + h * hs..][..hs];
                        let row = &mut att[((b * nh + h) * seq + t) * seq..][..seq];
                        for (t2, slot) in row.iter_mut().enumerate().take(t + 1) {
                            let k = &qkv[(b * seq + t2) * 3 * c + c + h * hs..][..hs];
                            *slot = dot(q, k) * scale;
                        }
                        softmax_in_place(&mut row[..=t]);
                    }
                }
            }
            let att_mask = dropout_mask(&mut rng, att.len(), p);
            let mut atty = vec![T::zero(); n * c];
            for b in 0..batch {
                for h in 0..nh {
                    for t in 0..seq {
                        let base = ((b * nh + h) * seq + t) * seq;
                        let out = &mut atty[(b * seq + t) * c + h * hs..][..hs];
                        for t2 in 0..=t {
                            let mut w = att[base + t2];
                            if let Some(m) = &att_mask {
                                w = w * m[base + t2];
                            }
                            let val = &qkv[(b * seq + t2) * 3 * c + 2 * c + h * hs..][..hs];
                            axpy(out, w, val);
                        }
                    }
                }
            }
            let mut proj = vec![T::zero(); n * c];
            linear_forward(
                &mut proj,
                &atty,
                self.slot(slots.proj_w),
                Some(self.slot(slots.proj_b)),
                n,
                c,
                c,
            );
            let proj_mask = dropout_mask(&mut rng, n * c, p);
            apply_mask(&mut proj, &proj_mask);
            let resid_mid: Vec<T> = x.iter().zip(&proj).map(|(&a, &b)| a + b).collect();

            let mut ln2 = vec![T::zero(); n * c];
            let mut ln2_mean = vec![T::zero(); n];
            let mut ln2_rstd = vec![T::zero(); n];
            layernorm_forward(
                &mut ln2,
                &mut ln2_mean,
                &mut ln2_rstd,
                &resid_mid,
                self.slot(slots.ln2_w),
                self.slot(slots.ln2_b),
                c,
            );
            let mut fch = vec![T::zero(); n * 4 * c];
            linear_forward(
                &mut fch,
                &ln2,
                self.slot(slots.fc_w),
                Some(self.slot(slots.fc_b)),
                n,
                c,
                4 * c,
            );
            let mut fch_gelu = vec![T::zero(); n * 4 * c];
            gelu_forward(&mut fch_gelu, &fch);
            let mut fc2 = vec![T::zero(); n * c];
            linear_forward(
                &mut fc2,
                &fch_gelu,
                self.slot(slots.fc2_w),
                Some(self.slot(slots.fc2_b)),
                n,
                4 * c,
                c,
            );
            let fc2_mask = dropout_mask(&mut rng, n * c, p);
            apply_mask(&mut fc2, &fc2_mask);
            let resid_out: Vec<T> = resid_mid.iter().zip(&fc2).map(|(&a, &b)| a + b).collect();

            layers.push(LayerCache {
                resid_in: std::mem::replace(&mut x, resid_out),
                ln1,
                ln1_mean,
                ln1_rstd,
                qkv,
                att,
                att_mask,
                atty,
                proj_mask,
                resid_mid,
                ln2,
                ln2_mean,
                ln2_rstd,
                fch,
                fch_gelu,
                fc2_mask,
            });
        }

        let mut hidden = vec![T::zero(); n * c];
        let mut lnf_mean = vec![T::zero(); n];
        let mut lnf_rstd = vec![T::zero(); n];
        layernorm_forward(
            &mut hidden,
            &mut lnf_mean,
            &mut lnf_rstd,
            &x,
            self.slot(lay.lnf_w),
            self.slot(lay.lnf_b),
            c,
        );
        let mut logits = vec![T::zero(); n * v];
        linear_forward(&mut logits, &hidden, self.slot(lay.head), None, n, c, v);

        Ok(ForwardCache {
            batch,
            seq,
            tokens: tokens.to_vec(),
            emb_mask,
            layers,
            resid_final: x,
            lnf_mean,
            lnf_rstd,
            hidden,
            logits,
        })
    }

    /// Back-propagates `dlogits` (`[B·T, V]`) through a cached forward pass,
    /// accumulating into `grads`.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &[T], grads: &mut Params<T>) {
        let cfg = &self.config;
        let (c, v, nh) = (cfg.d_model, cfg.vocab_size, cfg.num_heads);
        let hs = cfg.head_dim();
        let (batch, seq) = (cache.batch, cache.seq);
        let n = batch * seq;
        let lay = &self.layout;
        let scale = T::lit(1.0 / (hs as f64).sqrt());

        let mut dhidden = vec![T::zero(); n * c];
        linear_backward(
            &mut dhidden,
            grads.slot_mut(lay.head),
            None,
            dlogits,
            &cache.hidden,
            self.slot(lay.head),
            n,
            c,
            v,
        );
        let mut dresid = vec![T::zero(); n * c];
        {
            let (dw, db) = grads.slot_pair_mut(lay.lnf_w, lay.lnf_b);
            layernorm_backward(
                &mut dresid,
                dw,
                db,
                &dhidden,
                &cache.resid_final,
                self.slot(lay.lnf_w),
                &cache.lnf_mean,
                &cache.lnf_rstd,
                c,
            );
        }

        for (slots, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // resid_out = resid_mid + dropout(fc2(gelu(fc(ln2(resid_mid)))))
            let mut dfc2 = dresid.clone();
            apply_mask(&mut dfc2, &lc.fc2_mask);
            let mut dgelu = vec![T::zero(); n * 4 * c];
            {
                let (dw, db) = grads.slot_pair_mut(slots.fc2_w, slots.fc2_b);
                linear_backward(
                    &mut dgelu,
                    dw,
                    Some(db),
                    &dfc2,
                    &lc.fch_gelu,
                    self.slot(slots.fc2_w),
                    n,
                    4 * c,
                    c,
                );
            }
            let mut dfch = vec![T::zero(); n * 4 * c];
            gelu_backward(&mut dfch, &lc.fch, &dgelu);
            let mut dln2 = vec![T::zero(); n * c];
            {
                let (dw, db) = grads.slot_pair_mut(slots.fc_w, slots.fc_b);
                linear_backward(
                    &mut dln2,
                    dw,
                    Some(db),
                    &dfch,
                    &lc.ln2,
                    self.slot(slots.fc_w),
                    n,
                    c,
                    4 * c,
                );
            }
            // dresid now accumulates d(resid_mid)
            {
                let (dw, db) = grads.slot_pair_mut(slots.ln2_w, slots.ln2_b);
                layernorm_backward(
                    &mut dresid,
                    dw,
                    db,
                    &dln2,
                    &lc.resid_mid,
                    self.slot(slots.ln2_w),
                    &lc.ln2_mean,
                    &lc.ln2_rstd,
                    c,
                );
            }

            // resid_mid = resid_in + dropout(proj(attention(ln1(resid_in))))
            let mut dproj = dresid.clone();
            apply_mask(&mut dproj, &lc.proj_mask);
            let mut datty = vec![T::zero(); n * c];
            {
                let (dw, db) = grads.slot_pair_mut(slots.proj_w, slots.proj_b);
                linear_backward(
                    &mut datty,
                    dw,
                    Some(db),
                    &dproj,
                    &lc.atty,
                    self.slot(slots.proj_w),
                    n,
                    c,
                    c,
                );
            }

            let mut dqkv = vec![T::zero(); n * 3 * c];
            let mut datt = vec![T::zero(); seq];
            for b in 0..batch {
                for h in 0..nh {
                    for t in 0..seq {
                        let base = ((b * nh + h) * seq + t) * seq;
                        let dout = &datty[(b * seq + t) * c + h * hs..][..hs];
                        // through att·v
                        for t2 in 0..=t {
                            let voff = (b * seq + t2) * 3 * c + 2 * c + h * hs;
                            let keep = lc.att_mask.as_ref().map_or(T::one(), |m| m[base + t2]);
                            let w = lc.att[base + t2] * keep;
                            let val = &lc.qkv[voff..voff + hs];
                            datt[t2] = dot(dout, val) * keep;
                            axpy(&mut dqkv[voff..voff + hs], w, dout);
                        }
                        // through softmax
                        let probs = &lc.att[base..base + t + 1];
                        let pd = dot(probs, &datt[..=t]);
                        let qoff = (b * seq + t) * 3 * c + h * hs;
                        let q = &lc.qkv[qoff..qoff + hs];
                        for t2 in 0..=t {
                            let dpre = probs[t2] * (datt[t2] - pd) * scale;
                            let koff = (b * seq + t2) * 3 * c + c + h * hs;
                            let k = &lc.qkv[koff..koff + hs];
                            axpy(&mut dqkv[qoff..qoff + hs], dpre, k);
                            axpy(&mut dqkv[koff..koff + hs], dpre, q);
                        }
                    }
                }
            }

            let mut dln1 = vec![T::zero(); n * c];
            {
                let (dw, db) = grads.slot_pair_mut(slots.qkv_w, slots.qkv_b);
                linear_backward(
                    &mut dln1,
                    dw,
                    Some(db),
                    &dqkv,
                    &lc.ln1,
                    self.slot(slots.qkv_w),
                    n,
                    c,
                    3 * c,
                );
            }
            {
                let (dw, db) = grads.slot_pair_mut(slots.ln1_w, slots.ln1_b);
                layernorm_backward(
                    &mut dresid,
                    dw,
                    db,
                    &dln1,
                    &lc.resid_in,
                    self.slot(slots.ln1_w),
                    &lc.ln1_mean,
                    &lc.ln1_rstd,
                    c,
                );
            }
        }

        apply_mask(&mut dresid, &cache.emb_mask);
        let (dwte, dwpe) = grads.slot_pair_mut(lay.wte, lay.wpe);
        for (row, &tok) in cache.tokens.iter().enumerate() {
            let t = row % seq;
            let tok = tok as usize;
            let g = &dresid[row * c..(row + 1) * c];
            for i in 0..c {
                dwte[tok * c + i] = dwte[tok * c + i] + g[i];
                dwpe[t * c + i] = dwpe[t * c + i] + g[i];
            }
        }
    }
}
