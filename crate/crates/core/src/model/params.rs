use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::ops::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Embedding,
    Weight,
    /// Output projection feeding the residual stream; initialized with a depth-scaled std.
    ResidualWeight,
    Bias,
    NormScale,
    NormOffset,
}

impl TensorRole {
    /// Whether decoupled weight decay applies.
    pub fn decays(self) -> bool {
        matches!(self, TensorRole::Weight | TensorRole::ResidualWeight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    pub role: TensorRole,
}

impl TensorEntry {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerSlots {
    pub ln1_w: usize,
    pub ln1_b: usize,
    pub qkv_w: usize,
    pub qkv_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
    pub ln2_w: usize,
    pub ln2_b: usize,
    pub fc_w: usize,
    pub fc_b: usize,
    pub fc2_w: usize,
    pub fc2_b: usize,
}

/// Named-tensor directory over one flat parameter buffer.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub entries: Vec<TensorEntry>,
    pub total: usize,
    pub(crate) wte: usize,
    pub(crate) wpe: usize,
    pub(crate) layers: Vec<LayerSlots>,
    pub(crate) lnf_w: usize,
    pub(crate) lnf_b: usize,
    pub(crate) head: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (c, v, t) = (cfg.d_model, cfg.vocab_size, cfg.context_window);
        let mut entries = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>, role: TensorRole| {
            let len = shape.iter().product();
            entries.push(TensorEntry {
                name,
                shape,
                offset: total,
                len,
                role,
            });
            total += len;
            entries.len() - 1
        };
        use TensorRole::*;
        let wte = push("wte".into(), vec![v, c], Embedding);
        let wpe = push("wpe".into(), vec![t, c], Embedding);
        let layers = (0..cfg.num_layers)
            .map(|l| {
                let p = |s: &str| format!("h.{l}.{s}");
                LayerSlots {
                    ln1_w: push(p("ln_1.weight"), vec![c], NormScale),
                    ln1_b: push(p("ln_1.bias"), vec![c], NormOffset),
                    // query, key and value projections stacked along the output axis
                    qkv_w: push(p("attn.c_attn.weight"), vec![3 * c, c], Weight),
                    qkv_b: push(p("attn.c_attn.bias"), vec![3 * c], Bias),
                    proj_w: push(p("attn.c_proj.weight"), vec![c, c], ResidualWeight),
                    proj_b: push(p("attn.c_proj.bias"), vec![c], Bias),
                    ln2_w: push(p("ln_2.weight"), vec![c], NormScale),
                    ln2_b: push(p("ln_2.bias"), vec![c], NormOffset),
                    fc_w: push(p("mlp.c_fc.weight"), vec![4 * c, c], Weight),
                    fc_b: push(p("mlp.c_fc.bias"), vec![4 * c], Bias),
                    fc2_w: push(p("mlp.c_proj.weight"), vec![c, 4 * c], ResidualWeight),
                    fc2_b: push(p("mlp.c_proj.bias"), vec![c], Bias),
                }
            })
            .collect();
        let lnf_w = push("ln_f.weight".into(), vec![c], NormScale);
        let lnf_b = push("ln_f.bias".into(), vec![c], NormOffset);
        let head = push("lm_head.weight".into(), vec![v, c], Weight);
        ParamLayout {
            entries,
            total,
            wte,
            wpe,
            layers,
            lnf_w,
            lnf_b,
            head,
        }
    }

    pub fn find(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Parameters (or gradients, or optimizer moments) of one model as a flat buffer.
#[derive(Debug, Clone)]
pub struct Params<T> {
    pub config: ModelConfig,
    pub layout: Arc<ParamLayout>,
    pub values: Vec<T>,
}

impl<T: Scalar> PartialEq for Params<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.values == other.values
    }
}

impl<T: Scalar> Params<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let layout = Arc::new(ParamLayout::new(config));
        let values = vec![T::zero(); layout.total];
        Params {
            config: *config,
            layout,
            values,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            config: self.config,
            layout: Arc::clone(&self.layout),
            values: vec![T::zero(); self.values.len()],
        }
    }

    /// GPT-2 style initialization: N(0, 0.02) weights, residual projections
    /// scaled by `1/sqrt(2·num_layers)`, zero biases, unit norm scales.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 0.02;
        let resid_std = std / (2.0 * config.num_layers as f64).sqrt();
        let layout = Arc::clone(&params.layout);
        for entry in &layout.entries {
            let slot = &mut params.values[entry.range()];
            let sd = match entry.role {
                TensorRole::Embedding | TensorRole::Weight => std,
                TensorRole::ResidualWeight => resid_std,
                TensorRole::NormScale => {
                    slot.fill(T::one());
                    continue;
                }
                TensorRole::Bias | TensorRole::NormOffset => continue,
            };
            let normal = Normal::new(0.0, sd).expect("positive std");
            for v in slot.iter_mut() {
                *v = T::lit(normal.sample(&mut rng));
            }
        }
        Ok(params)
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.find(name).map(|e| &self.values[e.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.layout.find(name)?.range();
        Some(&mut self.values[range])
    }

    pub(crate) fn slot(&self, idx: usize) -> &[T] {
        &self.values[self.layout.entries[idx].range()]
    }

    pub(crate) fn slot_mut(&mut self, idx: usize) -> &mut [T] {
        let range = self.layout.entries[idx].range();
        &mut self.values[range]
    }

    /// Two disjoint tensors borrowed mutably at once.
    pub(crate) fn slot_pair_mut(&mut self, i: usize, j: usize) -> (&mut [T], &mut [T]) {
        let (ri, rj) = (self.layout.entries[i].range(), self.layout.entries[j].range());
        assert!(ri.end <= rj.start, "slot_pair_mut expects ordered, disjoint tensors");
        let (lo, hi) = self.values.split_at_mut(rj.start);
        (&mut lo[ri], &mut hi[..rj.end - rj.start])
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            config: self.config,
            layout: Arc::clone(&self.layout),
            values: self
                .values
                .iter()
                .map(|v| U::lit(v.to_f64().expect("finite cast")))
                .collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| {
                let x = v.to_f64().unwrap_or(f64::NAN);
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_finite(&self) -> Result<()> {
        for e in &self.layout.entries {
            if self.values[e.range()].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteUpdate {
                    tensor: e.name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Element count from the shapes, written out independently of the layout code.
    fn analytic_count(cfg: &ModelConfig) -> usize {
        let (c, v, t, l) = (cfg.d_model, cfg.vocab_size, cfg.context_window, cfg.num_layers);
        let per_layer = 2 * c + (3 * c * c + 3 * c) + (c * c + c) + 2 * c + (4 * c * c + 4 * c) + (4 * c * c + c);
        v * c + t * c + l * per_layer + 2 * c + v * c
    }

    #[test]
    fn parameter_count_matches_shapes() {
        let add = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
        assert_eq!(add.num_params(), analytic_count(&ModelConfig::addition()));
        assert_eq!(add.num_params(), 86_592);
        let mul = ParamLayout::new(&ModelConfig::multiplication());
        assert_eq!(mul.total, analytic_count(&ModelConfig::multiplication()));
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::addition();
        let a = Params::<f32>::init(&cfg, 0).unwrap();
        let b = Params::<f32>::init(&cfg, 0).unwrap();
        let c = Params::<f32>::init(&cfg, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn init_roles() {
        let p = Params::<f64>::init(&ModelConfig::addition(), 0).unwrap();
        assert!(p.tensor("h.0.ln_1.weight").unwrap().iter().all(|&v| v == 1.0));
        assert!(p.tensor("h.2.mlp.c_fc.bias").unwrap().iter().all(|&v| v == 0.0));
        let head = p.tensor("lm_head.weight").unwrap();
        let sd = (head.iter().map(|v| v * v).sum::<f64>() / head.len() as f64).sqrt();
        assert!((sd - 0.02).abs() < 0.004, "{sd}");
        let proj = p.tensor("h.1.attn.c_proj.weight").unwrap();
        let sd = (proj.iter().map(|v| v * v).sum::<f64>() / proj.len() as f64).sqrt();
        assert!((sd - 0.02 / 6f64.sqrt()).abs() < 0.001, "{sd}");
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = ModelConfig::addition();
        cfg.num_heads = 5;
        assert!(Params::<f32>::init(&cfg, 0).is_err());
    }
}
