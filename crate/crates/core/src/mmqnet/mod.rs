//! Multi-masked querying transformer.
//!
//! Each sample becomes `M + 2` tokens: one per modality (its embedding when
//! available, a learnable modality query otherwise), a category query and an
//! interference query. Attention is restricted so that no token reads a
//! missing modality slot other than its own.

mod layers;

pub use layers::{linear, mlp2, project};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::synthgen::FeatureSet;
use crate::tensor_ad::{AdError, ParamStore, Tape, Tensor, Var, MASK_LARGE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_lens: Vec<usize>,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub layers: usize,
    pub cls_hidden: usize,
    pub n_classes: usize,
}

impl ModelConfig {
    /// d = 16, 4 heads, feed-forward 128, 2 encoder blocks, 32-unit
    /// classifier, 2 classes.
    pub fn new(feature_lens: Vec<usize>) -> Self {
        ModelConfig {
            feature_lens,
            d_model: 16,
            heads: 4,
            ff_dim: 128,
            layers: 2,
            cls_hidden: 32,
            n_classes: 2,
        }
    }

    pub fn num_modalities(&self) -> usize {
        self.feature_lens.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.feature_lens.len() + 2
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<(), AdError> {
        let bad = |msg: String| Err(AdError::Usage(msg));
        if self.feature_lens.is_empty() || self.feature_lens.contains(&0) {
            return bad(format!("feature lengths {:?} must be nonempty and positive", self.feature_lens));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.heads));
        }
        if [self.ff_dim, self.cls_hidden, self.n_classes].contains(&0) {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }
}

/// Learnable query tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBank {
    /// `[M, d]`
    pub modality: Tensor,
    /// `[d]`
    pub category: Tensor,
    /// `[d]`
    pub interference: Tensor,
}

/// `allowed(i, j)`: token `i` may attend to token `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    tokens: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.tokens + j]
    }

    /// Row-major additive form: 0 where allowed, `-MASK_LARGE` elsewhere.
    pub fn additive(&self) -> Vec<f64> {
        self.allowed.iter().map(|&ok| if ok { 0.0 } else { -MASK_LARGE }).collect()
    }
}

/// `allowed(i, j) = (i == j) || ã_j` with `ã = [a, 1, 1]`.
pub fn build_mask(a: &[bool]) -> AttentionMask {
    let t = a.len() + 2;
    let avail = |j: usize| j >= a.len() || a[j];
    let allowed = (0..t * t).map(|k| k / t == k % t || avail(k % t)).collect();
    AttentionMask { tokens: t, allowed }
}

/// Fixed sinusoidal encoding, `[tokens, d]`.
pub fn positional_encoding(tokens: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(tokens * d);
    for pos in 0..tokens {
        for i in 0..d {
            let rate = 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(vec![tokens, d], data).expect("consistent shape")
}

/// Model hyperparameters plus trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d_model;
    let mut v: Vec<(String, Vec<usize>)> = Vec::new();
    for (m, &len) in cfg.feature_lens.iter().enumerate() {
        v.push((format!("embed.{m}.w"), vec![len, d]));
        v.push((format!("embed.{m}.b"), vec![d]));
    }
    v.push(("query.modality".into(), vec![cfg.num_modalities(), d]));
    v.push(("query.category".into(), vec![1, d]));
    v.push(("query.interference".into(), vec![1, d]));
    for l in 0..cfg.layers {
        for p in ["q", "k", "v", "o"] {
            v.push((format!("enc.{l}.w{p}"), vec![d, d]));
            if p != "k" {
                v.push((format!("enc.{l}.b{p}"), vec![d]));
            }
        }
        v.push((format!("enc.{l}.ln1.g"), vec![d]));
        v.push((format!("enc.{l}.ln1.b"), vec![d]));
        v.push((format!("enc.{l}.ff1.w"), vec![d, cfg.ff_dim]));
        v.push((format!("enc.{l}.ff1.b"), vec![cfg.ff_dim]));
        v.push((format!("enc.{l}.ff2.w"), vec![cfg.ff_dim, d]));
        v.push((format!("enc.{l}.ff2.b"), vec![d]));
        v.push((format!("enc.{l}.ln2.g"), vec![d]));
        v.push((format!("enc.{l}.ln2.b"), vec![d]));
    }
    v.push(("recon.w".into(), vec![d, d]));
    v.push(("recon.b".into(), vec![d]));
    v.push(("cls.w1".into(), vec![d, cfg.cls_hidden]));
    v.push(("cls.b1".into(), vec![cfg.cls_hidden]));
    v.push(("cls.w2".into(), vec![cfg.cls_hidden, cfg.n_classes]));
    v.push(("cls.b2".into(), vec![cfg.n_classes]));
    v
}

/// Fills a store from `(name, shape)` pairs, each bias directly after its
/// weight. Layer-norm gains start at one and offsets at zero; everything
/// else is U(-1/√fan_in, 1/√fan_in), where a bias shares its weight's fan-in
/// and a query uses `d`.
pub(crate) fn init_store(shapes: &[(String, Vec<usize>)], rng: &mut seed::Rng) -> ParamStore {
    let mut store = ParamStore::new();
    let mut fan_in = 1;
    for (name, shape) in shapes {
        let n: usize = shape.iter().product();
        let data = if name.ends_with(".g") {
            vec![1.0; n]
        } else if name.contains(".ln") {
            vec![0.0; n]
        } else {
            if name.starts_with("query") {
                fan_in = shape[1];
            } else if shape.len() == 2 {
                fan_in = shape[0];
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        store.insert(name.clone(), Tensor::new(shape.clone(), data).expect("consistent shape"));
    }
    store
}

impl Model {
    pub fn init(config: ModelConfig, seed_value: u64) -> Result<Model, AdError> {
        config.validate()?;
        let params = init_store(&param_shapes(&config), &mut seed::rng(seed_value, seed::INIT, 0));
        Ok(Model { config, params })
    }

    /// All-zero store with this configuration's names and shapes.
    pub fn layout(config: &ModelConfig) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape) in param_shapes(config) {
            store.insert(name, Tensor::zeros(&shape));
        }
        store
    }

    pub fn query_bank(&self) -> QueryBank {
        let get = |n: &str| self.params.get(n).expect("query present").clone();
        let d = self.config.d_model;
        QueryBank {
            modality: get("query.modality"),
            category: get("query.category").reshaped(&[d]).expect("d entries"),
            interference: get("query.interference").reshaped(&[d]).expect("d entries"),
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> Result<Bound<'t>, AdError> {
        Ok(Bound {
            store: self.params.clone(),
            vars: self.params.bind(tape)?,
        })
    }

    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Result<Bound<'t>, AdError> {
        Ok(Bound {
            store: self.params.clone(),
            vars: self.params.bind_frozen(tape)?,
        })
    }

    /// Inference-only forward pass; returns `[B, classes]` logits.
    pub fn predict_logits(&self, batch: &Batch) -> Result<Tensor, AdError> {
        let tape = Tape::new();
        let p = self.bind_frozen(&tape)?;
        Ok(forward(&self.config, &p, batch)?.logits.value())
    }
}

/// Parameters placed on a tape, looked up by name.
pub struct Bound<'t> {
    store: ParamStore,
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>, AdError> {
        self.store
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| AdError::MissingParam(name.to_string()))
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.store.iter().map(|(n, _)| n)
    }
}

/// A minibatch of feature sets in model layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// One `[B, len_m]` tensor per modality.
    pub features: Vec<Tensor>,
    pub a: Vec<Vec<bool>>,
    pub y: Vec<usize>,
}

impl Batch {
    pub fn from_sets<'a>(sets: impl IntoIterator<Item = &'a FeatureSet>) -> Result<Batch, AdError> {
        let sets: Vec<&FeatureSet> = sets.into_iter().collect();
        let first = sets.first().ok_or_else(|| AdError::Usage("empty batch".into()))?;
        let m = first.features.len();
        let mut features = Vec::with_capacity(m);
        for j in 0..m {
            let len = first.features[j].len();
            let mut data = Vec::with_capacity(sets.len() * len);
            for s in &sets {
                if s.features.len() != m || s.features[j].len() != len || s.a.len() != m {
                    return Err(AdError::Shape {
                        op: "batch",
                        detail: format!("inconsistent feature layout in modality {j}"),
                    });
                }
                data.extend_from_slice(&s.features[j]);
            }
            features.push(Tensor::new(vec![sets.len(), len], data)?);
        }
        Ok(Batch {
            features,
            a: sets.iter().map(|s| s.a.clone()).collect(),
            y: sets.iter().map(|s| s.y).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `[B, M, d]` availability broadcast over the model dimension.
    fn row_mask(&self, d: usize) -> Vec<bool> {
        self.a.iter().flat_map(|a| a.iter().flat_map(move |&b| std::iter::repeat_n(b, d))).collect()
    }

    /// `[B, M, d]` 0/1 weights for available rows.
    pub fn row_weights(&self, d: usize) -> Tensor {
        let m = self.a.first().map_or(0, Vec::len);
        let data = self.row_mask(d).into_iter().map(|b| f64::from(u8::from(b))).collect();
        Tensor::new(vec![self.len(), m, d], data).expect("consistent shape")
    }

    /// `[B, T, T]` additive attention mask.
    pub fn attention_mask(&self) -> Tensor {
        let t = self.a.first().map_or(2, |a| a.len() + 2);
        let data = self.a.iter().flat_map(|a| build_mask(a).additive()).collect();
        Tensor::new(vec![self.len(), t, t], data).expect("consistent shape")
    }
}

/// Everything the objective needs from one forward pass.
pub struct ForwardOutput<'t> {
    /// `[B, classes]`
    pub logits: Var<'t>,
    /// `[B, M, d]`
    pub f_m: Var<'t>,
    /// `[B, d]`
    pub f_c: Var<'t>,
    /// `[B, d]`
    pub f_i: Var<'t>,
    /// Reconstruction head output, `[B, M, d]`.
    pub recon: Var<'t>,
    /// Detached embeddings with missing rows zeroed, `[B, M, d]`.
    pub target: Var<'t>,
    /// Attention weights per layer and head, each `[B, T, T]`.
    pub attention: Vec<Tensor>,
}

/// Per-modality linear projection, stacked to `[B, M, d]`.
pub fn embed_modalities<'t>(cfg: &ModelConfig, p: &Bound<'t>, batch: &Batch) -> Result<Var<'t>, AdError> {
    if batch.features.len() != cfg.num_modalities() {
        return Err(AdError::Shape {
            op: "embed",
            detail: format!("{} modalities, expected {}", batch.features.len(), cfg.num_modalities()),
        });
    }
    let tape = p.vars[0].tape();
    let b = batch.len();
    let mut rows = Vec::with_capacity(cfg.num_modalities());
    for (m, x) in batch.features.iter().enumerate() {
        if x.shape() != [b, cfg.feature_lens[m]] {
            return Err(AdError::Shape {
                op: "embed",
                detail: format!("modality {m}: {:?}, expected [{b}, {}]", x.shape(), cfg.feature_lens[m]),
            });
        }
        let xv = tape.constant(x.clone())?;
        let e = linear(xv, p.get(&format!("embed.{m}.w"))?, p.get(&format!("embed.{m}.b"))?)?;
        rows.push(e.reshape(&[b, 1, cfg.d_model])?);
    }
    tape.concat(&rows, 1)
}

/// Token matrix `[B, M + 2, d]`: embeddings or modality queries, then the
/// category and interference queries, plus positional encoding.
pub fn assemble_tokens<'t>(cfg: &ModelConfig, p: &Bound<'t>, e: Var<'t>, batch: &Batch) -> Result<Var<'t>, AdError> {
    let tape = e.tape();
    let (b, d) = (batch.len(), cfg.d_model);
    let queries = p.get("query.modality")?.expand(b)?;
    let slots = tape.select(e, queries, &batch.row_mask(d))?;
    let qc = p.get("query.category")?.expand(b)?;
    let qi = p.get("query.interference")?.expand(b)?;
    let tokens = tape.concat(&[slots, qc, qi], 1)?;
    let pe = tape.constant(positional_encoding(cfg.num_tokens(), d))?;
    tokens.add_bias(pe)
}

/// Multi-head masked self-attention followed by a post-norm feed-forward
/// sublayer. Returns the block output and per-head attention weights.
///
/// Keys carry no bias: a key bias shifts every logit of a query row by the
/// same amount and cancels in the softmax.
pub fn masked_attention_block<'t>(
    cfg: &ModelConfig,
    p: &Bound<'t>,
    layer: usize,
    x: Var<'t>,
    mask: &Tensor,
) -> Result<(Var<'t>, Vec<Tensor>), AdError> {
    let tape = x.tape();
    let shape = x.shape();
    let (b, t, d) = (shape[0], shape[1], shape[2]);
    let dh = cfg.head_dim();
    let w = |n: &str| p.get(&format!("enc.{layer}.{n}"));
    let q = linear(x, w("wq")?, w("bq")?)?;
    let k = project(x, w("wk")?)?;
    let v = linear(x, w("wv")?, w("bv")?)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    let mut weights = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = q.slice(2, h * dh, dh)?;
        let kh = k.slice(2, h * dh, dh)?;
        let vh = v.slice(2, h * dh, dh)?;
        let logits = qh.bmm(kh.transpose()?)?.scale(scale)?;
        let attn = logits.softmax_lastdim(Some(mask))?;
        weights.push(attn.value());
        heads.push(attn.bmm(vh)?);
    }
    debug_assert_eq!(heads[0].shape(), vec![b, t, dh]);
    let merged = tape.concat(&heads, 2)?;
    let attended = linear(merged, w("wo")?, w("bo")?)?;
    let h1 = x.add(attended)?.layer_norm(w("ln1.g")?, w("ln1.b")?)?;
    let ff = linear(linear(h1, w("ff1.w")?, w("ff1.b")?)?.relu()?, w("ff2.w")?, w("ff2.b")?)?;
    let out = h1.add(ff)?.layer_norm(w("ln2.g")?, w("ln2.b")?)?;
    debug_assert_eq!(out.shape(), vec![b, t, d]);
    Ok((out, weights))
}

/// `(F̂^M [B, M, d], F̂^C [B, d], F̂^I [B, d])`.
pub fn split_outputs<'t>(z: Var<'t>) -> Result<(Var<'t>, Var<'t>, Var<'t>), AdError> {
    let s = z.shape();
    if s.len() != 3 || s[1] < 3 {
        return Err(AdError::Shape {
            op: "split_outputs",
            detail: format!("{s:?}"),
        });
    }
    let (b, t, d) = (s[0], s[1], s[2]);
    let m = t - 2;
    Ok((
        z.slice(1, 0, m)?,
        z.slice(1, m, 1)?.reshape(&[b, d])?,
        z.slice(1, m + 1, 1)?.reshape(&[b, d])?,
    ))
}

/// Classification MLP on `F̂^C`.
pub fn classifier_logits<'t>(p: &Bound<'t>, f_c: Var<'t>) -> Result<Var<'t>, AdError> {
    mlp2(f_c, p.get("cls.w1")?, p.get("cls.b1")?, p.get("cls.w2")?, p.get("cls.b2")?)
}

pub fn forward<'t>(cfg: &ModelConfig, p: &Bound<'t>, batch: &Batch) -> Result<ForwardOutput<'t>, AdError> {
    if batch.is_empty() {
        return Err(AdError::Usage("empty batch".into()));
    }
    let tape = p.vars[0].tape();
    let d = cfg.d_model;
    let e = embed_modalities(cfg, p, batch)?;
    let mut z = assemble_tokens(cfg, p, e, batch)?;
    let mask = batch.attention_mask();
    let mut attention = Vec::with_capacity(cfg.layers * cfg.heads);
    for layer in 0..cfg.layers {
        let (out, w) = masked_attention_block(cfg, p, layer, z, &mask)?;
        z = out;
        attention.extend(w);
    }
    let (f_m, f_c, f_i) = split_outputs(z)?;
    let recon = linear(f_m, p.get("recon.w")?, p.get("recon.b")?)?;
    let zeros = tape.constant(Tensor::zeros(&e.shape()))?;
    let target = tape.select(e.detach()?, zeros, &batch.row_mask(d))?;
    let logits = classifier_logits(p, f_c)?;
    Ok(ForwardOutput {
        logits,
        f_m,
        f_c,
        f_i,
        recon,
        target,
        attention,
    })
}
