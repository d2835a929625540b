//! The four-branch affinity model.
//!
//! ```text
//! protein  [L,40] -> Linear 128 -> dilated residual blocks -> attention -> max pool ┐
//! pocket   [L,40] -> Linear 128 -> conv/LN/GELU stack                   -> max pool ├ concat 512
//! SMILES   [L]    -> Embedding 128 -> dilated residual blocks -> attention -> pool  │
//! H-bonds  [20,9] -> KNN graph encoder                                              ┘
//! 512 -> 128 -> Dropout -> PReLU -> 64 -> Dropout -> PReLU -> 1
//! ```
//!
//! A disabled branch contributes a zero vector so the head stays 512 wide,
//! unless `shrink_head` is set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{EncodedSample, DESCRIPTOR_DIM, PAD_INDEX};
use crate::gnn::{self, GnnOptions};
use crate::nn::{grad_check, GradCheckOptions, GradCheckReport, Graph, Mode, ParamStore, ParamVars, Real, Tensor, Var};
use crate::objective::hybrid_loss_node;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HbgsaConfig {
    pub feature_dim: usize,
    pub protein_len: usize,
    pub pocket_len: usize,
    pub smiles_len: usize,
    pub smiles_vocab: usize,
    pub hbond_n: usize,
    pub hbond_k: usize,
    /// One residual block per entry.
    pub dilations: Vec<usize>,
    /// Kernel of the dilated protein / SMILES convolutions.
    pub conv_kernel: usize,
    pub pocket_layers: usize,
    pub pocket_kernel: usize,
    /// Channel width between the first and last pocket convolutions.
    pub pocket_hidden: usize,
    pub attention_heads: usize,
    pub dropout_p: f64,
    pub lambda_pearson: f64,
    pub use_pocket: bool,
    pub use_smiles: bool,
    pub use_hbond_gnn: bool,
    pub use_attention: bool,
    /// Size the head for the enabled branches only.
    pub shrink_head: bool,
    /// Run the sequence encoders on the unpadded prefix only.
    pub trim_padding: bool,
    pub gnn_normalize: bool,
    pub gnn_symmetrize: bool,
    pub mask_padded_hbonds: bool,
}

impl Default for HbgsaConfig {
    fn default() -> Self {
        HbgsaConfig {
            feature_dim: 128,
            protein_len: 1000,
            pocket_len: 63,
            smiles_len: 150,
            smiles_vocab: crate::featurize::SmilesVocabulary::standard().len(),
            hbond_n: 20,
            hbond_k: 5,
            dilations: vec![1, 2, 4, 8, 16],
            conv_kernel: 9,
            pocket_layers: 3,
            pocket_kernel: 3,
            pocket_hidden: 512,
            attention_heads: 1,
            dropout_p: 0.5,
            lambda_pearson: 50.0,
            use_pocket: true,
            use_smiles: true,
            use_hbond_gnn: true,
            use_attention: true,
            shrink_head: false,
            trim_padding: true,
            gnn_normalize: false,
            gnn_symmetrize: false,
            mask_padded_hbonds: false,
        }
    }
}

pub const ABLATION_VARIANTS: [&str; 7] = [
    "SEQ",
    "SEQ+SMILES",
    "SEQ+Pocket",
    "SEQ+Pocket+SMILES",
    "SEQ+Pocket+SMILES+self-attention",
    "SEQ+Pocket+SMILES+H-BondGNN",
    "FULL",
];

impl HbgsaConfig {
    /// Small widths and lengths for fast tests and gradient checks.
    pub fn tiny() -> Self {
        HbgsaConfig {
            feature_dim: 8,
            protein_len: 12,
            pocket_len: 6,
            smiles_len: 10,
            hbond_n: 8,
            hbond_k: 3,
            dilations: vec![1, 2],
            conv_kernel: 3,
            pocket_layers: 2,
            pocket_hidden: 12,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("feature_dim", self.feature_dim),
            ("protein_len", self.protein_len),
            ("pocket_len", self.pocket_len),
            ("smiles_len", self.smiles_len),
            ("smiles_vocab", self.smiles_vocab),
            ("hbond_n", self.hbond_n),
            ("pocket_layers", self.pocket_layers),
            ("pocket_hidden", self.pocket_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::config("dilations must be a non-empty list of positive integers"));
        }
        for (name, k) in [("conv_kernel", self.conv_kernel), ("pocket_kernel", self.pocket_kernel)] {
            if k % 2 == 0 {
                return Err(Error::config(format!("{name} must be odd, got {k}")));
            }
        }
        if self.attention_heads != 1 {
            return Err(Error::config(format!("only single-head attention is supported, got {}", self.attention_heads)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config(format!("dropout_p must lie in [0, 1), got {}", self.dropout_p)));
        }
        if self.hbond_k == 0 || self.hbond_k >= self.hbond_n {
            return Err(Error::config(format!("hbond_k must lie in [1, {}], got {}", self.hbond_n - 1, self.hbond_k)));
        }
        if !self.lambda_pearson.is_finite() || self.lambda_pearson < 0.0 {
            return Err(Error::config(format!("lambda_pearson must be a non-negative number, got {}", self.lambda_pearson)));
        }
        Ok(())
    }

    /// Flags of a named ablation row.
    pub fn ablation_variant(&self, name: &str) -> Result<HbgsaConfig> {
        let key = name.trim().to_ascii_lowercase();
        let (pocket, smiles, attention, hbond) = match key.as_str() {
            "seq" => (false, false, false, false),
            "seq+smiles" => (false, true, false, false),
            "seq+pocket" => (true, false, false, false),
            "seq+pocket+smiles" => (true, true, false, false),
            "seq+pocket+smiles+self-attention" | "+self-attention" => (true, true, true, false),
            "seq+pocket+smiles+h-bondgnn" | "+h-bondgnn" => (true, true, false, true),
            "full" | "hbgsa" => (true, true, true, true),
            _ => {
                return Err(Error::config(format!("unknown ablation variant `{name}` (expected one of {})", ABLATION_VARIANTS.join(", "))))
            }
        };
        Ok(HbgsaConfig { use_pocket: pocket, use_smiles: smiles, use_attention: attention, use_hbond_gnn: hbond, ..self.clone() })
    }

    pub fn gnn_options(&self) -> GnnOptions {
        GnnOptions {
            k: self.hbond_k,
            normalize: self.gnn_normalize,
            symmetrize: self.gnn_symmetrize,
            mask_padded: self.mask_padded_hbonds,
        }
    }

    fn active_branches(&self) -> [(&'static str, bool); 4] {
        [("protein", true), ("pocket", self.use_pocket), ("smiles", self.use_smiles), ("hbond", self.use_hbond_gnn)]
    }

    pub fn fusion_width(&self) -> usize {
        let n = if self.shrink_head { self.active_branches().iter().filter(|b| b.1).count() } else { 4 };
        n * self.feature_dim
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: HbgsaConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

fn add_linear<T: Real>(s: &mut ParamStore<T>, name: &str, fan_in: usize, out: usize) -> Result<()> {
    s.add_fan_in(&format!("{name}.weight"), &[fan_in, out], fan_in)?;
    s.add_fan_in(&format!("{name}.bias"), &[out], fan_in)?;
    Ok(())
}

fn add_conv<T: Real>(s: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize, k: usize) -> Result<()> {
    s.add_fan_in(&format!("{name}.weight"), &[c_out, c_in, k], c_in * k)?;
    s.add_fan_in(&format!("{name}.bias"), &[c_out], c_in * k)?;
    Ok(())
}

fn add_norm<T: Real>(s: &mut ParamStore<T>, name: &str, d: usize) -> Result<()> {
    s.add_const(&format!("{name}.gamma"), &[d], 1.0)?;
    s.add_const(&format!("{name}.beta"), &[d], 0.0)?;
    Ok(())
}

fn add_dilated_stack<T: Real>(s: &mut ParamStore<T>, prefix: &str, c: &HbgsaConfig) -> Result<()> {
    let d = c.feature_dim;
    for i in 0..c.dilations.len() {
        add_conv(s, &format!("{prefix}.block{i}.conv"), d, d, c.conv_kernel)?;
        add_norm(s, &format!("{prefix}.block{i}.norm"), d)?;
    }
    for w in ["query", "key", "value"] {
        s.add_fan_in(&format!("{prefix}.attention.{w}"), &[d, d], d)?;
    }
    Ok(())
}

fn pocket_channels(c: &HbgsaConfig) -> Vec<(usize, usize)> {
    let d = c.feature_dim;
    (0..c.pocket_layers)
        .map(|i| {
            let c_in = if i == 0 { d } else { c.pocket_hidden };
            let c_out = if i + 1 == c.pocket_layers { d } else { c.pocket_hidden };
            (c_in, c_out)
        })
        .collect()
}

/// Every branch's parameters (disabled branches included), seeded.
pub fn build_params<T: Real>(config: &HbgsaConfig, seed: u64) -> Result<ParamStore<T>> {
    config.validate()?;
    let d = config.feature_dim;
    let mut s = ParamStore::new(seed);

    add_linear(&mut s, "protein.proj", DESCRIPTOR_DIM, d)?;
    add_dilated_stack(&mut s, "protein", config)?;

    add_linear(&mut s, "pocket.proj", DESCRIPTOR_DIM, d)?;
    for (i, (c_in, c_out)) in pocket_channels(config).into_iter().enumerate() {
        add_conv(&mut s, &format!("pocket.conv{i}"), c_in, c_out, config.pocket_kernel)?;
        add_norm(&mut s, &format!("pocket.norm{i}"), c_out)?;
    }

    let bound = 3f64.sqrt();
    s.add_uniform("smiles.embedding", &[config.smiles_vocab, d], bound)?;
    add_dilated_stack(&mut s, "smiles", config)?;

    gnn::register_params(&mut s, "hbond", d)?;

    add_linear(&mut s, "head.fc1", config.fusion_width(), 128)?;
    s.add_const("head.act1.slope", &[1], 0.25)?;
    add_linear(&mut s, "head.fc2", 128, 64)?;
    s.add_const("head.act2.slope", &[1], 0.25)?;
    add_linear(&mut s, "head.fc3", 64, 1)?;
    Ok(s)
}

/// Whether a parameter belongs to a branch the config switches off.
pub fn is_inactive(config: &HbgsaConfig, name: &str) -> bool {
    let off = |prefix: &str, on: bool| !on && name.starts_with(prefix);
    off("pocket.", config.use_pocket)
        || off("smiles.", config.use_smiles)
        || off("hbond.", config.use_hbond_gnn)
        || (!config.use_attention && name.contains(".attention."))
}

/// Scalar parameters the configured model actually uses.
pub fn param_count<T: Real>(config: &HbgsaConfig, params: &ParamStore<T>) -> usize {
    params.iter().filter(|(n, _)| !is_inactive(config, n)).map(|(_, t)| t.len()).sum()
}

fn trimmed_rows<T: Real>(m: &[T], width: usize, trim: bool) -> usize {
    let rows = m.len() / width;
    if !trim {
        return rows;
    }
    let last = m.chunks(width).rposition(|r| r.iter().any(|v| *v != T::zero()));
    last.map_or(1, |i| i + 1)
}

fn layer(p: &ParamVars, name: &str) -> Result<(Var, Var)> {
    Ok((p.get(&format!("{name}.weight"))?, p.get(&format!("{name}.bias"))?))
}

fn norm<T: Real>(g: &mut Graph<T>, p: &ParamVars, name: &str, x: Var) -> Result<Var> {
    g.layer_norm(x, p.get(&format!("{name}.gamma"))?, p.get(&format!("{name}.beta"))?, LN_EPS)
}

fn dilated_stack<T: Real>(g: &mut Graph<T>, p: &ParamVars, prefix: &str, c: &HbgsaConfig, mut h: Var) -> Result<Var> {
    for (i, &dil) in c.dilations.iter().enumerate() {
        let (w, b) = layer(p, &format!("{prefix}.block{i}.conv"))?;
        let y = g.conv1d(h, w, b, dil)?;
        let y = norm(g, p, &format!("{prefix}.block{i}.norm"), y)?;
        let y = g.gelu(y);
        h = g.add(h, y)?;
    }
    if c.use_attention {
        h = g.self_attention(
            h,
            p.get(&format!("{prefix}.attention.query"))?,
            p.get(&format!("{prefix}.attention.key"))?,
            p.get(&format!("{prefix}.attention.value"))?,
        )?;
    }
    g.max_rows(h)
}

fn descriptor_input<T: Real>(g: &mut Graph<T>, m: &[f32], trim: bool) -> Result<Var> {
    let m: Vec<T> = m.iter().map(|&v| T::lit(v as f64)).collect();
    let rows = trimmed_rows(&m, DESCRIPTOR_DIM, trim);
    Ok(g.constant(Tensor::new(&[rows, DESCRIPTOR_DIM], m[..rows * DESCRIPTOR_DIM].to_vec())?))
}

fn protein_branch<T: Real>(g: &mut Graph<T>, p: &ParamVars, c: &HbgsaConfig, s: &EncodedSample) -> Result<Var> {
    let x = descriptor_input(g, &s.protein, c.trim_padding)?;
    let (w, b) = layer(p, "protein.proj")?;
    let h = g.linear(x, w, Some(b))?;
    dilated_stack(g, p, "protein", c, h)
}

fn pocket_branch<T: Real>(g: &mut Graph<T>, p: &ParamVars, c: &HbgsaConfig, s: &EncodedSample) -> Result<Var> {
    let x = descriptor_input(g, &s.pocket, c.trim_padding)?;
    let (w, b) = layer(p, "pocket.proj")?;
    let mut h = g.linear(x, w, Some(b))?;
    for i in 0..c.pocket_layers {
        let (w, b) = layer(p, &format!("pocket.conv{i}"))?;
        h = g.conv1d(h, w, b, 1)?;
        h = norm(g, p, &format!("pocket.norm{i}"), h)?;
        h = g.gelu(h);
    }
    g.max_rows(h)
}

fn smiles_branch<T: Real>(g: &mut Graph<T>, p: &ParamVars, c: &HbgsaConfig, s: &EncodedSample) -> Result<Var> {
    let len = if c.trim_padding {
        s.smiles.iter().rposition(|&t| t != PAD_INDEX).map_or(1, |i| i + 1)
    } else {
        s.smiles.len()
    };
    let h = g.embedding(p.get("smiles.embedding")?, &s.smiles[..len])?;
    dilated_stack(g, p, "smiles", c, h)
}

fn hbond_branch<T: Real>(g: &mut Graph<T>, p: &ParamVars, c: &HbgsaConfig, s: &EncodedSample) -> Result<Var> {
    let x: Vec<T> = s.hbond.iter().map(|&v| T::lit(v as f64)).collect();
    gnn::encode(g, p, "hbond", &x, &c.gnn_options())
}

/// Fused `[fusion_width]` representation of one sample.
pub fn fuse<T: Real>(g: &mut Graph<T>, p: &ParamVars, c: &HbgsaConfig, s: &EncodedSample) -> Result<Var> {
    s.check_shapes(c.protein_len, c.pocket_len, c.smiles_len, c.hbond_n)?;
    let d = c.feature_dim;
    let mut parts = vec![protein_branch(g, p, c, s)?];
    type Branch<T> = fn(&mut Graph<T>, &ParamVars, &HbgsaConfig, &EncodedSample) -> Result<Var>;
    let rest: [(bool, Branch<T>); 3] =
        [(c.use_pocket, pocket_branch), (c.use_smiles, smiles_branch), (c.use_hbond_gnn, hbond_branch)];
    for (on, branch) in rest {
        if on {
            parts.push(branch(g, p, c, s)?);
        } else if !c.shrink_head {
            parts.push(g.constant(Tensor::zeros(&[d])));
        }
    }
    g.concat(&parts)
}

fn checked_dropout<T: Real>(g: &mut Graph<T>, x: Var, p: f64) -> Result<Var> {
    let y = g.dropout(x, p)?;
    if g.mode() == Mode::Eval && y != x {
        return Err(Error::Internal("dropout active in eval mode".into()));
    }
    Ok(y)
}

/// Predictions for a batch, as a `[B]` vector on the tape.
pub fn forward<T: Real>(g: &mut Graph<T>, p: &ParamVars, c: &HbgsaConfig, batch: &[EncodedSample]) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let fused = batch.iter().map(|s| fuse(g, p, c, s)).collect::<Result<Vec<_>>>()?;
    let x = g.stack_rows(&fused)?;
    let (w, b) = layer(p, "head.fc1")?;
    let h = g.linear(x, w, Some(b))?;
    let h = checked_dropout(g, h, c.dropout_p)?;
    let h = g.prelu(h, p.get("head.act1.slope")?)?;
    let (w, b) = layer(p, "head.fc2")?;
    let h = g.linear(h, w, Some(b))?;
    let h = checked_dropout(g, h, c.dropout_p)?;
    let h = g.prelu(h, p.get("head.act2.slope")?)?;
    let (w, b) = layer(p, "head.fc3")?;
    let y = g.linear(h, w, Some(b))?;
    Ok(y)
}

/// Eval-mode predictions as plain numbers.
pub fn predict<T: Real>(c: &HbgsaConfig, params: &ParamStore<T>, batch: &[EncodedSample]) -> Result<Vec<f64>> {
    let mut g = Graph::new(Mode::Eval, 0);
    let p = g.bind_params(params);
    let y = forward(&mut g, &p, c, batch)?;
    let out: Vec<f64> = g.value(y).data().iter().map(|v| v.as_f64()).collect();
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite prediction for `{}`", batch[i].id)));
    }
    Ok(out)
}

/// One prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub affinity_pred: f64,
}

/// Predictions in chunks of `chunk` samples, in input order.
pub fn predict_all<T: Real>(c: &HbgsaConfig, params: &ParamStore<T>, samples: &[EncodedSample], chunk: usize) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(samples.len());
    for part in samples.chunks(chunk.max(1)) {
        for (s, v) in part.iter().zip(predict(c, params, part)?) {
            out.push(Prediction { id: s.id.clone(), affinity_pred: v });
        }
    }
    Ok(out)
}

/// Finite-difference check of the whole model under the hybrid loss, in 64-bit.
pub fn check_gradients(
    config: &HbgsaConfig,
    batch: &[EncodedSample],
    lambda: f64,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let target: Vec<f64> = batch
        .iter()
        .map(|s| s.affinity.map(f64::from).ok_or_else(|| Error::data(format!("sample `{}` has no label", s.id))))
        .collect::<Result<_>>()?;
    let mut store = build_params::<f64>(config, seed)?;
    grad_check(&mut store, opts, |g, p| {
        let pred = forward(g, p, config, batch)?;
        Ok(hybrid_loss_node(g, pred, &target, lambda)?.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn head_parameter_count_matches_layer_dims() {
        let s = build_params::<f32>(&HbgsaConfig::default(), 0).unwrap();
        let head: usize = s.iter().filter(|(n, _)| n.starts_with("head.")).map(|(_, t)| t.len()).sum();
        assert_eq!(head, 512 * 128 + 128 + 128 * 64 + 64 + 64 + 1 + 2);
        assert_eq!(head, 73_987);
    }

    #[test]
    fn default_count_in_range_and_monotone() {
        let c = HbgsaConfig::default();
        let s = build_params::<f32>(&c, 0).unwrap();
        let n = param_count(&c, &s);
        assert!((2_500_000..=3_700_000).contains(&n), "{n}");
        let no_hb = c.ablation_variant("SEQ+Pocket+SMILES+self-attention").unwrap();
        assert!(param_count(&no_hb, &s) < n);
    }

    #[test]
    fn ablation_rows() {
        let c = HbgsaConfig::default();
        let seq = c.ablation_variant("SEQ").unwrap();
        assert!(!seq.use_pocket && !seq.use_smiles && !seq.use_hbond_gnn && !seq.use_attention);
        let full = c.ablation_variant("FULL").unwrap();
        assert!(full.use_pocket && full.use_smiles && full.use_hbond_gnn && full.use_attention);
        let att = c.ablation_variant("SEQ+Pocket+SMILES+self-attention").unwrap();
        assert!(att.use_attention && !att.use_hbond_gnn);
        assert!(matches!(c.ablation_variant("nope"), Err(Error::Config(_))));
        for name in ABLATION_VARIANTS {
            c.ablation_variant(name).unwrap();
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = HbgsaConfig::default();
        assert_eq!(HbgsaConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(HbgsaConfig::from_toml("attention_heads = 2").is_err());
    }

    #[test]
    fn eval_is_deterministic_and_zero_hbonds_are_finite() {
        let c = HbgsaConfig::tiny();
        let s = build_params::<f32>(&c, 1).unwrap();
        let mut batch = synthetic::samples(&c, 3, 5);
        batch[0].hbond.iter_mut().for_each(|v| *v = 0.0);
        let a = predict(&c, &s, &batch).unwrap();
        let b = predict(&c, &s, &batch).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn backward_reaches_exactly_the_enabled_parameters() {
        for variant in ["FULL", "SEQ"] {
            let c = HbgsaConfig::tiny().ablation_variant(variant).unwrap();
            let s = build_params::<f64>(&c, 2).unwrap();
            let batch = synthetic::samples(&c, 16, 9);
            let mut g = Graph::new(Mode::Train, 4);
            let p = g.bind_params(&s);
            let y = forward(&mut g, &p, &c, &batch).unwrap();
            assert_eq!(g.value(y).shape(), [16, 1]);
            let target: Vec<f64> = batch.iter().map(|b| b.affinity.unwrap() as f64).collect();
            let (loss, _) = crate::objective::hybrid_loss_node(&mut g, y, &target, 50.0).unwrap();
            let grads = g.backward(loss).unwrap();
            for (id, (name, _)) in s.iter().enumerate() {
                let has = grads.wrt(p.var_of(id).unwrap()).is_some();
                assert_eq!(has, !is_inactive(&c, name), "{variant}: {name}");
            }
        }
    }
}
