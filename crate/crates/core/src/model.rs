//! The signature autoencoder.
//!
//! Encoder: a WaveNet block over heart rate (32 filters) and a WaveNet block
//! over the activity channels (16 filters), concatenated to 48 features per
//! minute and pooled to one vector by scaled dot-product attention with a
//! single query derived from the temporal mean. Decoder: the *same* activity
//! block, the signature appended to every minute, then two width-1
//! convolutions (ReLU hidden layer, linear output).
//!
//! Every WaveNet layer is a gated dilated causal convolution (kernel 2)
//! followed by a width-1 residual projection added back to the layer input;
//! a width-1 convolution first lifts the input to the block width.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::preprocess::PreprocessedSeries;
use crate::rng;
use crate::tensor::Tensor;

pub const SIGNATURE_SIZES: [usize; 6] = [4, 8, 16, 32, 64, 128];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveNetBlockConfig {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub dilations: Vec<usize>,
}

impl WaveNetBlockConfig {
    pub fn new(in_channels: usize, filters: usize) -> Self {
        Self {
            in_channels,
            filters,
            kernel_width: 2,
            dilations: vec![1, 2, 4, 8, 16, 32, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.filters == 0 || self.kernel_width == 0 {
            return Err(Error::InvalidConfig("block widths must be >= 1".into()));
        }
        let doubling = self
            .dilations
            .iter()
            .enumerate()
            .all(|(i, &d)| d == 1usize << i);
        if self.dilations.is_empty() || !doubling {
            return Err(Error::InvalidConfig(format!(
                "dilations must double from 1, got {:?}",
                self.dilations
            )));
        }
        Ok(())
    }
}

/// Minutes of history that can influence one output: `1 + Σ (K−1)·d`.
pub fn receptive_field(config: &WaveNetBlockConfig) -> usize {
    1 + config
        .dilations
        .iter()
        .map(|d| (config.kernel_width - 1) * d)
        .sum::<usize>()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub signature_size: usize,
    /// Heart-rate block (encoder only).
    pub hr_block: WaveNetBlockConfig,
    /// Activity block, shared by encoder and decoder.
    pub activity_block: WaveNetBlockConfig,
    pub attention_dim: usize,
    pub head_hidden: usize,
}

impl ModelConfig {
    pub fn new(signature_size: usize) -> Self {
        Self {
            signature_size,
            hr_block: WaveNetBlockConfig::new(1, 32),
            activity_block: WaveNetBlockConfig::new(3, 16),
            attention_dim: 8,
            head_hidden: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.signature_size == 0 {
            return Err(Error::InvalidConfig("signature_size must be >= 1".into()));
        }
        if self.attention_dim == 0 || self.head_hidden == 0 {
            return Err(Error::InvalidConfig("attention and head widths must be >= 1".into()));
        }
        self.hr_block.validate()?;
        self.activity_block.validate()
    }

    fn features(&self) -> usize {
        self.hr_block.filters + self.activity_block.filters
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
    pub is_bias: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerIndex {
    pub filter_w: usize,
    pub filter_b: usize,
    pub gate_w: usize,
    pub gate_b: usize,
    pub res_w: usize,
    pub res_b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockIndex {
    pub lift_w: usize,
    pub lift_b: usize,
    pub layers: Vec<LayerIndex>,
}

impl BlockIndex {
    pub fn param_indices(&self) -> Vec<usize> {
        let mut v = vec![self.lift_w, self.lift_b];
        for l in &self.layers {
            v.extend([l.filter_w, l.filter_b, l.gate_w, l.gate_b, l.res_w, l.res_b]);
        }
        v
    }
}

/// Positions of every parameter tensor in [`ModelParams::tensors`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub specs: Vec<ParamSpec>,
    pub hr_block: BlockIndex,
    activity_block: BlockIndex,
    pub query_w: usize,
    pub query_b: usize,
    pub key_w: usize,
    pub value_w: usize,
    pub value_b: usize,
    pub head_hidden_w: usize,
    pub head_hidden_b: usize,
    pub head_out_w: usize,
    pub head_out_b: usize,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let mut b = SpecBuilder { specs: Vec::new() };
        let hr_block = b.block("w1", &config.hr_block);
        let activity_block = b.block("w2", &config.activity_block);

        let f = config.features();
        let d = config.attention_dim;
        let s = config.signature_size;
        let h = config.head_hidden;
        let query_w = b.add("attn.query.weight".into(), vec![d, f], f, d, false);
        let query_b = b.add("attn.query.bias".into(), vec![d], f, d, true);
        let (key_w, _) = b.conv("attn.key", d, f, 1, false);
        let (value_w, value_b) = b.conv("attn.value", s, f, 1, true);
        let (head_hidden_w, head_hidden_b) = b.conv("decoder.hidden", h, config.activity_block.filters + s, 1, true);
        let (head_out_w, head_out_b) = b.conv("decoder.out", 1, h, 1, true);

        Self {
            specs: b.specs,
            hr_block,
            activity_block,
            query_w,
            query_b,
            key_w,
            value_w,
            value_b,
            head_hidden_w,
            head_hidden_b,
            head_out_w,
            head_out_b,
        }
    }

    /// Activity block as used by the encoder.
    pub fn encoder_activity_block(&self) -> &BlockIndex {
        &self.activity_block
    }

    /// Activity block as used by the decoder; the same tensors as the encoder's.
    pub fn decoder_activity_block(&self) -> &BlockIndex {
        &self.activity_block
    }

    pub fn decoder_unique(&self) -> [usize; 4] {
        [self.head_hidden_w, self.head_hidden_b, self.head_out_w, self.head_out_b]
    }
}

struct SpecBuilder {
    specs: Vec<ParamSpec>,
}

impl SpecBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, fan_in: usize, fan_out: usize, is_bias: bool) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape,
            fan_in,
            fan_out,
            is_bias,
        });
        self.specs.len() - 1
    }

    /// Weight `[c_out, c_in, k]` and optional bias; missing bias is `usize::MAX`.
    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize, bias: bool) -> (usize, usize) {
        let (fi, fo) = (c_in * k, c_out * k);
        let w = self.add(format!("{name}.weight"), vec![c_out, c_in, k], fi, fo, false);
        let b = if bias {
            self.add(format!("{name}.bias"), vec![c_out], fi, fo, true)
        } else {
            usize::MAX
        };
        (w, b)
    }

    fn block(&mut self, prefix: &str, cfg: &WaveNetBlockConfig) -> BlockIndex {
        let c = cfg.filters;
        let k = cfg.kernel_width;
        let (lift_w, lift_b) = self.conv(&format!("{prefix}.lift"), c, cfg.in_channels, 1, true);
        let layers = (0..cfg.dilations.len())
            .map(|i| {
                let (filter_w, filter_b) = self.conv(&format!("{prefix}.layer{i}.filter"), c, c, k, true);
                let (gate_w, gate_b) = self.conv(&format!("{prefix}.layer{i}.gate"), c, c, k, true);
                let (res_w, res_b) = self.conv(&format!("{prefix}.layer{i}.residual"), c, c, 1, true);
                LayerIndex {
                    filter_w,
                    filter_b,
                    gate_w,
                    gate_b,
                    res_w,
                    res_b,
                }
            })
            .collect();
        BlockIndex {
            lift_w,
            lift_b,
            layers,
        }
    }
}

/// Closed-form parameter count of one block.
pub fn block_param_count(cfg: &WaveNetBlockConfig) -> usize {
    let c = cfg.filters;
    let layer = 2 * (c * c * cfg.kernel_width + c) + c * c + c;
    c * cfg.in_channels + c + cfg.dilations.len() * layer
}

/// Closed-form parameter count of the whole model.
pub fn param_count(config: &ModelConfig) -> usize {
    let f = config.features();
    let (d, s) = (config.attention_dim, config.signature_size);
    block_param_count(&config.hr_block)
        + block_param_count(&config.activity_block)
        + (f * d + d)
        + f * d
        + (f * s + s)
        + decoder_unique_param_count(config)
}

/// Parameters used only by the decoder: `(16+s)·16 + 16 + 16·1 + 1`.
pub fn decoder_unique_param_count(config: &ModelConfig) -> usize {
    let h = config.head_hidden;
    (config.activity_block.filters + config.signature_size) * h + h + h + 1
}

/// All learnable tensors, with the activity block stored once.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
    layout: Layout,
}

impl ModelParams {
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if tensors.len() != layout.specs.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, got {}",
                layout.specs.len(),
                tensors.len()
            )));
        }
        for (t, spec) in tensors.iter().zip(&layout.specs) {
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "model parameters",
                    expected: spec.shape.clone(),
                    got: t.shape().to_vec(),
                });
            }
            if !t.is_finite() {
                return Err(Error::InvalidConfig(format!("{} has non-finite values", spec.name)));
            }
        }
        Ok(Self {
            config,
            tensors,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn signature_size(&self) -> usize {
        self.config.signature_size
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.layout
            .specs
            .iter()
            .map(|s| s.name.as_str())
            .zip(&self.tensors)
    }
}

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let layout = Layout::new(&config);
    let mut r = rng::stream(seed, &[rng::TAG_INIT]);
    let tensors = layout
        .specs
        .iter()
        .map(|spec| {
            let n: usize = spec.shape.iter().product();
            let data = if spec.is_bias {
                vec![0.0; n]
            } else {
                let limit = libm::sqrt(6.0 / (spec.fan_in + spec.fan_out) as f64);
                (0..n).map(|_| r.random_range(-limit..limit)).collect()
            };
            Tensor::new(spec.shape.clone(), data).expect("layout shape")
        })
        .collect();
    ModelParams::from_tensors(config, tensors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub person_id: String,
    pub window_label: String,
    pub values: Vec<f64>,
}

/// Parameter leaves of one graph. With `decoder_activity` set, the decoder
/// reads its own copy of the activity block (untied; tests only).
struct Leaves {
    all: Vec<NodeId>,
    decoder_activity: Option<Vec<NodeId>>,
}

impl Leaves {
    fn insert(g: &mut Graph, params: &ModelParams, untied: bool) -> Self {
        let all: Vec<NodeId> = params.tensors.iter().map(|t| g.parameter(t.clone())).collect();
        let decoder_activity = untied.then(|| {
            params
                .tensors
                .iter()
                .map(|t| g.parameter(t.clone()))
                .collect()
        });
        Self {
            all,
            decoder_activity,
        }
    }

    fn decoder_block_nodes(&self) -> &[NodeId] {
        self.decoder_activity.as_deref().unwrap_or(&self.all)
    }
}

fn block_forward(
    g: &mut Graph,
    index: &BlockIndex,
    cfg: &WaveNetBlockConfig,
    nodes: &[NodeId],
    input: NodeId,
) -> Result<NodeId> {
    let mut x = g.conv1d_dilated_causal(input, nodes[index.lift_w], nodes[index.lift_b], 1)?;
    for (layer, &dilation) in index.layers.iter().zip(&cfg.dilations) {
        let f = g.conv1d_dilated_causal(x, nodes[layer.filter_w], nodes[layer.filter_b], dilation)?;
        let s = g.conv1d_dilated_causal(x, nodes[layer.gate_w], nodes[layer.gate_b], dilation)?;
        let z = g.gated_activation(f, s)?;
        let r = g.conv1d_dilated_causal(z, nodes[layer.res_w], nodes[layer.res_b], 1)?;
        x = g.add(x, r)?;
    }
    Ok(x)
}

fn check_series(params: &ModelParams, activity: &Tensor, hr: Option<&Tensor>) -> Result<()> {
    let c = &params.config;
    if activity.shape().len() != 2 || activity.shape()[0] != c.activity_block.in_channels {
        return Err(Error::ShapeMismatch {
            op: "activity channels",
            expected: vec![c.activity_block.in_channels, 0],
            got: activity.shape().to_vec(),
        });
    }
    if let Some(hr) = hr {
        if hr.shape() != [c.hr_block.in_channels, activity.shape()[1]] {
            return Err(Error::ShapeMismatch {
                op: "heart-rate channel",
                expected: vec![c.hr_block.in_channels, activity.shape()[1]],
                got: hr.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Returns `(signature, attention weights)` nodes.
fn encode_nodes(
    g: &mut Graph,
    params: &ModelParams,
    leaves: &Leaves,
    hr: NodeId,
    activity: NodeId,
) -> Result<(NodeId, NodeId)> {
    let l = &params.layout;
    let c = &params.config;
    let n = &leaves.all;
    let hr_feat = block_forward(g, &l.hr_block, &c.hr_block, n, hr)?;
    let act_feat = block_forward(g, l.encoder_activity_block(), &c.activity_block, n, activity)?;
    let features = g.concat_channels(hr_feat, act_feat)?;
    let pooled = g.time_mean(features)?;
    let query = g.linear(pooled, n[l.query_w], n[l.query_b])?;
    let no_bias = g.input(Tensor::zeros(&[c.attention_dim]));
    let keys = g.conv1d_dilated_causal(features, n[l.key_w], no_bias, 1)?;
    let values = g.conv1d_dilated_causal(features, n[l.value_w], n[l.value_b], 1)?;
    let scale = 1.0 / libm::sqrt(c.attention_dim as f64);
    let scores = g.attention_scores(query, keys, scale)?;
    let weights = g.softmax(scores)?;
    let signature = g.weighted_sum(values, weights)?;
    Ok((signature, weights))
}

/// Returns the `[1 × T]` prediction node.
fn decode_nodes(
    g: &mut Graph,
    params: &ModelParams,
    leaves: &Leaves,
    activity: NodeId,
    signature: NodeId,
) -> Result<NodeId> {
    let l = &params.layout;
    let c = &params.config;
    let block = leaves.decoder_block_nodes();
    let act_feat = block_forward(g, l.decoder_activity_block(), &c.activity_block, block, activity)?;
    let joined = g.append_broadcast(act_feat, signature)?;
    let n = &leaves.all;
    let hidden = g.conv1d_dilated_causal(joined, n[l.head_hidden_w], n[l.head_hidden_b], 1)?;
    let hidden = g.relu(hidden);
    g.conv1d_dilated_causal(hidden, n[l.head_out_w], n[l.head_out_b], 1)
}

/// Signature and attention weights over time for one series.
pub fn encode(params: &ModelParams, series: &PreprocessedSeries) -> Result<(Signature, Vec<f64>)> {
    let values = encode_raw(params, &series.hr, &series.activity)?;
    Ok((
        Signature {
            person_id: series.person_id.clone(),
            window_label: series.window_label.clone(),
            values: values.0,
        },
        values.1,
    ))
}

/// [`encode`] on bare channels.
pub fn encode_raw(params: &ModelParams, hr: &Tensor, activity: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    check_series(params, activity, Some(hr))?;
    let mut g = Graph::new();
    let leaves = Leaves::insert(&mut g, params, false);
    let h = g.input(hr.clone());
    let a = g.input(activity.clone());
    let (sig, weights) = encode_nodes(&mut g, params, &leaves, h, a)?;
    Ok((g.value(sig).data().to_vec(), g.value(weights).data().to_vec()))
}

/// Predicted whitened heart rate `[T]` from activity and a signature.
pub fn decode(params: &ModelParams, activity: &Tensor, signature: &[f64]) -> Result<Vec<f64>> {
    if signature.len() != params.signature_size() {
        return Err(Error::SignatureLength {
            expected: params.signature_size(),
            got: signature.len(),
        });
    }
    check_series(params, activity, None)?;
    let mut g = Graph::new();
    let leaves = Leaves::insert(&mut g, params, false);
    let a = g.input(activity.clone());
    let s = g.input(Tensor::from_vec(signature.to_vec()));
    let pred = decode_nodes(&mut g, params, &leaves, a, s)?;
    Ok(g.value(pred).data().to_vec())
}

/// Graph of one reconstruction loss, ready for [`Graph::backward`].
pub struct LossGraph {
    pub graph: Graph,
    pub loss: NodeId,
    /// Parameter leaves in [`ModelParams::tensors`] order.
    pub params: Vec<NodeId>,
    /// Decoder-side copies of every tensor when built untied.
    pub decoder_params: Option<Vec<NodeId>>,
}

impl LossGraph {
    pub fn value(&self) -> f64 {
        self.graph.value(self.loss).data()[0]
    }

    /// Loss value and gradient per parameter tensor.
    pub fn gradients(&self) -> Result<(f64, Vec<Tensor>)> {
        let mut grads = self.graph.backward(self.loss)?;
        let gs = self
            .params
            .iter()
            .map(|&n| grads.take(n).expect("parameter gradient"))
            .collect();
        Ok((self.value(), gs))
    }
}

fn build_loss_graph(params: &ModelParams, series: &PreprocessedSeries, untied: bool) -> Result<LossGraph> {
    check_series(params, &series.activity, Some(&series.hr))?;
    let mut graph = Graph::new();
    let leaves = Leaves::insert(&mut graph, params, untied);
    let loss = loss_nodes(&mut graph, params, &leaves, series)?;
    Ok(LossGraph {
        graph,
        loss,
        params: leaves.all,
        decoder_params: leaves.decoder_activity,
    })
}

fn loss_nodes(g: &mut Graph, params: &ModelParams, leaves: &Leaves, series: &PreprocessedSeries) -> Result<NodeId> {
    let hr = g.input(series.hr.clone());
    let activity = g.input(series.activity.clone());
    let (sig, _) = encode_nodes(g, params, leaves, hr, activity)?;
    let pred = decode_nodes(g, params, leaves, activity, sig)?;
    g.masked_mse(pred, hr, &series.loss_mask)
}

/// Masked reconstruction loss of one series through encoder and decoder.
pub fn forward_loss(params: &ModelParams, series: &PreprocessedSeries) -> Result<LossGraph> {
    build_loss_graph(params, series, false)
}

/// Same loss with the decoder reading a separate copy of the activity block.
/// The encoder-side gradient lands in `params`, the decoder-side one in
/// `decoder_params`.
pub fn forward_loss_untied(params: &ModelParams, series: &PreprocessedSeries) -> Result<LossGraph> {
    build_loss_graph(params, series, true)
}

/// Loss as a function of arbitrary parameter tensors (finite differences).
pub fn loss_with_tensors(params: &ModelParams, tensors: &[Tensor], series: &PreprocessedSeries) -> Result<f64> {
    let mut g = Graph::new();
    let leaves = Leaves {
        all: tensors.iter().map(|t| g.input(t.clone())).collect(),
        decoder_activity: None,
    };
    let loss = loss_nodes(&mut g, params, &leaves, series)?;
    Ok(g.value(loss).data()[0])
}

/// Masked MSE of predicting `target` from a given signature.
pub fn reconstruction_mse(params: &ModelParams, signature: &[f64], target: &PreprocessedSeries) -> Result<f64> {
    let pred = decode(params, &target.activity, signature)?;
    crate::autodiff::ops::masked_mse(
        &Tensor::from_vec(pred),
        &Tensor::from_vec(target.hr.data().to_vec()),
        &target.loss_mask,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_series(t: usize, seed: u64) -> PreprocessedSeries {
        let mut r = rng::stream(seed, &[42]);
        let steps: Vec<f64> = (0..t).map(|_| r.random_range(0.0..1.0)).collect();
        let mut activity = steps.clone();
        for _ in 0..t {
            activity.push(f64::from(r.random_bool(0.2)));
        }
        activity.extend(core::iter::repeat_n(0.0, t));
        let hr: Vec<f64> = (0..t).map(|_| r.random_range(-1.5..1.5)).collect();
        let mask: Vec<f64> = (0..t).map(|_| f64::from(r.random_bool(0.9))).collect();
        PreprocessedSeries {
            person_id: "p".into(),
            window_label: "w".into(),
            activity: Tensor::matrix(3, t, activity).unwrap(),
            hr: Tensor::matrix(1, t, hr).unwrap(),
            loss_mask: Tensor::from_vec(mask),
            hr_mean: 70.0,
            hr_std: 10.0,
        }
    }

    #[test]
    fn receptive_field_formula() {
        assert_eq!(receptive_field(&WaveNetBlockConfig::new(1, 32)), 128);
        let one = WaveNetBlockConfig {
            dilations: vec![1],
            ..WaveNetBlockConfig::new(1, 4)
        };
        assert_eq!(receptive_field(&one), 2);
        let three = WaveNetBlockConfig {
            dilations: vec![1, 2, 4],
            ..WaveNetBlockConfig::new(1, 4)
        };
        assert_eq!(receptive_field(&three), 8);
        let bad = WaveNetBlockConfig {
            dilations: vec![1, 3],
            ..WaveNetBlockConfig::new(1, 4)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_counts_match() {
        let a = init_model(ModelConfig::new(32), 5).unwrap();
        let b = init_model(ModelConfig::new(32), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_model(ModelConfig::new(32), 6).unwrap());
        let unique: usize = a.layout().decoder_unique().iter().map(|&i| a.tensors[i].len()).sum();
        assert_eq!(unique, 801);
        assert_eq!(decoder_unique_param_count(&a.config), 801);
        for s in SIGNATURE_SIZES {
            let p = init_model(ModelConfig::new(s), 0).unwrap();
            assert_eq!(p.param_count(), param_count(&p.config));
        }
        assert!(init_model(ModelConfig::new(0), 0).is_err());
    }

    #[test]
    fn activity_block_is_stored_once() {
        let p = init_model(ModelConfig::new(8), 0).unwrap();
        let l = p.layout();
        assert_eq!(l.encoder_activity_block(), l.decoder_activity_block());
        let w2: Vec<_> = p.named().filter(|(n, _)| n.starts_with("w2.")).collect();
        assert_eq!(w2.len(), 2 + 7 * 6);
        let mut names: Vec<&str> = p.named().map(|(n, _)| n).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), p.tensors.len());
    }

    #[test]
    fn attention_is_a_distribution_and_shapes_hold() {
        let p = init_model(ModelConfig::new(16), 1).unwrap();
        for t in [1, 256, 1440] {
            let s = random_series(t, t as u64);
            let (sig, w) = encode(&p, &s).unwrap();
            assert_eq!(sig.values.len(), 16);
            assert_eq!(w.len(), t);
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let pred = decode(&p, &s.activity, &sig.values).unwrap();
            assert_eq!(pred.len(), t);
        }
    }

    #[test]
    fn zero_series_signature_is_bias_only() {
        let p = init_model(ModelConfig::new(8), 2).unwrap();
        let zero = |t| PreprocessedSeries {
            activity: Tensor::zeros(&[3, t]),
            hr: Tensor::zeros(&[1, t]),
            loss_mask: Tensor::full(&[t], 1.0),
            ..random_series(t, 0)
        };
        let (a, _) = encode(&p, &zero(50)).unwrap();
        let (b, _) = encode(&p, &zero(50)).unwrap();
        assert_eq!(a.values, b.values);
        // With zero biases everywhere, zero input maps to a zero signature.
        assert!(a.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decode_is_deterministic_and_causal() {
        let p = init_model(ModelConfig::new(8), 3).unwrap();
        let s = random_series(300, 9);
        let sig = vec![0.3; 8];
        let base = decode(&p, &s.activity, &sig).unwrap();
        assert_eq!(base, decode(&p, &s.activity, &sig).unwrap());
        let mut r = rng::stream(1, &[]);
        for _ in 0..5 {
            let t0 = r.random_range(0..300);
            let mut act = s.activity.clone();
            act.data_mut()[t0] += 0.7;
            let pred = decode(&p, &act, &sig).unwrap();
            let max_change = (0..t0).map(|t| (pred[t] - base[t]).abs()).fold(0.0, f64::max);
            assert_eq!(max_change, 0.0);
            assert_ne!(pred[t0], base[t0]);
        }
        assert!(matches!(
            decode(&p, &s.activity, &[0.0; 4]),
            Err(Error::SignatureLength { .. })
        ));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let p = init_model(ModelConfig::new(8), 3).unwrap();
        let mut s = random_series(20, 1);
        s.activity = Tensor::zeros(&[2, 20]);
        assert!(matches!(encode(&p, &s), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn own_prediction_as_target_gives_zero_loss() {
        let p = init_model(ModelConfig::new(8), 4).unwrap();
        let s = random_series(100, 2);
        let (sig, _) = encode(&p, &s).unwrap();
        let pred = decode(&p, &s.activity, &sig.values).unwrap();
        // Encoder reads the heart rate, so only the decoder target changes.
        let loss = crate::autodiff::ops::masked_mse(
            &Tensor::from_vec(pred.clone()),
            &Tensor::from_vec(pred),
            &s.loss_mask,
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        let lg = forward_loss(&p, &s).unwrap();
        let direct = reconstruction_mse(&p, &sig.values, &s).unwrap();
        assert!((lg.value() - direct).abs() < 1e-12);
    }

    #[test]
    fn all_masked_series_is_an_error() {
        let p = init_model(ModelConfig::new(8), 4).unwrap();
        let mut s = random_series(30, 2);
        s.loss_mask = Tensor::zeros(&[30]);
        assert!(matches!(forward_loss(&p, &s), Err(Error::EmptyMask)));
    }

    #[test]
    fn tied_gradient_equals_sum_of_untied_copies() {
        let p = init_model(ModelConfig::new(8), 7).unwrap();
        let s = random_series(64, 3);
        let (_, tied) = forward_loss(&p, &s).unwrap().gradients().unwrap();
        let lg = forward_loss_untied(&p, &s).unwrap();
        let mut grads = lg.graph.backward(lg.loss).unwrap();
        let dec = lg.decoder_params.as_ref().unwrap();
        for idx in p.layout().encoder_activity_block().param_indices() {
            let enc = grads.take(lg.params[idx]).unwrap();
            let de = grads.take(dec[idx]).unwrap();
            assert!(de.data().iter().any(|&v| v != 0.0));
            for i in 0..enc.len() {
                let sum = enc.data()[i] + de.data()[i];
                assert!((tied[idx].data()[i] - sum).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn small_model_gradients_match_finite_differences() {
        let config = ModelConfig {
            signature_size: 3,
            hr_block: WaveNetBlockConfig {
                dilations: vec![1, 2, 4],
                ..WaveNetBlockConfig::new(1, 4)
            },
            activity_block: WaveNetBlockConfig {
                dilations: vec![1, 2],
                ..WaveNetBlockConfig::new(3, 3)
            },
            attention_dim: 2,
            head_hidden: 4,
        };
        // Non-zero biases so that every bias gradient is exercised.
        let mut p = init_model(config, 8).unwrap();
        let mut r = rng::stream(3, &[]);
        for t in p.tensors.iter_mut() {
            for v in t.data_mut() {
                *v += r.random_range(-0.2..0.2);
            }
        }
        let s = random_series(24, 5);
        let (_, analytic) = forward_loss(&p, &s).unwrap().gradients().unwrap();
        let report = crate::autodiff::gradcheck::check_gradients(&p.tensors, &analytic, 1e-5, |ts| {
            loss_with_tensors(&p, ts, &s)
        })
        .unwrap();
        assert!(report.passes(1e-4), "{:?}", report.flagged(1e-4).collect::<Vec<_>>());
    }
}
