//! Branched actor-critic: convolutional encoder over stacked frames, game
//! state appended after the flatten, one shared hidden layer, then a value
//! branch and a policy branch with one logit head per action branch.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{MultiDiscreteAction, Observation, BRANCH_SIZES};
use crate::nn::gradcheck::GradProbe;
use crate::nn::{
    categorical_entropy, categorical_sample, concat, conv_output_extent, init, log_softmax, softmax, split_columns,
    Dense, Layer, LayerSpec, Real, Relu, Sequential, Tensor,
};
use crate::{Error, Result};

pub const HIDDEN_GAIN: f64 = core::f64::consts::SQRT_2;
pub const VALUE_GAIN: f64 = 1.0;
pub const POLICY_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvStage {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvStage { out_channels, kernel, stride }
    }
}

/// The three-stage encoder of the original network.
pub const PAPER_ENCODER: [ConvStage; 3] = [ConvStage::new(32, 8, 4), ConvStage::new(64, 4, 2), ConvStage::new(64, 3, 1)];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub frame_height: usize,
    pub frame_width: usize,
    pub stacked_frames: usize,
    pub color_channels: usize,
    pub game_state_dims: usize,
    pub hidden_size: usize,
    pub branch_sizes: Vec<usize>,
    pub encoder: Vec<ConvStage>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// 84x84 input; encoder output 64*7*7 = 3136.
    pub fn paper_fidelity() -> Self {
        ModelConfig { frame_height: 84, frame_width: 84, ..ModelConfig::desk() }
    }

    /// 64x64 input; encoder output 64*4*4 = 1024.
    pub fn desk() -> Self {
        ModelConfig {
            frame_height: 64,
            frame_width: 64,
            stacked_frames: 3,
            color_channels: 3,
            game_state_dims: 2,
            hidden_size: 512,
            branch_sizes: BRANCH_SIZES.to_vec(),
            encoder: PAPER_ENCODER.to_vec(),
        }
    }

    /// Small enough for an exhaustive finite-difference check: 16x16 input,
    /// 4 and 8 channels, hidden width 32.
    pub fn reduced() -> Self {
        ModelConfig {
            frame_height: 16,
            frame_width: 16,
            hidden_size: 32,
            encoder: vec![ConvStage::new(4, 4, 2), ConvStage::new(8, 3, 1)],
            ..ModelConfig::desk()
        }
    }

    pub fn input_channels(&self) -> usize {
        self.stacked_frames * self.color_channels
    }

    /// Spatial extents after each conv stage.
    pub fn encoder_extents(&self) -> Result<Vec<(usize, usize)>> {
        let (mut h, mut w) = (self.frame_height, self.frame_width);
        let mut out = Vec::with_capacity(self.encoder.len());
        for (i, s) in self.encoder.iter().enumerate() {
            match (conv_output_extent(h, s.kernel, s.stride), conv_output_extent(w, s.kernel, s.stride)) {
                (Some(nh), Some(nw)) => {
                    h = nh;
                    w = nw;
                }
                _ => {
                    return Err(Error::config(format!(
                        "model.encoder[{i}]: kernel {} stride {} does not fit a {h}x{w} input",
                        s.kernel, s.stride
                    )))
                }
            }
            out.push((h, w));
        }
        Ok(out)
    }

    /// Width of the flattened encoder output.
    pub fn flatten_width(&self) -> Result<usize> {
        let extents = self.encoder_extents()?;
        let channels = self.encoder.last().map_or(self.input_channels(), |s| s.out_channels);
        let (h, w) = extents.last().copied().unwrap_or((self.frame_height, self.frame_width));
        Ok(channels * h * w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stacked_frames == 0 {
            return Err(Error::config("model.stacked_frames must be at least 1"));
        }
        if self.color_channels == 0 || self.frame_height == 0 || self.frame_width == 0 {
            return Err(Error::config("model frame dimensions must be positive"));
        }
        if self.hidden_size == 0 {
            return Err(Error::config("model.hidden_size must be positive"));
        }
        if self.branch_sizes.is_empty() || self.branch_sizes.iter().any(|&n| n < 2) {
            return Err(Error::config(format!(
                "model.branch_sizes must be non-empty with every size >= 2, got {:?}",
                self.branch_sizes
            )));
        }
        if self.encoder.is_empty() {
            return Err(Error::config("model.encoder needs at least one conv stage"));
        }
        if self.encoder.iter().any(|s| s.out_channels == 0 || s.kernel == 0 || s.stride == 0) {
            return Err(Error::config("model.encoder stages need positive channels, kernel and stride"));
        }
        self.flatten_width().map(drop)
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut channels = self.input_channels();
        for s in &self.encoder {
            specs.push(LayerSpec::Conv2d {
                in_channels: channels,
                out_channels: s.out_channels,
                kernel: s.kernel,
                stride: s.stride,
            });
            specs.push(LayerSpec::Relu);
            channels = s.out_channels;
        }
        specs.push(LayerSpec::Flatten);
        specs
    }

    /// Floats per observation frame block (`stack * C * H * W`).
    pub fn frame_len(&self) -> usize {
        self.input_channels() * self.frame_height * self.frame_width
    }
}

/// Number of joint actions a flattened (non-branched) head would need.
pub fn flatten_action_space(branch_sizes: &[usize]) -> usize {
    branch_sizes.iter().product()
}

/// Observations laid out for the encoder: frames `[B, stack*3, H, W]` and
/// game state `[B, G]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBatch<R> {
    pub frames: Tensor<R>,
    pub game_state: Tensor<R>,
}

/// Writes `[stack, H, W, C]` frames into `[stack*C, H, W]` order.
pub fn frames_to_chw<R: Real>(frames: &[f32], stack: usize, h: usize, w: usize, c: usize, out: &mut [R]) {
    let plane = h * w;
    for s in 0..stack {
        let src = &frames[s * plane * c..(s + 1) * plane * c];
        for (p, px) in src.chunks_exact(c).enumerate() {
            for (ci, &v) in px.iter().enumerate() {
                out[(s * c + ci) * plane + p] = R::of(f64::from(v));
            }
        }
    }
}

impl<R: Real> ObsBatch<R> {
    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_observations(observations: &[&Observation], config: &ModelConfig) -> Result<Self> {
        let n = observations.len();
        let frame_len = config.frame_len();
        let g = config.game_state_dims;
        let mut frames = vec![R::zero(); n * frame_len];
        let mut game_state = Vec::with_capacity(n * g);
        for (i, obs) in observations.iter().enumerate() {
            check_observation(obs, config)?;
            frames_to_chw(
                &obs.frames,
                config.stacked_frames,
                config.frame_height,
                config.frame_width,
                config.color_channels,
                &mut frames[i * frame_len..(i + 1) * frame_len],
            );
            game_state.extend(obs.game_state.iter().map(|&x| R::of(f64::from(x))));
        }
        Ok(ObsBatch {
            frames: Tensor::new(
                vec![n, config.input_channels(), config.frame_height, config.frame_width],
                frames,
            )?,
            game_state: Tensor::new(vec![n, g], game_state)?,
        })
    }

    /// Rows `indices` of encoder-layout storage (`frame_len` and `g` floats
    /// per row).
    pub fn gather(frames: &[f32], game_state: &[f32], indices: &[usize], config: &ModelConfig) -> Result<Self> {
        let frame_len = config.frame_len();
        let g = config.game_state_dims;
        let mut f = Vec::with_capacity(indices.len() * frame_len);
        let mut s = Vec::with_capacity(indices.len() * g);
        for &i in indices {
            f.extend(frames[i * frame_len..(i + 1) * frame_len].iter().map(|&x| R::of(f64::from(x))));
            s.extend(game_state[i * g..(i + 1) * g].iter().map(|&x| R::of(f64::from(x))));
        }
        Ok(ObsBatch {
            frames: Tensor::new(
                vec![indices.len(), config.input_channels(), config.frame_height, config.frame_width],
                f,
            )?,
            game_state: Tensor::new(vec![indices.len(), g], s)?,
        })
    }
}

fn check_observation(obs: &Observation, config: &ModelConfig) -> Result<()> {
    if obs.stacked_frames != config.stacked_frames
        || obs.height != config.frame_height
        || obs.width != config.frame_width
        || obs.frames.len() != config.frame_len()
    {
        return Err(Error::usage(format!(
            "observation is {}x{}x{}x3 ({} floats), model expects {}x{}x{}x{}",
            obs.stacked_frames,
            obs.height,
            obs.width,
            obs.frames.len(),
            config.stacked_frames,
            config.frame_height,
            config.frame_width,
            config.color_channels
        )));
    }
    if obs.game_state.len() != config.game_state_dims {
        return Err(Error::usage(format!(
            "game state has {} entries, model expects {}",
            obs.game_state.len(),
            config.game_state_dims
        )));
    }
    Ok(())
}

/// Raw network outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<R> {
    /// One `[B, branch_size]` tensor per branch.
    pub logits: Vec<Tensor<R>>,
    pub values: Vec<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub branch_probs: Vec<Vec<f64>>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub actions: Vec<MultiDiscreteAction>,
    /// Per sample, per branch.
    pub branch_log_probs: Vec<Vec<f64>>,
    /// Joint log-prob: the sum over branches.
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<R> {
    pub log_probs: Vec<R>,
    /// Per-sample mean of the branch entropies.
    pub entropies: Vec<R>,
    pub values: Vec<R>,
    /// Per branch, `[B * branch_size]` row-major probabilities.
    pub probs: Vec<Vec<R>>,
    /// Per branch, `[B * branch_size]` row-major log-probabilities.
    pub log_probs_full: Vec<Vec<R>>,
}

#[derive(Debug, Clone)]
pub struct AgentModel<R> {
    config: ModelConfig,
    encoder: Sequential<R>,
    shared: Dense<R>,
    shared_relu: Relu,
    value_hidden: Dense<R>,
    value_relu: Relu,
    value_head: Dense<R>,
    policy_hidden: Dense<R>,
    policy_relu: Relu,
    policy_heads: Vec<Dense<R>>,
    flatten_width: usize,
}

fn init_dense<R: Real, G: Rng + ?Sized>(d: &mut Dense<R>, gain: f64, rng: &mut G) -> Result<()> {
    let w = init::orthogonal(d.out_features, d.in_features, gain, rng);
    d.weight = Tensor::from_f64(d.weight.shape().to_vec(), &w)?.with_grad();
    d.bias = Tensor::zeros(vec![d.out_features]).with_grad();
    Ok(())
}

fn push_dense<'a, R>(prefix: String, d: &'a Dense<R>, out: &mut Vec<(String, &'a Tensor<R>)>) {
    out.push((format!("{prefix}.weight"), &d.weight));
    out.push((format!("{prefix}.bias"), &d.bias));
}

impl<R: Real> AgentModel<R> {
    /// Builds the network with zero parameters.
    pub fn zeroed(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let flatten_width = config.flatten_width()?;
        let concat_width = flatten_width + config.game_state_dims;
        let h = config.hidden_size;
        Ok(AgentModel {
            config: config.clone(),
            encoder: Sequential::from_specs(&config.encoder_specs())?,
            shared: Dense::new(concat_width, h),
            shared_relu: Relu::new(),
            value_hidden: Dense::new(h, h),
            value_relu: Relu::new(),
            value_head: Dense::new(h, 1),
            policy_hidden: Dense::new(h, h),
            policy_relu: Relu::new(),
            policy_heads: config.branch_sizes.iter().map(|&n| Dense::new(h, n)).collect(),
            flatten_width,
        })
    }

    /// Orthogonal initialization: gain sqrt(2) for conv and hidden layers,
    /// 1.0 for the value head, 0.01 for policy heads; zero biases.
    pub fn new<G: Rng + ?Sized>(config: &ModelConfig, rng: &mut G) -> Result<Self> {
        let mut m = Self::zeroed(config)?;
        for layer in &mut m.encoder.layers {
            if let Layer::Conv2d(c) = layer {
                let cols = c.in_channels * c.kernel * c.kernel;
                let w = init::orthogonal(c.out_channels, cols, HIDDEN_GAIN, rng);
                c.weight = Tensor::from_f64(c.weight.shape().to_vec(), &w)?.with_grad();
                c.bias = Tensor::zeros(vec![c.out_channels]).with_grad();
            }
        }
        init_dense(&mut m.shared, HIDDEN_GAIN, rng)?;
        init_dense(&mut m.value_hidden, HIDDEN_GAIN, rng)?;
        init_dense(&mut m.value_head, VALUE_GAIN, rng)?;
        init_dense(&mut m.policy_hidden, HIDDEN_GAIN, rng)?;
        for head in &mut m.policy_heads {
            init_dense(head, POLICY_GAIN, rng)?;
        }
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn flatten_width(&self) -> usize {
        self.flatten_width
    }

    /// Parameters in a fixed order with stable names.
    pub fn named_params(&self) -> Vec<(String, &Tensor<R>)> {
        let mut out = Vec::new();
        for (i, layer) in self.encoder.layers.iter().enumerate() {
            for (n, t) in layer.params() {
                out.push((format!("encoder.{i}.{n}"), t));
            }
        }
        push_dense("shared".into(), &self.shared, &mut out);
        push_dense("value_hidden".into(), &self.value_hidden, &mut out);
        push_dense("value_head".into(), &self.value_head, &mut out);
        push_dense("policy_hidden".into(), &self.policy_hidden, &mut out);
        for (i, h) in self.policy_heads.iter().enumerate() {
            push_dense(format!("policy_head.{i}"), h, &mut out);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<R>> {
        let mut out = self.encoder.params_mut();
        for d in [&mut self.shared, &mut self.value_hidden, &mut self.value_head, &mut self.policy_hidden] {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        for h in &mut self.policy_heads {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Replaces every parameter from `(name, shape, values)` records, which
    /// must match this model's names and shapes exactly, in order.
    pub fn load_params(&mut self, records: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> =
            self.named_params().iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
        if expected.len() != records.len() {
            return Err(Error::config(format!(
                "checkpoint has {} tensors, model has {}",
                records.len(),
                expected.len()
            )));
        }
        for ((name, shape), (rn, rs, _)) in expected.iter().zip(records) {
            if name != rn || shape != rs {
                return Err(Error::config(format!(
                    "checkpoint tensor {rn} {rs:?} does not match model tensor {name} {shape:?}"
                )));
            }
        }
        for (p, (_, shape, data)) in self.params_mut().into_iter().zip(records) {
            *p = Tensor::from_f64(shape.clone(), data)?.with_grad();
        }
        Ok(())
    }

    /// Parameters converted to another precision.
    pub fn cast<S: Real>(&self) -> Result<AgentModel<S>> {
        let mut m = AgentModel::<S>::zeroed(&self.config)?;
        let records: Vec<(String, Vec<usize>, Vec<f64>)> = self
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec(), t.data().iter().map(|x| x.f64()).collect()))
            .collect();
        m.load_params(&records)?;
        Ok(m)
    }

    pub fn all_finite(&self) -> bool {
        self.named_params().iter().all(|(_, t)| t.is_finite())
    }

    pub fn forward(&mut self, batch: &ObsBatch<R>) -> Result<ForwardOutput<R>> {
        let s = batch.frames.shape();
        let expect = [
            s.first().copied().unwrap_or(0),
            self.config.input_channels(),
            self.config.frame_height,
            self.config.frame_width,
        ];
        if s != expect || batch.game_state.shape() != [expect[0], self.config.game_state_dims] {
            return Err(Error::usage(format!(
                "model input: frames {:?} and game state {:?}, expected {:?} and [{}, {}]",
                s,
                batch.game_state.shape(),
                expect,
                expect[0],
                self.config.game_state_dims
            )));
        }
        let features = self.encoder.forward(batch.frames.clone())?;
        let joined = concat(&features, &batch.game_state)?;
        let h = self.shared_relu.forward(self.shared.forward(joined)?)?;
        let v = self.value_relu.forward(self.value_hidden.forward(h.clone())?)?;
        let values = self.value_head.forward(v)?.into_data();
        let p = self.policy_relu.forward(self.policy_hidden.forward(h)?)?;
        let logits = self.policy_heads.iter_mut().map(|head| head.forward(p.clone())).collect::<Result<_>>()?;
        Ok(ForwardOutput { logits, values })
    }

    /// Accumulates parameter gradients from output gradients of the most
    /// recent [`AgentModel::forward`].
    pub fn backward(&mut self, grad_logits: &[Tensor<R>], grad_values: &[R]) -> Result<()> {
        if grad_logits.len() != self.policy_heads.len() {
            return Err(Error::usage(format!(
                "backward: {} logit gradients for {} heads",
                grad_logits.len(),
                self.policy_heads.len()
            )));
        }
        let batch = grad_values.len();
        let mut gp: Option<Tensor<R>> = None;
        for (head, g) in self.policy_heads.iter_mut().zip(grad_logits) {
            let gi = head.backward_impl(g, true)?.expect("requested");
            gp = Some(match gp {
                None => gi,
                Some(mut acc) => {
                    acc.data_mut().iter_mut().zip(gi.data()).for_each(|(a, &b)| *a += b);
                    acc
                }
            });
        }
        let gp = self.policy_relu.backward(&gp.expect("at least one head"))?;
        let mut gh = self.policy_hidden.backward_impl(&gp, true)?.expect("requested");
        let gv = Tensor::new(vec![batch, 1], grad_values.to_vec())?;
        let gv = self.value_head.backward_impl(&gv, true)?.expect("requested");
        let gv = self.value_relu.backward(&gv)?;
        let gh_value = self.value_hidden.backward_impl(&gv, true)?.expect("requested");
        gh.data_mut().iter_mut().zip(gh_value.data()).for_each(|(a, &b)| *a += b);
        let gh = self.shared_relu.backward(&gh)?;
        let gj = self.shared.backward_impl(&gh, true)?.expect("requested");
        let (gf, _) = split_columns(&gj, self.flatten_width)?;
        self.encoder.backward_params(&gf)
    }

    pub fn relu_masks(&self) -> Vec<bool> {
        let mut m = self.encoder.relu_masks();
        for r in [&self.shared_relu, &self.value_relu, &self.policy_relu] {
            m.extend_from_slice(r.mask().unwrap_or(&[]));
        }
        m
    }

    /// Branch probabilities and value for one observation.
    pub fn policy(&mut self, obs: &Observation) -> Result<PolicyOutput> {
        let batch = ObsBatch::from_observations(&[obs], &self.config)?;
        let out = self.forward(&batch)?;
        let branch_probs = out
            .logits
            .iter()
            .map(|l| softmax(l.data()).map(|p| p.iter().map(|x| x.f64()).collect()))
            .collect::<Result<_>>()?;
        Ok(PolicyOutput { branch_probs, value: out.values[0].f64() })
    }

    /// Samples one action per batch row, drawing branches in order from `rng`.
    pub fn act_batch<G: Rng + ?Sized>(&mut self, batch: &ObsBatch<R>, rng: &mut G) -> Result<ActOutput> {
        self.act_batch_with(batch, |probs, rng| categorical_sample(probs, rng), rng)
    }

    /// Most probable action per branch.
    pub fn act_greedy(&mut self, batch: &ObsBatch<R>) -> Result<ActOutput> {
        let mut unused = crate::rng::stream(0, "greedy", 0);
        self.act_batch_with(
            batch,
            |probs: &[R], _: &mut crate::rng::StreamRng| {
                let mut best = 0;
                for (i, &p) in probs.iter().enumerate() {
                    if p > probs[best] {
                        best = i;
                    }
                }
                Ok(best)
            },
            &mut unused,
        )
    }

    fn act_batch_with<G: ?Sized, F>(&mut self, batch: &ObsBatch<R>, mut choose: F, rng: &mut G) -> Result<ActOutput>
    where
        F: FnMut(&[R], &mut G) -> Result<usize>,
    {
        if self.config.branch_sizes.len() != BRANCH_SIZES.len() {
            return Err(Error::usage("act: environment actions need exactly three branches"));
        }
        let out = self.forward(batch)?;
        let n = batch.len();
        let mut actions = Vec::with_capacity(n);
        let mut branch_log_probs = Vec::with_capacity(n);
        let mut log_probs = Vec::with_capacity(n);
        for i in 0..n {
            let mut idx = [0usize; 3];
            let mut lps = Vec::with_capacity(3);
            for (b, logits) in out.logits.iter().enumerate() {
                let k = self.config.branch_sizes[b];
                let row = &logits.data()[i * k..(i + 1) * k];
                let probs = softmax(row)?;
                let a = choose(&probs, rng)?;
                idx[b] = a;
                lps.push(log_softmax(row)?[a].f64());
            }
            actions.push(MultiDiscreteAction::from_indices(&idx)?);
            log_probs.push(lps.iter().sum());
            branch_log_probs.push(lps);
        }
        Ok(ActOutput {
            actions,
            branch_log_probs,
            log_probs,
            values: out.values.iter().map(|v| v.f64()).collect(),
        })
    }

    pub fn act<G: Rng + ?Sized>(&mut self, obs: &Observation, rng: &mut G) -> Result<ActOutput> {
        let batch = ObsBatch::from_observations(&[obs], &self.config)?;
        self.act_batch(&batch, rng)
    }

    /// Joint log-probs, branch-mean entropies and values of `actions`
    /// (branch indices per sample). Leaves the forward state in place for
    /// [`AgentModel::backward`].
    pub fn evaluate(&mut self, batch: &ObsBatch<R>, actions: &[[usize; 3]]) -> Result<Evaluation<R>> {
        if actions.len() != batch.len() {
            return Err(Error::usage(format!("evaluate: {} actions for {} observations", actions.len(), batch.len())));
        }
        let out = self.forward(batch)?;
        let n = batch.len();
        let nb = self.config.branch_sizes.len();
        if nb != 3 {
            return Err(Error::usage("evaluate: environment actions need exactly three branches"));
        }
        let mut log_probs = vec![R::zero(); n];
        let mut entropies = vec![R::zero(); n];
        let mut probs = Vec::with_capacity(nb);
        let mut log_probs_full = Vec::with_capacity(nb);
        for (b, logits) in out.logits.iter().enumerate() {
            let k = self.config.branch_sizes[b];
            let mut pb = Vec::with_capacity(n * k);
            let mut lb = Vec::with_capacity(n * k);
            for i in 0..n {
                let a = actions[i][b];
                if a >= k {
                    return Err(Error::usage(format!("evaluate: action index {a} out of range for branch {b} of size {k}")));
                }
                let row = &logits.data()[i * k..(i + 1) * k];
                let lp = log_softmax(row)?;
                let p: Vec<R> = lp.iter().map(|x| x.exp()).collect();
                log_probs[i] += lp[a];
                entropies[i] += crate::nn::entropy_from_logs(&p, &lp);
                pb.extend_from_slice(&p);
                lb.extend_from_slice(&lp);
            }
            probs.push(pb);
            log_probs_full.push(lb);
        }
        let inv = R::of(1.0 / nb as f64);
        entropies.iter_mut().for_each(|e| *e *= inv);
        Ok(Evaluation { log_probs, entropies, values: out.values, probs, log_probs_full })
    }
}

/// Branch-mean entropy of a probability set, via [`categorical_entropy`].
pub fn branch_mean_entropy(branch_probs: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for p in branch_probs {
        total += categorical_entropy(p)?;
    }
    Ok(total / branch_probs.len() as f64)
}

/// Finite-difference probe over the whole network: the objective is a fixed
/// random linear functional of all logits and values.
pub struct ModelProbe {
    pub model: AgentModel<f64>,
    pub batch: ObsBatch<f64>,
    pub logit_weights: Vec<Vec<f64>>,
    pub value_weights: Vec<f64>,
}

impl ModelProbe {
    pub fn new<G: Rng + ?Sized>(config: &ModelConfig, batch_size: usize, rng: &mut G) -> Result<Self> {
        use rand::RngExt;
        let mut model = AgentModel::new(config, rng)?;
        // Larger policy heads than the training init so their gradients are
        // not dwarfed by the relative-error floor.
        for head in &mut model.policy_heads {
            init_dense(head, 1.0, rng)?;
        }
        let n = batch_size * config.frame_len();
        let frames: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let gs: Vec<f64> = (0..batch_size * config.game_state_dims).map(|_| rng.random_range(0.0..1.0)).collect();
        let batch = ObsBatch {
            frames: Tensor::new(
                vec![batch_size, config.input_channels(), config.frame_height, config.frame_width],
                frames,
            )?,
            game_state: Tensor::new(vec![batch_size, config.game_state_dims], gs)?,
        };
        let logit_weights = config
            .branch_sizes
            .iter()
            .map(|&k| (0..batch_size * k).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let value_weights = (0..batch_size).map(|_| rng.random_range(-1.0..1.0)).collect();
        Ok(ModelProbe { model, batch, logit_weights, value_weights })
    }

    fn objective_of(&self, out: &ForwardOutput<f64>) -> f64 {
        let mut total = 0.0;
        for (l, w) in out.logits.iter().zip(&self.logit_weights) {
            total += l.data().iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        total + out.values.iter().zip(&self.value_weights).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl GradProbe for ModelProbe {
    fn objective(&mut self) -> Result<f64> {
        let out = self.model.forward(&self.batch)?;
        Ok(self.objective_of(&out))
    }

    fn objective_with_grad(&mut self) -> Result<f64> {
        self.model.zero_grad();
        let out = self.model.forward(&self.batch)?;
        let value = self.objective_of(&out);
        let grads = out
            .logits
            .iter()
            .zip(&self.logit_weights)
            .map(|(l, w)| Tensor::new(l.shape().to_vec(), w.clone()))
            .collect::<Result<Vec<_>>>()?;
        self.model.backward(&grads, &self.value_weights)?;
        Ok(value)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        self.model.params_mut()
    }

    fn relu_masks(&self) -> Vec<bool> {
        self.model.relu_masks()
    }
}
