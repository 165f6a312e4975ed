//! The dual-encoder classifier.

use std::collections::BTreeMap;

use crate::calibration::ProbBatch;
use crate::error::{Error, Result};
use crate::losses::{aux_loss, total_loss, LossSpec, LossValue};
use crate::model::config::{HeadKind, Modality, ModelConfig};
use crate::model::layers::{
    effective_weight, layer_backward, layer_forward, Activation, DenseLayer, EncoderStack, LayerId,
    LayerTrace, LoraAdapter,
};
use crate::model::params::ParamSet;
use crate::numerics::{standard_normal, DenseMatrix, RngStream};
use crate::scalar::Scalar;

/// Learnable context vectors shared by all classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext<T> {
    /// M × d
    pub vectors: DenseMatrix<T>,
}

impl<T: Scalar> PromptContext<T> {
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    fn mean(&self) -> Vec<T> {
        let m = T::of_usize(self.vectors.rows());
        let mut out = vec![T::zero(); self.vectors.cols()];
        for row in self.vectors.row_iter() {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= m);
        out
    }
}

#[derive(Debug, Clone)]
struct EncoderTrace<T> {
    layers: Vec<LayerTrace<T>>,
    norms: Vec<T>,
    features: DenseMatrix<T>,
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    vision: EncoderTrace<T>,
    text: EncoderTrace<T>,
    logits: DenseMatrix<T>,
}

/// Frozen vision and text stacks, class prototypes, and the trainable head.
///
/// Logits are `logit_scale · ⟨v̂(x), t̂(c)⟩` where `v̂` and `t̂` are the
/// L2-normalized outputs of the vision stack on an embedding and of the
/// text stack on a class prototype.
#[derive(Debug, Clone)]
pub struct DualEncoder<T> {
    config: ModelConfig,
    vision: EncoderStack<T>,
    text: EncoderStack<T>,
    prototypes: DenseMatrix<T>,
    adapters: BTreeMap<LayerId, LoraAdapter<T>>,
    prompt: Option<PromptContext<T>>,
    cache: Option<ForwardCache<T>>,
}

fn frozen_layer<T: Scalar>(
    fan_in: usize,
    fan_out: usize,
    activation: Activation,
    noise: f64,
    rng: &mut RngStream,
) -> DenseLayer<T> {
    // Structured part: identity, or the [I, -I] split whose relu image is
    // recombined exactly by the following [I; -I] merge.
    let structured = |i: usize, j: usize| -> f64 {
        if fan_in == fan_out {
            (i == j) as u8 as f64
        } else if fan_out >= 2 * fan_in {
            if j == i {
                1.0
            } else if j == i + fan_in {
                -1.0
            } else {
                0.0
            }
        } else if fan_in >= 2 * fan_out {
            if i == j {
                1.0
            } else if i == j + fan_out {
                -1.0
            } else {
                0.0
            }
        } else {
            0.0
        }
    };
    let has_structure = fan_in == fan_out || fan_out >= 2 * fan_in || fan_in >= 2 * fan_out;
    let std = if has_structure {
        noise / (fan_in as f64).sqrt()
    } else {
        (2.0 / fan_in as f64).sqrt()
    };
    let weight = DenseMatrix::from_fn(fan_in, fan_out, |i, j| {
        let mut w = structured(i, j);
        if std > 0.0 {
            w += std * standard_normal(rng);
        }
        T::of(w)
    });
    DenseLayer {
        weight,
        bias: vec![T::zero(); fan_out],
        activation,
    }
}

fn frozen_stack<T: Scalar>(config: &ModelConfig, rng: &mut RngStream) -> EncoderStack<T> {
    let widths = config.widths();
    let last = widths.len() - 2;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i == last {
                Activation::None
            } else {
                Activation::Relu
            };
            frozen_layer(w[0], w[1], act, config.frozen_init_noise, rng)
        })
        .collect();
    EncoderStack { layers }
}

impl<T: Scalar> DualEncoder<T> {
    /// Fresh model: frozen stacks drawn from `rng`, zero-start trainable head.
    ///
    /// LoRA `B` factors start at zero and `A` factors ~ N(0, 1/r), so the
    /// initial update is exactly zero; prompt vectors start at zero.
    pub fn zero_shot_init(
        config: ModelConfig,
        prototypes: DenseMatrix<T>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        config.validate()?;
        let vision = frozen_stack(&config, rng);
        let text = frozen_stack(&config, rng);
        Self::from_parts(config, vision, text, prototypes, rng)
    }

    /// Model around externally supplied frozen stacks.
    pub fn from_parts(
        config: ModelConfig,
        vision: EncoderStack<T>,
        text: EncoderStack<T>,
        prototypes: DenseMatrix<T>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        if prototypes.rows() != config.class_count || prototypes.cols() != d {
            return Err(Error::Config(format!(
                "prototype matrix is {}x{}, expected {}x{}",
                prototypes.rows(),
                prototypes.cols(),
                config.class_count,
                d
            )));
        }
        for (name, stack) in [("vision", &vision), ("text", &text)] {
            let stack = EncoderStack::new(stack.layers.clone())?;
            let (first, last) = match (stack.layers.first(), stack.layers.last()) {
                (Some(f), Some(l)) => (f, l),
                _ => return Err(Error::Config(format!("{name} encoder has no layers"))),
            };
            if first.in_dim() != d || last.out_dim() != d {
                return Err(Error::Config(format!(
                    "{name} encoder maps {} -> {}, expected {d} -> {d}",
                    first.in_dim(),
                    last.out_dim()
                )));
            }
        }

        let mut adapters = BTreeMap::new();
        let r = config.lora_rank;
        let scale = T::of(config.effective_lora_scale());
        let a_std = (1.0 / r as f64).sqrt();
        for (modality, stack) in [(Modality::Vision, &vision), (Modality::Text, &text)] {
            if !config.head_kind.adapts(modality) {
                continue;
            }
            for (i, layer) in stack.layers.iter().enumerate() {
                let a = DenseMatrix::from_fn(layer.in_dim(), r, |_, _| {
                    T::of(a_std * standard_normal(rng))
                });
                let b = DenseMatrix::zeros(r, layer.out_dim());
                let id = LayerId::new(modality, i);
                adapters.insert(id, LoraAdapter::new(a, b, scale, config.lora_dropout, id)?);
            }
        }

        let prompt = (config.head_kind == HeadKind::Prompt).then(|| PromptContext {
            vectors: DenseMatrix::zeros(config.prompt_len, d),
        });

        Ok(Self {
            config,
            vision,
            text,
            prototypes,
            adapters,
            prompt,
            cache: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn head_kind(&self) -> HeadKind {
        self.config.head_kind
    }

    pub fn class_count(&self) -> usize {
        self.config.class_count
    }

    pub fn prototypes(&self) -> &DenseMatrix<T> {
        &self.prototypes
    }

    pub fn encoder(&self, modality: Modality) -> &EncoderStack<T> {
        match modality {
            Modality::Vision => &self.vision,
            Modality::Text => &self.text,
        }
    }

    pub fn adapters(&self) -> impl Iterator<Item = &LoraAdapter<T>> {
        self.adapters.values()
    }

    pub fn adapter(&self, id: LayerId) -> Option<&LoraAdapter<T>> {
        self.adapters.get(&id)
    }

    pub fn prompt(&self) -> Option<&PromptContext<T>> {
        self.prompt.as_ref()
    }

    pub fn layer_ids(&self) -> impl Iterator<Item = LayerId> + '_ {
        let v = (0..self.vision.layers.len()).map(|i| LayerId::new(Modality::Vision, i));
        let t = (0..self.text.layers.len()).map(|i| LayerId::new(Modality::Text, i));
        v.chain(t)
    }

    pub fn layer(&self, id: LayerId) -> Option<&DenseLayer<T>> {
        self.encoder(id.modality).layers.get(id.index)
    }

    /// Frozen weight merged with the layer's adapter, if any.
    pub fn effective_layer_weight(&self, id: LayerId) -> Result<DenseMatrix<T>> {
        let layer = self
            .layer(id)
            .ok_or_else(|| Error::InvalidInput(format!("no layer {id}")))?;
        match self.adapters.get(&id) {
            Some(ad) => effective_weight(&layer.weight, ad),
            None => Ok(layer.weight.clone()),
        }
    }

    fn text_inputs(&self) -> DenseMatrix<T> {
        match &self.prompt {
            None => self.prototypes.clone(),
            Some(ctx) => {
                let shift = ctx.mean();
                let mut out = self.prototypes.clone();
                let d = out.cols();
                for row in out.data_mut().chunks_exact_mut(d) {
                    for (v, &s) in row.iter_mut().zip(&shift) {
                        *v += s;
                    }
                }
                out
            }
        }
    }

    fn encode(
        &self,
        modality: Modality,
        input: DenseMatrix<T>,
        mut dropout: Option<&mut RngStream>,
    ) -> Result<EncoderTrace<T>> {
        let stack = self.encoder(modality);
        let mut x = input;
        let mut traces = Vec::with_capacity(stack.layers.len());
        for (i, layer) in stack.layers.iter().enumerate() {
            let id = LayerId::new(modality, i);
            let (out, trace) =
                layer_forward(layer, self.adapters.get(&id), x, dropout.as_deref_mut(), id)?;
            traces.push(trace);
            x = out;
        }
        let d = x.cols();
        let mut norms = Vec::with_capacity(x.rows());
        for (r, row) in x.data_mut().chunks_exact_mut(d).enumerate() {
            let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if !(n > T::zero()) {
                return Err(Error::Numeric {
                    location: format!("{} encoder output", modality.name()),
                    detail: format!("row {r} has zero norm"),
                });
            }
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        Ok(EncoderTrace {
            layers: traces,
            norms,
            features: x,
        })
    }

    fn run(
        &self,
        embeddings: &DenseMatrix<T>,
        mut dropout: Option<&mut RngStream>,
    ) -> Result<ForwardCache<T>> {
        if embeddings.cols() != self.config.embed_dim {
            return Err(Error::InvalidInput(format!(
                "embedding dimension {} does not match model dimension {}",
                embeddings.cols(),
                self.config.embed_dim
            )));
        }
        let vision = self.encode(Modality::Vision, embeddings.clone(), dropout.as_deref_mut())?;
        let text = self.encode(Modality::Text, self.text_inputs(), dropout)?;
        let logits = vision
            .features
            .matmul_t(&text.features)
            .scale(T::of(self.config.logit_scale));
        Ok(ForwardCache {
            vision,
            text,
            logits,
        })
    }

    /// Forward pass that caches activations for [`backward`](Self::backward).
    ///
    /// Passing a stream enables adapter-input dropout (training mode).
    pub fn forward(
        &mut self,
        embeddings: &DenseMatrix<T>,
        dropout: Option<&mut RngStream>,
    ) -> Result<DenseMatrix<T>> {
        let cache = self.run(embeddings, dropout)?;
        let logits = cache.logits.clone();
        self.cache = Some(cache);
        Ok(logits)
    }

    /// Evaluation-mode logits; does not touch the cache.
    pub fn logits(&self, embeddings: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        Ok(self.run(embeddings, None)?.logits)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Gradients of the trainable entries given `∂L/∂logits` for the cached batch.
    pub fn backward_logits(&self, grad_logits: &DenseMatrix<T>) -> Result<ParamSet<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Usage("backward called without a cached forward pass".into()))?;
        if grad_logits.shape() != cache.logits.shape() {
            return Err(Error::InvalidInput(format!(
                "logit gradient is {}x{}, cached logits are {}x{}",
                grad_logits.rows(),
                grad_logits.cols(),
                cache.logits.rows(),
                cache.logits.cols()
            )));
        }
        let s = T::of(self.config.logit_scale);
        let mut grads = ParamSet::new();
        let kind = self.config.head_kind;
        if kind == HeadKind::ZeroShot {
            return Ok(grads);
        }

        let needs_vision = matches!(
            kind,
            HeadKind::LoraVision | HeadKind::LoraBoth | HeadKind::Bitfit
        );
        let needs_text = !matches!(kind, HeadKind::LoraVision);

        if needs_vision {
            let g_feat = grad_logits.matmul_unchecked(&cache.text.features).scale(s);
            self.backprop_encoder(Modality::Vision, &cache.vision, g_feat, &mut grads);
        }
        if needs_text {
            let g_feat = grad_logits.t_matmul(&cache.vision.features).scale(s);
            if let Some(g_in) =
                self.backprop_encoder(Modality::Text, &cache.text, g_feat, &mut grads)
            {
                let ctx = self.prompt.as_ref().expect("prompt head has context");
                let m = ctx.len();
                let inv_m = T::one() / T::of_usize(m);
                let mut col = vec![T::zero(); g_in.cols()];
                for row in g_in.row_iter() {
                    for (c, &g) in col.iter_mut().zip(row) {
                        *c += g;
                    }
                }
                let per_vector: Vec<T> = col.iter().map(|&c| c * inv_m).collect();
                let mut data = Vec::with_capacity(m * per_vector.len());
                for _ in 0..m {
                    data.extend_from_slice(&per_vector);
                }
                grads.insert("prompt.ctx", vec![m, per_vector.len()], data);
            }
        }
        Ok(grads)
    }

    /// Backpropagate feature gradients through normalization and the
    /// stack, recording trainable gradients. Returns the input gradient
    /// when the prompt head needs it.
    fn backprop_encoder(
        &self,
        modality: Modality,
        trace: &EncoderTrace<T>,
        grad_features: DenseMatrix<T>,
        grads: &mut ParamSet<T>,
    ) -> Option<DenseMatrix<T>> {
        // f = z/‖z‖  =>  dz = (df - f ⟨df, f⟩) / ‖z‖
        let mut g = grad_features;
        let d = g.cols();
        for ((row, f), &n) in g
            .data_mut()
            .chunks_exact_mut(d)
            .zip(trace.features.row_iter())
            .zip(&trace.norms)
        {
            let proj = row.iter().zip(f).fold(T::zero(), |a, (&x, &y)| a + x * y);
            for (v, &fv) in row.iter_mut().zip(f) {
                *v = (*v - fv * proj) / n;
            }
        }

        let kind = self.config.head_kind;
        let want_input = kind == HeadKind::Prompt && modality == Modality::Text;
        let stack = self.encoder(modality);
        for i in (0..stack.layers.len()).rev() {
            let id = LayerId::new(modality, i);
            let adapter = self.adapters.get(&id);
            let need_input = i > 0 || want_input;
            let lg = layer_backward(&stack.layers[i], adapter, &trace.layers[i], &g, need_input);
            let prefix = id.prefix();
            if kind == HeadKind::Bitfit {
                grads.insert(format!("{prefix}.bias"), vec![lg.bias.len()], lg.bias);
            }
            if let (Some(ga), Some(gb)) = (lg.lora_a, lg.lora_b) {
                grads.insert(
                    format!("{prefix}.lora_a"),
                    vec![ga.rows(), ga.cols()],
                    ga.into_data(),
                );
                grads.insert(
                    format!("{prefix}.lora_b"),
                    vec![gb.rows(), gb.cols()],
                    gb.into_data(),
                );
            }
            match lg.input {
                Some(gin) if i > 0 => g = gin,
                Some(gin) => return Some(gin),
                None => return None,
            }
        }
        None
    }

    /// Loss of the cached batch and gradients of its trainable entries.
    pub fn backward(
        &self,
        labels: &[usize],
        spec: &LossSpec,
    ) -> Result<(LossValue<T>, ParamSet<T>)> {
        let all: Vec<usize> = (0..self.config.class_count).collect();
        self.backward_subset(labels, spec, &all)
    }

    /// As [`backward`](Self::backward) with the softmax restricted to
    /// `classes`; `labels` index into `classes`.
    pub fn backward_subset(
        &self,
        labels: &[usize],
        spec: &LossSpec,
        classes: &[usize],
    ) -> Result<(LossValue<T>, ParamSet<T>)> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Usage("backward called without a cached forward pass".into()))?;
        if labels.len() != cache.logits.rows() {
            return Err(Error::InvalidInput(format!(
                "{} labels for a cached batch of {}",
                labels.len(),
                cache.logits.rows()
            )));
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= self.config.class_count) {
            return Err(Error::InvalidInput(format!("class {c} out of range")));
        }
        let local = cache.logits.select_cols(classes);
        let probs = crate::numerics::softmax_rows(&local)?;
        let batch = ProbBatch::new(probs, labels.to_vec())?;
        let loss = total_loss(&batch, spec)?;
        let aux = aux_loss(&batch, spec)?;

        // Cross-entropy is fused with the softmax, dz = (p − onehot)/m, which
        // stays informative when the true-class probability underflows the
        // log clamp. The auxiliary term goes through dz = p ⊙ (dp − ⟨dp, p⟩).
        let k = classes.len();
        let m = T::of_usize(batch.len());
        let beta = T::of(spec.aux_weight);
        let mut grad_full = DenseMatrix::zeros(cache.logits.rows(), cache.logits.cols());
        for (i, &y) in batch.labels().iter().enumerate() {
            let p = batch.probs().row(i);
            for j in 0..k {
                let onehot = if j == y { T::one() } else { T::zero() };
                grad_full.set(i, classes[j], (p[j] - onehot) / m);
            }
            if let Some(aux) = &aux {
                let gp = aux.grad_wrt_probs.row(i);
                let inner = p.iter().zip(gp).fold(T::zero(), |a, (&x, &y)| a + x * y);
                for j in 0..k {
                    let v = grad_full.get(i, classes[j]) + beta * p[j] * (gp[j] - inner);
                    grad_full.set(i, classes[j], v);
                }
            }
        }
        let grads = self.backward_logits(&grad_full)?;
        Ok((loss, grads))
    }

    /// Trainable entries and their current values.
    pub fn trainable_params(&self) -> ParamSet<T> {
        let mut ps = ParamSet::new();
        match self.config.head_kind {
            HeadKind::ZeroShot => {}
            HeadKind::Prompt => {
                let ctx = self.prompt.as_ref().expect("prompt head has context");
                ps.insert(
                    "prompt.ctx",
                    vec![ctx.vectors.rows(), ctx.vectors.cols()],
                    ctx.vectors.data().to_vec(),
                );
            }
            HeadKind::Bitfit => {
                for id in self.layer_ids().collect::<Vec<_>>() {
                    let l = self.layer(id).expect("layer exists");
                    ps.insert(
                        format!("{}.bias", id.prefix()),
                        vec![l.bias.len()],
                        l.bias.clone(),
                    );
                }
            }
            HeadKind::LoraText | HeadKind::LoraVision | HeadKind::LoraBoth => {
                for (id, ad) in &self.adapters {
                    let p = id.prefix();
                    ps.insert(
                        format!("{p}.lora_a"),
                        vec![ad.a.rows(), ad.a.cols()],
                        ad.a.data().to_vec(),
                    );
                    ps.insert(
                        format!("{p}.lora_b"),
                        vec![ad.b.rows(), ad.b.cols()],
                        ad.b.data().to_vec(),
                    );
                }
            }
        }
        ps
    }

    /// Every entry of the model, frozen and trainable.
    pub fn all_params(&self) -> ParamSet<T> {
        let mut ps = self.trainable_params();
        ps.insert(
            "prototypes",
            vec![self.prototypes.rows(), self.prototypes.cols()],
            self.prototypes.data().to_vec(),
        );
        for id in self.layer_ids().collect::<Vec<_>>() {
            let l = self.layer(id).expect("layer exists");
            let p = id.prefix();
            ps.insert(
                format!("{p}.weight"),
                vec![l.in_dim(), l.out_dim()],
                l.weight.data().to_vec(),
            );
            if !ps.contains(&format!("{p}.bias")) {
                ps.insert(format!("{p}.bias"), vec![l.bias.len()], l.bias.clone());
            }
        }
        ps
    }

    pub fn trainable_len(&self) -> usize {
        self.trainable_params().numel()
    }

    pub fn trainable_vector(&self) -> Vec<T> {
        self.trainable_params().flatten()
    }

    /// Overwrite the trainable entries from a flat vector.
    pub fn load_trainable(&mut self, vector: &[T]) -> Result<()> {
        let mut ps = self.trainable_params();
        ps.unflatten_from(vector)?;
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::Transport(format!(
                "parameter vector has a non-finite entry at {i}"
            )));
        }
        self.set_trainable(&ps);
        self.cache = None;
        Ok(())
    }

    fn set_trainable(&mut self, ps: &ParamSet<T>) {
        for (name, t) in ps.iter() {
            if name == "prompt.ctx" {
                let ctx = self.prompt.as_mut().expect("prompt head has context");
                ctx.vectors.data_mut().copy_from_slice(&t.data);
                continue;
            }
            let mut parts = name.split('.');
            let modality = match parts.next() {
                Some("vision") => Modality::Vision,
                Some("text") => Modality::Text,
                _ => unreachable!("unknown trainable entry {name}"),
            };
            let index: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .expect("layer index");
            let id = LayerId::new(modality, index);
            match parts.next() {
                Some("bias") => {
                    let stack = match modality {
                        Modality::Vision => &mut self.vision,
                        Modality::Text => &mut self.text,
                    };
                    stack.layers[index].bias.copy_from_slice(&t.data);
                }
                Some("lora_a") => {
                    let ad = self.adapters.get_mut(&id).expect("adapter exists");
                    ad.a.data_mut().copy_from_slice(&t.data);
                }
                Some("lora_b") => {
                    let ad = self.adapters.get_mut(&id).expect("adapter exists");
                    ad.b.data_mut().copy_from_slice(&t.data);
                }
                _ => unreachable!("unknown trainable entry {name}"),
            }
        }
    }
}
