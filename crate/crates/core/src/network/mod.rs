//! Layer graphs, forward/backward passes, fine-tuning and weight files.

mod config;
mod params;
mod train;
pub mod weights;

use std::collections::BTreeSet;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{ActShape, LayerKind, LayerSpec, NetworkConfig, Preset};
pub use params::{Init, LayerParams, ParameterStore};
pub use train::{Dataset, EpochStats, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward_input, conv2d_backward_params, conv2d_forward, dense_backward, dense_forward, dropout,
    dropout_backward, maxpool2_backward, maxpool2_forward, relu, relu_backward, softmax, ConvSpec, Real, Tensor,
};

#[derive(Clone, Debug)]
enum Aux<T> {
    None,
    Pool(Vec<usize>),
    Dropout(Option<Tensor<T>>),
}

/// Activations recorded by a forward pass.
///
/// Every layer output is retained so gradients can be propagated; only the
/// names requested at capture time are readable through [`get`](Self::get).
#[derive(Clone, Debug)]
pub struct ActivationTrace<T = f32> {
    input: Tensor<T>,
    names: Vec<String>,
    outputs: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    captured: BTreeSet<String>,
}

impl<T: Real> ActivationTrace<T> {
    pub fn get(&self, layer: &str) -> Result<&Tensor<T>> {
        if !self.captured.contains(layer) {
            return Err(Error::NotCaptured(layer.to_string()));
        }
        let i = self
            .names
            .iter()
            .position(|n| n == layer)
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
        Ok(&self.outputs[i])
    }

    pub fn is_captured(&self, layer: &str) -> bool {
        self.captured.contains(layer)
    }

    pub fn captured(&self) -> impl Iterator<Item = &str> {
        self.captured.iter().map(String::as_str)
    }

    /// Pre-softmax output of the network.
    pub fn logits(&self) -> &Tensor<T> {
        self.outputs.last().expect("trace of a non-empty network")
    }

    fn layer_input(&self, i: usize) -> &Tensor<T> {
        if i == 0 {
            &self.input
        } else {
            &self.outputs[i - 1]
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network<T: Real = f32> {
    config: NetworkConfig,
    shapes: Vec<ActShape>,
    params: ParameterStore<T>,
}

pub fn build_network<T: Real>(config: NetworkConfig, init: Init, seed: u64) -> Result<Network<T>> {
    Network::build(config, init, seed)
}

impl<T: Real> Network<T> {
    pub fn build(config: NetworkConfig, init: Init, seed: u64) -> Result<Self> {
        let shapes = config.output_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        for (i, layer) in config.layers.iter().enumerate() {
            if let Some((ws, bs)) = params::param_shapes(&layer.kind, Self::input_shape_of(&config, &shapes, i)) {
                params.insert(layer.name.clone(), params::init_layer(&ws, &bs, init, &mut rng));
            }
        }
        Ok(Network { config, shapes, params })
    }

    /// Wraps an existing parameter store, checking it against the config.
    pub fn from_params(config: NetworkConfig, params: ParameterStore<T>) -> Result<Self> {
        let shapes = config.output_shapes()?;
        params.validate(&config, &shapes)?;
        Ok(Network { config, shapes, params })
    }

    fn input_shape_of(config: &NetworkConfig, shapes: &[ActShape], i: usize) -> ActShape {
        if i == 0 {
            let [c, h, w] = config.input_shape;
            ActShape::Spatial { c, h, w }
        } else {
            shapes[i - 1]
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Per-sample output shape of every layer, in layer order.
    pub fn layer_shapes(&self) -> &[ActShape] {
        &self.shapes
    }

    pub fn layer_shape(&self, name: &str) -> Option<ActShape> {
        self.config.layer_index(name).map(|i| self.shapes[i])
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn num_classes(&self) -> usize {
        self.config
            .num_classes()
            .expect("validated config ends in an output layer")
    }

    pub fn cam_layer(&self) -> Option<&str> {
        self.config.resolved_cam_layer()
    }

    /// Swaps the output layer for a freshly initialised `new_classes`-way
    /// head. All other parameters are left untouched.
    pub fn replace_head(&mut self, new_classes: usize, seed: u64) -> Result<()> {
        let last = self.config.layers.len() - 1;
        let head = &mut self.config.layers[last];
        if !matches!(head.kind, LayerKind::Output { .. }) {
            return Err(Error::Config {
                layer: head.name.clone(),
                msg: "last layer is not an output layer".into(),
            });
        }
        if new_classes == 0 {
            return Err(Error::invalid("replace_head", "need at least one class"));
        }
        head.kind = LayerKind::Output {
            num_classes: new_classes,
        };
        let name = head.name.clone();
        self.shapes[last] = ActShape::Flat(new_classes);
        let input = Self::input_shape_of(&self.config, &self.shapes, last);
        let (ws, bs) = params::param_shapes(&self.config.layers[last].kind, input).expect("output layer on flat input");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.params
            .insert(name, params::init_layer(&ws, &bs, Init::HeUniform, &mut rng));
        match (new_classes, self.config.preset.starts_with("vgg19")) {
            (2, true) => self.config.preset = Preset::Vgg19Binary.as_str().into(),
            (3, true) => self.config.preset = Preset::Vgg19ThreeClass.as_str().into(),
            _ => {}
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.config.input_shape {
            return Err(Error::shape(
                "forward",
                "batch",
                format!("N×{:?}", self.config.input_shape),
                format!("{s:?}"),
            ));
        }
        if s[0] == 0 {
            return Err(Error::Empty("forward batch"));
        }
        Ok(())
    }

    /// Eval-mode forward pass. Returns pre-softmax logits and a trace
    /// exposing the `capture`d layers.
    pub fn forward(&self, batch: &Tensor<T>, capture: &[&str]) -> Result<(Tensor<T>, ActivationTrace<T>)> {
        self.run(batch, capture, None)
    }

    /// Training-mode forward pass: dropout layers draw masks from `rng`.
    pub fn forward_train(
        &self,
        batch: &Tensor<T>,
        capture: &[&str],
        rng: &mut dyn RngCore,
    ) -> Result<(Tensor<T>, ActivationTrace<T>)> {
        self.run(batch, capture, Some(rng))
    }

    fn run(
        &self,
        batch: &Tensor<T>,
        capture: &[&str],
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<(Tensor<T>, ActivationTrace<T>)> {
        self.check_batch(batch)?;
        for name in capture {
            if self.config.layer_index(name).is_none() {
                return Err(Error::UnknownLayer(name.to_string()));
            }
        }
        let n = batch.shape()[0];
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.config.layers.len());
        let mut aux = Vec::with_capacity(self.config.layers.len());
        for (i, layer) in self.config.layers.iter().enumerate() {
            let x = if i == 0 { batch } else { &outputs[i - 1] };
            let (out, a) = match &layer.kind {
                LayerKind::Conv { out_channels } => {
                    let p = self.layer_params(&layer.name)?;
                    let spec = ConvSpec::new(x.shape()[1], *out_channels);
                    (conv2d_forward(x, &p.weight, &p.bias, &spec)?, Aux::None)
                }
                LayerKind::Relu => (relu(x), Aux::None),
                LayerKind::MaxPool => {
                    let p = maxpool2_forward(x)?;
                    (p.output, Aux::Pool(p.argmax))
                }
                LayerKind::Flatten => {
                    let d = x.len() / n;
                    (x.clone().reshape(&[n, d])?, Aux::None)
                }
                LayerKind::Dense { .. } | LayerKind::Output { .. } => {
                    let p = self.layer_params(&layer.name)?;
                    (dense_forward(x, &p.weight, &p.bias)?, Aux::None)
                }
                LayerKind::Dropout { rate } => match rng.as_deref_mut() {
                    Some(r) => {
                        let d = dropout(x, *rate, r, true)?;
                        (d.output, Aux::Dropout(d.mask))
                    }
                    None => (x.clone(), Aux::Dropout(None)),
                },
            };
            out.ensure_finite(&layer.name)?;
            outputs.push(out);
            aux.push(a);
        }
        let trace = ActivationTrace {
            input: batch.clone(),
            names: self.config.layers.iter().map(|l| l.name.clone()).collect(),
            outputs,
            aux,
            captured: capture.iter().map(|s| s.to_string()).collect(),
        };
        Ok((trace.logits().clone(), trace))
    }

    fn layer_params(&self, name: &str) -> Result<&LayerParams<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::MissingTensor(format!("{name}.weight")))
    }

    /// Propagates `grad` (w.r.t. the network output) back through layers
    /// `last..=first`. Returns the gradient w.r.t. the input of `first`
    /// unless `want_input_grad` is false; parameter gradients are written to
    /// `grads` when given.
    fn backprop(
        &self,
        trace: &ActivationTrace<T>,
        mut grad: Tensor<T>,
        first: usize,
        want_input_grad: bool,
        mut grads: Option<&mut ParameterStore<T>>,
    ) -> Result<Option<Tensor<T>>> {
        let last = self.config.layers.len() - 1;
        for i in (first..=last).rev() {
            let layer = &self.config.layers[i];
            let x = trace.layer_input(i);
            let need_input = want_input_grad || i > first;
            grad = match (&layer.kind, &trace.aux[i]) {
                (LayerKind::Conv { out_channels }, _) => {
                    let p = self.layer_params(&layer.name)?;
                    let spec = ConvSpec::new(x.shape()[1], *out_channels);
                    if let Some(g) = grads.as_deref_mut() {
                        let (gw, gb) = conv2d_backward_params(x, &grad, &spec)?;
                        g.insert(layer.name.clone(), LayerParams { weight: gw, bias: gb });
                    }
                    if !need_input {
                        return Ok(None);
                    }
                    conv2d_backward_input(x.shape(), &p.weight, &grad, &spec)?
                }
                (LayerKind::Relu, _) => relu_backward(x, &grad)?,
                (LayerKind::MaxPool, Aux::Pool(argmax)) => maxpool2_backward(x.shape(), argmax, &grad)?,
                (LayerKind::Flatten, _) => grad.reshape(x.shape())?,
                (LayerKind::Dense { .. } | LayerKind::Output { .. }, _) => {
                    let p = self.layer_params(&layer.name)?;
                    let d = dense_backward(x, &p.weight, &grad, need_input)?;
                    if let Some(g) = grads.as_deref_mut() {
                        g.insert(
                            layer.name.clone(),
                            LayerParams {
                                weight: d.weights,
                                bias: d.bias,
                            },
                        );
                    }
                    match d.input {
                        Some(gi) => gi,
                        None => return Ok(None),
                    }
                }
                (LayerKind::Dropout { .. }, Aux::Dropout(mask)) => dropout_backward(mask.as_ref(), &grad)?,
                _ => {
                    return Err(Error::invalid(
                        "backward",
                        format!("trace does not match layer `{}`", layer.name),
                    ))
                }
            };
        }
        Ok(want_input_grad.then_some(grad))
    }

    /// Gradient of the pre-softmax logit `class_index` with respect to the
    /// output activation of `layer`, one slice per batch element.
    pub fn backward_class_to_layer(
        &self,
        trace: &ActivationTrace<T>,
        class_index: usize,
        layer: &str,
    ) -> Result<Tensor<T>> {
        if !trace.is_captured(layer) {
            return Err(Error::NotCaptured(layer.to_string()));
        }
        let idx = self
            .config
            .layer_index(layer)
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
        let logits = trace.logits();
        let (n, c) = (logits.shape()[0], logits.shape()[1]);
        if class_index >= c {
            return Err(Error::invalid(
                "backward_class_to_layer",
                format!("class {class_index} out of range for {c} classes"),
            ));
        }
        let mut seed = Tensor::zeros(&[n, c]);
        for b in 0..n {
            seed.data_mut()[b * c + class_index] = T::one();
        }
        if idx == self.config.layers.len() - 1 {
            return Ok(seed);
        }
        let g = self
            .backprop(trace, seed, idx + 1, true, None)?
            .expect("input gradient requested");
        Ok(g)
    }

    /// Parameter gradients of a scalar loss whose gradient w.r.t. the logits
    /// is `grad_logits`.
    pub fn backward(&self, trace: &ActivationTrace<T>, grad_logits: &Tensor<T>) -> Result<ParameterStore<T>> {
        if grad_logits.shape() != trace.logits().shape() {
            return Err(Error::shape(
                "backward",
                "grad_logits",
                format!("{:?}", trace.logits().shape()),
                format!("{:?}", grad_logits.shape()),
            ));
        }
        let mut grads = ParameterStore::new();
        self.backprop(trace, grad_logits.clone(), 0, false, Some(&mut grads))?;
        Ok(grads)
    }

    /// Class probabilities for a batch (eval mode).
    pub fn predict_batch(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let (logits, _) = self.forward(batch, &[])?;
        softmax(&logits)
    }

    /// Class probabilities for one C×H×W image (or a 1×C×H×W batch).
    pub fn predict(&self, image: &Tensor<T>) -> Result<Vec<f64>> {
        let batch = as_batch(image)?;
        if batch.shape()[0] != 1 {
            return Err(Error::shape("predict", "batch size", 1, batch.shape()[0]));
        }
        Ok(self.predict_batch(&batch)?.data().iter().map(|v| v.as_f64()).collect())
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        weights::save_network(self, path.as_ref())
    }

    /// Loads weights saved for the same config, replacing the current ones.
    pub fn load_weights(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let tensors = weights::read_file(path.as_ref())?;
        self.params = weights::store_from_tensors(&self.config, &self.shapes, tensors)?;
        Ok(())
    }

    pub fn from_weights_file(config: NetworkConfig, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(config, weights::read_file(path.as_ref())?)
    }

    /// Builds a network from named tensors as produced by [`weights::read_file`].
    pub fn from_tensors(config: NetworkConfig, tensors: Vec<(String, Tensor<f32>)>) -> Result<Self> {
        let shapes = config.output_shapes()?;
        let params = weights::store_from_tensors(&config, &shapes, tensors)?;
        Ok(Network { config, shapes, params })
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let mut params = ParameterStore::new();
        for (name, p) in self.params.iter() {
            params.insert(
                name,
                LayerParams {
                    weight: p.weight.cast(),
                    bias: p.bias.cast(),
                },
            );
        }
        Network {
            config: self.config.clone(),
            shapes: self.shapes.clone(),
            params,
        }
    }
}

/// Accepts C×H×W or N×C×H×W and returns a rank-4 batch.
pub(crate) fn as_batch<T: Real>(image: &Tensor<T>) -> Result<Tensor<T>> {
    match image.rank() {
        3 => {
            let mut s = vec![1];
            s.extend_from_slice(image.shape());
            image.clone().reshape(&s)
        }
        4 => Ok(image.clone()),
        r => Err(Error::shape("image", "rank", "3 or 4", r)),
    }
}
