use std::collections::BTreeMap;

use rand::Rng;

use super::config::{ActShape, LayerKind, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Weights and biases keyed by layer name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T = f32> {
    layers: BTreeMap<String, LayerParams<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / fan_in), zero bias.
    HeUniform,
    Zeros,
}

/// `(weight shape, bias shape)` for a parameterised layer given its input shape.
pub(crate) fn param_shapes(kind: &LayerKind, input: ActShape) -> Option<(Vec<usize>, Vec<usize>)> {
    match (kind, input) {
        (LayerKind::Conv { out_channels }, ActShape::Spatial { c, .. }) => {
            Some((vec![*out_channels, c, 3, 3], vec![*out_channels]))
        }
        (LayerKind::Dense { out_dim: m } | LayerKind::Output { num_classes: m }, ActShape::Flat(d)) => {
            Some((vec![d, *m], vec![*m]))
        }
        _ => None,
    }
}

pub(crate) fn init_layer<T: Real, R: Rng + ?Sized>(
    weight_shape: &[usize],
    bias_shape: &[usize],
    init: Init,
    rng: &mut R,
) -> LayerParams<T> {
    let n: usize = weight_shape.iter().product();
    let weight = match init {
        Init::Zeros => Tensor::zeros(weight_shape),
        Init::HeUniform => {
            // fan_in: I·3·3 for conv (O×I×3×3), D for dense (D×M)
            let fan_in = if weight_shape.len() == 4 {
                weight_shape[1..].iter().product::<usize>()
            } else {
                weight_shape[0]
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            let data = (0..n).map(|_| T::of_f64(rng.gen_range(-limit..limit))).collect();
            Tensor::from_vec(weight_shape, data).expect("element count matches shape")
        }
    };
    LayerParams {
        weight,
        bias: Tensor::zeros(bias_shape),
    }
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            layers: BTreeMap::new(),
        }
    }

    pub fn get(&self, layer: &str) -> Option<&LayerParams<T>> {
        self.layers.get(layer)
    }

    pub fn get_mut(&mut self, layer: &str) -> Option<&mut LayerParams<T>> {
        self.layers.get_mut(layer)
    }

    pub fn insert(&mut self, layer: impl Into<String>, params: LayerParams<T>) {
        self.layers.insert(layer.into(), params);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LayerParams<T>)> {
        self.layers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.layers.values().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    /// Checks that every parameterised layer of `config` has exactly the
    /// expected weight and bias shapes, and nothing else is stored.
    pub fn validate(&self, config: &NetworkConfig, shapes: &[ActShape]) -> Result<()> {
        let mut expected = 0;
        for (i, layer) in config.layers.iter().enumerate() {
            let input = if i == 0 {
                let [c, h, w] = config.input_shape;
                ActShape::Spatial { c, h, w }
            } else {
                shapes[i - 1]
            };
            let Some((ws, bs)) = param_shapes(&layer.kind, input) else {
                continue;
            };
            expected += 1;
            let p = self
                .layers
                .get(&layer.name)
                .ok_or_else(|| Error::MissingTensor(format!("{}.weight", layer.name)))?;
            if p.weight.shape() != ws.as_slice() {
                return Err(Error::WeightShape {
                    name: format!("{}.weight", layer.name),
                    expected: ws,
                    found: p.weight.shape().to_vec(),
                });
            }
            if p.bias.shape() != bs.as_slice() {
                return Err(Error::WeightShape {
                    name: format!("{}.bias", layer.name),
                    expected: bs,
                    found: p.bias.shape().to_vec(),
                });
            }
        }
        if expected != self.layers.len() {
            return Err(Error::Format(format!(
                "{} parameter entries stored, config has {expected} parameterised layers",
                self.layers.len()
            )));
        }
        Ok(())
    }
}
