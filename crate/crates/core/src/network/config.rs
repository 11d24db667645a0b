use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv {
        out_channels: usize,
    },
    Relu,
    MaxPool,
    Flatten,
    Dense {
        out_dim: usize,
    },
    Dropout {
        rate: f64,
    },
    /// Final dense layer producing pre-softmax logits.
    Output {
        num_classes: usize,
    },
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv { .. } | LayerKind::Dense { .. } | LayerKind::Output { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
        }
    }
}

/// Shape of one sample's activation after a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActShape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ActShape::Spatial { c, h, w } => vec![c, h, w],
            ActShape::Flat(d) => vec![d],
        }
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Vgg19Binary,
    Vgg19ThreeClass,
    Tiny,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Vgg19Binary => "vgg19-binary",
            Preset::Vgg19ThreeClass => "vgg19-3class",
            Preset::Tiny => "tiny",
        }
    }

    /// Default square input size for the preset.
    pub fn default_input_size(self) -> usize {
        match self {
            Preset::Vgg19Binary | Preset::Vgg19ThreeClass => 224,
            Preset::Tiny => 32,
        }
    }

    pub fn config(self, input_size: usize, num_classes: usize) -> NetworkConfig {
        match self {
            Preset::Vgg19Binary | Preset::Vgg19ThreeClass => {
                let mut c = NetworkConfig::vgg19(num_classes);
                c.input_shape = [3, input_size, input_size];
                c.preset = self.as_str().to_string();
                c
            }
            Preset::Tiny => NetworkConfig::tiny([3, input_size, input_size], num_classes),
        }
    }

    pub fn default_classes(self) -> usize {
        match self {
            Preset::Vgg19ThreeClass => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg19-binary" => Ok(Preset::Vgg19Binary),
            "vgg19-3class" => Ok(Preset::Vgg19ThreeClass),
            "tiny" => Ok(Preset::Tiny),
            other => Err(Error::invalid("preset", format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub preset: String,
    /// C×H×W of one input image.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    /// Layer whose activation feeds the class activation map. Defaults to
    /// the activation that follows the last convolution.
    pub cam_layer: Option<String>,
}

impl NetworkConfig {
    pub fn new(input_shape: [usize; 3], layers: Vec<LayerSpec>) -> Self {
        NetworkConfig {
            preset: "custom".to_string(),
            input_shape,
            layers,
            cam_layer: None,
        }
    }

    /// VGG19 at 3×224×224: sixteen 3×3 convolutions in five blocks, two
    /// 4096-wide dense layers with dropout 0.5, and a `num_classes` head.
    pub fn vgg19(num_classes: usize) -> Self {
        let blocks: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 4), (512, 4), (512, 4)];
        let mut layers = Vec::new();
        for (b, &(width, depth)) in blocks.iter().enumerate() {
            for i in 1..=depth {
                layers.push(LayerSpec::new(
                    format!("conv{}_{i}", b + 1),
                    LayerKind::Conv { out_channels: width },
                ));
                layers.push(LayerSpec::new(format!("relu{}_{i}", b + 1), LayerKind::Relu));
            }
            layers.push(LayerSpec::new(format!("pool{}", b + 1), LayerKind::MaxPool));
        }
        layers.push(LayerSpec::new("flatten", LayerKind::Flatten));
        for fc in [6, 7] {
            layers.push(LayerSpec::new(format!("fc{fc}"), LayerKind::Dense { out_dim: 4096 }));
            layers.push(LayerSpec::new(format!("relu{fc}"), LayerKind::Relu));
            layers.push(LayerSpec::new(format!("drop{fc}"), LayerKind::Dropout { rate: 0.5 }));
        }
        layers.push(LayerSpec::new("fc8", LayerKind::Output { num_classes }));
        let preset = match num_classes {
            2 => Preset::Vgg19Binary.as_str().to_string(),
            3 => Preset::Vgg19ThreeClass.as_str().to_string(),
            n => format!("vgg19-{n}class"),
        };
        NetworkConfig {
            preset,
            input_shape: [3, 224, 224],
            layers,
            cam_layer: None,
        }
    }

    /// conv8–relu–pool–conv16–relu–pool–flatten–dense32–relu–dropout0.5–head.
    pub fn tiny(input_shape: [usize; 3], num_classes: usize) -> Self {
        use LayerKind::*;
        let layers = vec![
            LayerSpec::new("conv1", Conv { out_channels: 8 }),
            LayerSpec::new("relu1", Relu),
            LayerSpec::new("pool1", MaxPool),
            LayerSpec::new("conv2", Conv { out_channels: 16 }),
            LayerSpec::new("relu2", Relu),
            LayerSpec::new("pool2", MaxPool),
            LayerSpec::new("flatten", Flatten),
            LayerSpec::new("fc1", Dense { out_dim: 32 }),
            LayerSpec::new("relu3", Relu),
            LayerSpec::new("drop1", Dropout { rate: 0.5 }),
            LayerSpec::new("head", Output { num_classes }),
        ];
        NetworkConfig {
            preset: Preset::Tiny.as_str().to_string(),
            input_shape,
            layers,
            cam_layer: None,
        }
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.layers.last()?.kind {
            LayerKind::Output { num_classes } => Some(num_classes),
            _ => None,
        }
    }

    pub fn head_name(&self) -> Option<&str> {
        self.layers.last().map(|l| l.name.as_str())
    }

    /// Validates the layer graph and returns each layer's per-sample output
    /// shape. Errors name the first offending layer.
    pub fn output_shapes(&self) -> Result<Vec<ActShape>> {
        if self.layers.is_empty() {
            return Err(Error::Config {
                layer: "<none>".into(),
                msg: "network has no layers".into(),
            });
        }
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config {
                layer: "<input>".into(),
                msg: format!("input shape {:?} has a zero extent", self.input_shape),
            });
        }
        let bad = |l: &LayerSpec, msg: String| Error::Config {
            layer: l.name.clone(),
            msg,
        };
        let mut names = HashSet::new();
        let mut cur = ActShape::Spatial { c, h, w };
        let mut shapes = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if !names.insert(l.name.as_str()) {
                return Err(bad(l, "duplicate layer name".into()));
            }
            cur = match (&l.kind, cur) {
                (LayerKind::Conv { out_channels }, ActShape::Spatial { h, w, .. }) => {
                    if *out_channels == 0 {
                        return Err(bad(l, "conv needs at least one output channel".into()));
                    }
                    ActShape::Spatial { c: *out_channels, h, w }
                }
                (LayerKind::MaxPool, ActShape::Spatial { c, h, w }) => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(bad(l, format!("max pool needs even spatial dims, got {h}×{w}")));
                    }
                    ActShape::Spatial { c, h: h / 2, w: w / 2 }
                }
                (LayerKind::Conv { .. } | LayerKind::MaxPool, ActShape::Flat(_)) => {
                    return Err(bad(l, "spatial layer after flatten".into()));
                }
                (LayerKind::Flatten, s) => ActShape::Flat(s.numel()),
                (LayerKind::Relu | LayerKind::Dropout { .. }, s) => {
                    if let LayerKind::Dropout { rate } = l.kind {
                        if !(0.0..1.0).contains(&rate) {
                            return Err(bad(l, format!("dropout rate {rate} outside [0, 1)")));
                        }
                    }
                    s
                }
                (LayerKind::Dense { out_dim: d } | LayerKind::Output { num_classes: d }, ActShape::Flat(_)) => {
                    if *d == 0 {
                        return Err(bad(l, "dense layer needs a positive width".into()));
                    }
                    ActShape::Flat(*d)
                }
                (LayerKind::Dense { .. } | LayerKind::Output { .. }, ActShape::Spatial { .. }) => {
                    return Err(bad(l, "dense layer needs a flatten before it".into()));
                }
            };
            let is_output = matches!(l.kind, LayerKind::Output { .. });
            if is_output != (i == last) {
                return Err(bad(
                    l,
                    "exactly one output layer is required, and it must be last".into(),
                ));
            }
            shapes.push(cur);
        }
        if let Some(cam) = &self.cam_layer {
            if !names.contains(cam.as_str()) {
                return Err(Error::UnknownLayer(cam.clone()));
            }
        }
        Ok(shapes)
    }

    /// The class-activation-map layer: the explicit `cam_layer`, or else the
    /// activation directly after the last convolution (its ReLU when present).
    pub fn resolved_cam_layer(&self) -> Option<&str> {
        if let Some(name) = &self.cam_layer {
            return Some(name);
        }
        let conv = self
            .layers
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::Conv { .. }))?;
        match self.layers.get(conv + 1) {
            Some(next) if next.kind == LayerKind::Relu => Some(&next.name),
            _ => Some(&self.layers[conv].name),
        }
    }
}
