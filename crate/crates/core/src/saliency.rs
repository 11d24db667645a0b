//! Gradient-weighted class activation maps.
//!
//! The damage detection map of an image is built in five steps:
//!
//! 1. forward pass, capturing the activation `f` of the CAM layer (the
//!    rectified output of the last convolution);
//! 2. gradient of the damage logit `y_D` (pre-softmax) with respect to `f`;
//! 3. channel weights `w_k`, the spatial mean of that gradient per channel;
//! 4. saliency grid `s_ij = max(0, Σ_k w_k f^k_ij)`;
//! 5. bilinear upsampling of the grid to the image resolution.
//!
//! The grid is what damage scores are computed from; the upsampled map is
//! what gets thresholded into a [`BinaryMask`] or rendered as a heatmap.

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::labels::DAMAGE_CLASS;
use crate::network::{as_batch, Network};
use crate::tensor::{bilinear_resize, Real, Tensor};

/// Default cutoff for [`binary_mask`], as a fraction of the map maximum.
pub const DEFAULT_MASK_FRACTION: f64 = 0.2;
/// Blend weight of the colormap over the base image in [`render_heatmap`].
pub const HEATMAP_ALPHA: f64 = 0.5;

/// One weight per feature-map channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelWeights(pub Vec<f64>);

impl ChannelWeights {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ChannelWeights(self.0.iter().map(|w| w * factor).collect())
    }
}

macro_rules! grid_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            height: usize,
            width: usize,
            values: Vec<f64>,
        }

        impl $name {
            /// Row-major values; must be non-negative and finite.
            pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
                if values.len() != height * width {
                    return Err(Error::shape(stringify!($name), "value count", height * width, values.len()));
                }
                if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                    return Err(Error::invalid(stringify!($name), format!("values must be finite and >= 0, found {v}")));
                }
                Ok($name { height, width, values })
            }

            pub fn zeros(height: usize, width: usize) -> Self {
                $name { height, width, values: vec![0.0; height * width] }
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn get(&self, row: usize, col: usize) -> f64 {
                self.values[row * self.width + col]
            }

            pub fn max(&self) -> f64 {
                self.values.iter().copied().fold(0.0, f64::max)
            }

            pub fn min(&self) -> f64 {
                self.values.iter().copied().fold(f64::INFINITY, f64::min)
            }

            pub fn to_tensor(&self) -> Tensor<f64> {
                Tensor::from_vec(&[self.height, self.width], self.values.clone()).expect("dims match")
            }
        }
    };
}

grid_type!(
    /// Saliency at feature-map resolution (14×14 for VGG19 at 224×224).
    SaliencyGrid
);
grid_type!(
    /// Saliency upsampled to image resolution.
    SaliencyMap
);

/// Per-pixel damage indicator holding only 0 and 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub const ON: u8 = 255;

    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("BinaryMask", "pixel count", height * width, data.len()));
        }
        if let Some(v) = data.iter().find(|&&v| v != 0 && v != Self::ON) {
            return Err(Error::invalid(
                "BinaryMask",
                format!("pixel value {v} is neither 0 nor 255"),
            ));
        }
        Ok(BinaryMask { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut on: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(if on(y, x) { Self::ON } else { 0 });
            }
        }
        BinaryMask { height, width, data }
    }

    /// Any pixel at or above 128 counts as damage.
    pub fn from_gray(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| if p.0[0] >= 128 { Self::ON } else { 0 }).collect();
        BinaryMask {
            height: h as usize,
            width: w as usize,
            data,
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([self.data[y as usize * self.width + x as usize]])
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_on(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == Self::ON
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == Self::ON).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn area_fraction(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }
}

/// Strips a leading batch axis of size 1, leaving K×H×W.
fn khw<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [k, h, w] | [1, k, h, w] => Ok((k, h, w)),
        _ => Err(Error::shape(
            op,
            "shape",
            "K×H×W or 1×K×H×W",
            format!("{:?}", t.shape()),
        )),
    }
}

/// `w_k` = mean over (i, j) of the gradient for channel k.
pub fn channel_weights<T: Real>(grads: &Tensor<T>) -> Result<ChannelWeights> {
    let (k, h, w) = khw("channel_weights", grads)?;
    let cells = (h * w) as f64;
    if cells == 0.0 {
        return Err(Error::Empty("channel_weights gradient plane"));
    }
    let weights = grads
        .data()
        .chunks_exact(h * w)
        .take(k)
        .map(|plane| plane.iter().map(|v| v.as_f64()).sum::<f64>() / cells)
        .collect();
    Ok(ChannelWeights(weights))
}

/// `s_ij = max(0, Σ_k w_k · f^k_ij)`.
pub fn saliency_grid<T: Real>(feature_maps: &Tensor<T>, weights: &ChannelWeights) -> Result<SaliencyGrid> {
    let (k, h, w) = khw("saliency_grid", feature_maps)?;
    if weights.len() != k {
        return Err(Error::shape("saliency_grid", "channel count", k, weights.len()));
    }
    let f = feature_maps.data();
    let plane = h * w;
    let mut acc = vec![0.0f64; plane];
    for (c, &wk) in weights.0.iter().enumerate() {
        for (a, v) in acc.iter_mut().zip(&f[c * plane..(c + 1) * plane]) {
            *a += wk * v.as_f64();
        }
    }
    for a in &mut acc {
        *a = a.max(0.0);
    }
    SaliencyGrid::new(h, w, acc)
}

/// Bilinear (half-pixel centers) upsampling of `grid` to `height × width`.
pub fn upsample(grid: &SaliencyGrid, height: usize, width: usize) -> Result<SaliencyMap> {
    let t = bilinear_resize(&grid.to_tensor(), height, width)?;
    // Convex combinations of non-negative values; clamp guards -0.0 style noise.
    SaliencyMap::new(height, width, t.into_data().into_iter().map(|v| v.max(0.0)).collect())
}

/// Everything produced while mapping one image.
#[derive(Clone, Debug)]
pub struct DetectionMap {
    pub weights: ChannelWeights,
    pub grid: SaliencyGrid,
    pub map: SaliencyMap,
    /// Eval-mode class probabilities of the image.
    pub probabilities: Vec<f64>,
}

/// Class activation map of `class` for one image, upsampled to
/// `out_height × out_width`.
pub fn class_activation_map<T: Real>(
    net: &Network<T>,
    image: &Tensor<T>,
    class: usize,
    out_height: usize,
    out_width: usize,
) -> Result<DetectionMap> {
    let batch = as_batch(image)?;
    if batch.shape()[0] != 1 {
        return Err(Error::shape("class_activation_map", "batch size", 1, batch.shape()[0]));
    }
    let layer = net
        .cam_layer()
        .ok_or_else(|| Error::invalid("class_activation_map", "network has no convolution layer to map"))?
        .to_string();
    let (logits, trace) = net.forward(&batch, &[&layer])?;
    let grads = net.backward_class_to_layer(&trace, class, &layer)?;
    let fmaps = trace.get(&layer)?;
    if fmaps.rank() != 4 {
        return Err(Error::invalid(
            "class_activation_map",
            format!("layer `{layer}` is not spatial"),
        ));
    }
    let weights = channel_weights(&grads)?;
    let grid = saliency_grid(fmaps, &weights)?;
    let map = upsample(&grid, out_height, out_width)?;
    let probabilities = crate::tensor::softmax(&logits)?
        .data()
        .iter()
        .map(|v| v.as_f64())
        .collect();
    Ok(DetectionMap {
        weights,
        grid,
        map,
        probabilities,
    })
}

/// Damage detection map of one image at the network's input resolution.
pub fn damage_detection_map<T: Real>(net: &Network<T>, image: &Tensor<T>) -> Result<(SaliencyGrid, SaliencyMap)> {
    let [_, h, w] = net.config().input_shape;
    let d = class_activation_map(net, image, DAMAGE_CLASS, h, w)?;
    Ok((d.grid, d.map))
}

/// Pixels strictly above `fraction × max(map)` become 255. An all-zero map
/// gives an empty mask.
pub fn binary_mask(map: &SaliencyMap, fraction: f64) -> Result<BinaryMask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(
            "binary_mask",
            format!("fraction must be in (0, 1), got {fraction}"),
        ));
    }
    let cutoff = fraction * map.max();
    let data = map
        .values()
        .iter()
        .map(|&v| if v > cutoff { BinaryMask::ON } else { 0 })
        .collect();
    BinaryMask::new(map.height(), map.width(), data)
}

/// Jet colormap: dark blue at 0 through cyan, yellow, to dark red at 1.
pub fn jet(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    let ramp = |c: f64| (1.5 - (4.0 * t - c).abs()).clamp(0.0, 1.0);
    [ramp(3.0), ramp(2.0), ramp(1.0)]
}

/// Overlays the max-normalised map, through [`jet`], on `base` with
/// [`HEATMAP_ALPHA`] blending.
pub fn render_heatmap(map: &SaliencyMap, base: &RgbImage) -> Result<RgbImage> {
    let (w, h) = base.dimensions();
    if (h as usize, w as usize) != (map.height(), map.width()) {
        return Err(Error::shape(
            "render_heatmap",
            "image size",
            format!("{}×{}", map.height(), map.width()),
            format!("{h}×{w}"),
        ));
    }
    let max = map.max();
    let mut out = RgbImage::new(w, h);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let v = map.get(y as usize, x as usize);
        let t = if max > 0.0 { v / max } else { v };
        let color = jet(t);
        let src = base.get_pixel(x, y).0;
        let mut rgb = [0u8; 3];
        for c in 0..3 {
            let blended = HEATMAP_ALPHA * color[c] * 255.0 + (1.0 - HEATMAP_ALPHA) * src[c] as f64;
            rgb[c] = blended.round().clamp(0.0, 255.0) as u8;
        }
        *px = Rgb(rgb);
    }
    Ok(out)
}
