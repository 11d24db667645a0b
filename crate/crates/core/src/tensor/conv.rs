use super::{nchw, Real, Tensor};
use crate::error::{Error, Result};

/// 3×3 convolution, stride 1, zero padding 1: spatial size is preserved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub const KERNEL: usize = 3;
    pub const PADDING: usize = 1;

    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, Self::KERNEL, Self::KERNEL]
    }
}

fn check_shapes<T: Real>(
    op: &'static str,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<[usize; 4]> {
    let [n, c, h, w] = nchw(op, input.shape())?;
    if spec.in_channels == 0 || spec.out_channels == 0 {
        return Err(Error::invalid(op, "channel counts must be positive"));
    }
    if c != spec.in_channels {
        return Err(Error::shape(op, "input channels", spec.in_channels, c));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid(op, "spatial dims must be at least 1"));
    }
    let ws = spec.weight_shape();
    if weights.shape() != ws {
        return Err(Error::shape(
            op,
            "weights",
            format!("{ws:?}"),
            format!("{:?}", weights.shape()),
        ));
    }
    Ok([n, c, h, w])
}

/// Range of output coordinates `y` such that `y + k - 1` lies in `0..len`.
#[inline]
fn valid_range(k: usize, len: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { len - 1 } else { len };
    (lo.min(len), hi)
}

/// Adds `scale` × (src plane shifted by kernel offset (ky, kx)) into `dst`.
///
/// `forward == true` reads `src[y+ky-1][x+kx-1]` into `dst[y][x]`;
/// otherwise scatters `src[y][x]` into `dst[y+ky-1][x+kx-1]`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn shifted_axpy<T: Real>(dst: &mut [T], src: &[T], h: usize, w: usize, ky: usize, kx: usize, scale: T, forward: bool) {
    let (y0, y1) = valid_range(ky, h);
    let (x0, x1) = valid_range(kx, w);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = y + ky - 1;
        let (d, s) = if forward {
            (
                &mut dst[y * w + x0..y * w + x1],
                &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1],
            )
        } else {
            (
                &mut dst[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1],
                &src[y * w + x0..y * w + x1],
            )
        };
        for (a, &b) in d.iter_mut().zip(s) {
            *a += scale * b;
        }
    }
}

pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = check_shapes("conv2d_forward", input, weights, spec)?;
    let o = spec.out_channels;
    if bias.shape() != [o] {
        return Err(Error::shape(
            "conv2d_forward",
            "bias",
            format!("[{o}]"),
            format!("{:?}", bias.shape()),
        ));
    }
    let plane = h * w;
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![T::zero(); n * o * plane];
    for b in 0..n {
        for oc in 0..o {
            let dst = &mut out[(b * o + oc) * plane..(b * o + oc + 1) * plane];
            dst.fill(bias.data()[oc]);
            for ic in 0..c {
                let src = &x[(b * c + ic) * plane..(b * c + ic + 1) * plane];
                let k = &wt[(oc * c + ic) * 9..(oc * c + ic + 1) * 9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        shifted_axpy(dst, src, h, w, ky, kx, k[ky * 3 + kx], true);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, o, h, w], out)
}

fn check_grad_out<T: Real>(
    op: &'static str,
    grad_out: &Tensor<T>,
    n: usize,
    o: usize,
    h: usize,
    w: usize,
) -> Result<()> {
    if grad_out.shape() != [n, o, h, w] {
        return Err(Error::shape(
            op,
            "grad_out",
            format!("{:?}", [n, o, h, w]),
            format!("{:?}", grad_out.shape()),
        ));
    }
    Ok(())
}

/// Gradient with respect to the convolution input only.
pub fn conv2d_backward_input<T: Real>(
    input_shape: &[usize],
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("conv2d_backward", input_shape)?;
    if c != spec.in_channels {
        return Err(Error::shape("conv2d_backward", "input channels", spec.in_channels, c));
    }
    let o = spec.out_channels;
    check_grad_out("conv2d_backward", grad_out, n, o, h, w)?;
    let plane = h * w;
    let g = grad_out.data();
    let wt = weights.data();
    let mut gin = vec![T::zero(); n * c * plane];
    for b in 0..n {
        for ic in 0..c {
            let dst = &mut gin[(b * c + ic) * plane..(b * c + ic + 1) * plane];
            for oc in 0..o {
                let src = &g[(b * o + oc) * plane..(b * o + oc + 1) * plane];
                let k = &wt[(oc * c + ic) * 9..(oc * c + ic + 1) * 9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        shifted_axpy(dst, src, h, w, ky, kx, k[ky * 3 + kx], false);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, c, h, w], gin)
}

/// Gradients with respect to the weights and bias.
pub fn conv2d_backward_params<T: Real>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = nchw("conv2d_backward", input.shape())?;
    if c != spec.in_channels {
        return Err(Error::shape("conv2d_backward", "input channels", spec.in_channels, c));
    }
    let o = spec.out_channels;
    check_grad_out("conv2d_backward", grad_out, n, o, h, w)?;
    let plane = h * w;
    let x = input.data();
    let g = grad_out.data();
    let mut gw = vec![T::zero(); o * c * 9];
    let mut gb = vec![T::zero(); o];
    for oc in 0..o {
        for b in 0..n {
            let go = &g[(b * o + oc) * plane..(b * o + oc + 1) * plane];
            gb[oc] += go.iter().copied().sum::<T>();
            for ic in 0..c {
                let src = &x[(b * c + ic) * plane..(b * c + ic + 1) * plane];
                for ky in 0..3 {
                    let (y0, y1) = valid_range(ky, h);
                    for kx in 0..3 {
                        let (x0, x1) = valid_range(kx, w);
                        if x0 >= x1 {
                            continue;
                        }
                        let mut acc = T::zero();
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let gr = &go[y * w + x0..y * w + x1];
                            let sr = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                            for (&a, &b) in gr.iter().zip(sr) {
                                acc += a * b;
                            }
                        }
                        gw[(oc * c + ic) * 9 + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    Ok((Tensor::from_vec(&spec.weight_shape(), gw)?, Tensor::from_vec(&[o], gb)?))
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    check_shapes("conv2d_backward", input, weights, spec)?;
    let gin = conv2d_backward_input(input.shape(), weights, grad_out, spec)?;
    let (gw, gb) = conv2d_backward_params(input, grad_out, spec)?;
    Ok((gin, gw, gb))
}
