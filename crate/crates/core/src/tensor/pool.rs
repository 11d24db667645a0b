use super::{nchw, Real, Tensor};
use crate::error::{Error, Result};

/// Output of a 2×2/stride-2 max pool together with the routing needed for
/// the backward pass.
#[derive(Clone, Debug)]
pub struct MaxPool<T = f32> {
    pub output: Tensor<T>,
    /// Flat index into the input tensor of each output's maximum.
    pub argmax: Vec<usize>,
}

pub fn maxpool2_forward<T: Real>(input: &Tensor<T>) -> Result<MaxPool<T>> {
    let [n, c, h, w] = nchw("maxpool2_forward", input.shape())?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(
            "maxpool2_forward",
            format!("spatial dims must be even, got {h}×{w}"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let first = base + 2 * oy * w + 2 * ox;
                // Window scanned in increasing flat index; strict `>` keeps the lowest on ties.
                let mut best = first;
                for idx in [first + 1, first + w, first + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(MaxPool {
        output: Tensor::from_vec(&[n, c, oh, ow], out)?,
        argmax,
    })
}

pub fn maxpool2_backward<T: Real>(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape(
            "maxpool2_backward",
            "grad_out length",
            argmax.len(),
            grad_out.len(),
        ));
    }
    let mut gin = Tensor::zeros(input_shape);
    let d = gin.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        if idx >= d.len() {
            return Err(Error::invalid("maxpool2_backward", "argmax index out of range"));
        }
        d[idx] += g;
    }
    Ok(gin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_max_and_routes_gradient() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2_forward(&x).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
        let g = Tensor::from_vec(&[1, 1, 1, 1], vec![9.0]).unwrap();
        let gi = maxpool2_backward(x.shape(), &p.argmax, &g).unwrap();
        assert_eq!(gi.data(), &[0.0, 0.0, 0.0, 9.0]);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let x = Tensor::<f32>::full(&[1, 2, 4, 4], 5.0);
        let p = maxpool2_forward(&x).unwrap();
        assert!(p.output.data().iter().all(|&v| v == 5.0));
        assert_eq!(&p.argmax[..4], &[0, 2, 8, 10]);
        assert_eq!(p.argmax[4], 16);
    }

    #[test]
    fn odd_dims_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 4]);
        assert!(maxpool2_forward(&x).is_err());
    }
}
