use rand::Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Dropout<T = f32> {
    pub output: Tensor<T>,
    /// Per-element multiplier applied in training mode (0 or `1/(1-rate)`);
    /// `None` when the layer acted as the identity.
    pub mask: Option<Tensor<T>>,
}

/// Inverted dropout. In eval mode (or with `rate == 0`) the input is
/// returned unchanged.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<Dropout<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid("dropout", format!("rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(Dropout {
            output: input.clone(),
            mask: None,
        });
    }
    let keep = T::of_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let out = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok(Dropout {
        output: Tensor::from_vec(input.shape(), out)?,
        mask: Some(Tensor::from_vec(input.shape(), mask)?),
    })
}

pub fn dropout_backward<T: Real>(mask: Option<&Tensor<T>>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(grad.clone()),
        Some(m) if m.shape() == grad.shape() => {
            let data = grad.data().iter().zip(m.data()).map(|(&g, &k)| g * k).collect();
            Tensor::from_vec(grad.shape(), data)
        }
        Some(m) => Err(Error::shape(
            "dropout_backward",
            "grad",
            format!("{:?}", m.shape()),
            format!("{:?}", grad.shape()),
        )),
    }
}
