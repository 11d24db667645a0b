use super::{Real, Tensor};
use crate::error::{Error, Result};

/// A parameter tensor paired with its loss gradient.
#[derive(Clone, Debug)]
pub struct GradientPair<T = f32> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> GradientPair<T> {
    pub fn new(value: Tensor<T>, grad: Tensor<T>) -> Result<Self> {
        if value.shape() != grad.shape() {
            return Err(Error::shape(
                "gradient_pair",
                "grad",
                format!("{:?}", value.shape()),
                format!("{:?}", grad.shape()),
            ));
        }
        Ok(GradientPair { value, grad })
    }
}

/// `value ← value − mu · grad`.
pub fn sgd_update<T: Real>(value: &mut Tensor<T>, grad: &Tensor<T>, mu: f64) -> Result<()> {
    if !(mu >= 0.0) {
        return Err(Error::invalid(
            "sgd",
            format!("learning rate must be non-negative, got {mu}"),
        ));
    }
    if value.shape() != grad.shape() {
        return Err(Error::shape(
            "sgd",
            "grad",
            format!("{:?}", value.shape()),
            format!("{:?}", grad.shape()),
        ));
    }
    let mu = T::of_f64(mu);
    for (v, &g) in value.data_mut().iter_mut().zip(grad.data()) {
        *v -= mu * g;
    }
    Ok(())
}

pub fn sgd_step<T: Real>(params: &mut [GradientPair<T>], mu: f64) -> Result<()> {
    for p in params {
        sgd_update(&mut p.value, &p.grad, mu)?;
    }
    Ok(())
}
