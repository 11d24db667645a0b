use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct DenseGrads<T = f32> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn dims<T: Real>(op: &'static str, input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (n, d) = match *input.shape() {
        [n, d] => (n, d),
        _ => return Err(Error::shape(op, "input rank", 2, input.rank())),
    };
    let m = match *weights.shape() {
        [wd, m] if wd == d => m,
        [wd, _] => return Err(Error::shape(op, "inner dimension", d, wd)),
        _ => return Err(Error::shape(op, "weights rank", 2, weights.rank())),
    };
    Ok((n, d, m))
}

/// `out = input · weights + bias` with input N×D, weights D×M.
pub fn dense_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d, m) = dims("dense_forward", input, weights)?;
    if bias.shape() != [m] {
        return Err(Error::shape(
            "dense_forward",
            "bias",
            format!("[{m}]"),
            format!("{:?}", bias.shape()),
        ));
    }
    let x = input.data();
    let w = weights.data();
    let mut out = Vec::with_capacity(n * m);
    for row in x.chunks_exact(d.max(1)).take(n) {
        let mut acc = bias.data().to_vec();
        for (k, &a) in row.iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (o, &wv) in acc.iter_mut().zip(&w[k * m..(k + 1) * m]) {
                *o += a * wv;
            }
        }
        out.extend_from_slice(&acc);
    }
    if d == 0 {
        out = (0..n).flat_map(|_| bias.data().iter().copied()).collect();
    }
    Tensor::from_vec(&[n, m], out)
}

/// Analytic gradients of [`dense_forward`]. The input gradient is skipped
/// when `need_input` is false.
pub fn dense_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<DenseGrads<T>> {
    let (n, d, m) = dims("dense_backward", input, weights)?;
    if grad_out.shape() != [n, m] {
        return Err(Error::shape(
            "dense_backward",
            "grad_out",
            format!("[{n}, {m}]"),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();

    let mut gw = vec![T::zero(); d * m];
    let mut gb = vec![T::zero(); m];
    for b in 0..n {
        let gr = &g[b * m..(b + 1) * m];
        for (acc, &v) in gb.iter_mut().zip(gr) {
            *acc += v;
        }
        for k in 0..d {
            let a = x[b * d + k];
            if a == T::zero() {
                continue;
            }
            for (acc, &v) in gw[k * m..(k + 1) * m].iter_mut().zip(gr) {
                *acc += a * v;
            }
        }
    }

    let gin = if need_input {
        let mut gi = Vec::with_capacity(n * d);
        for b in 0..n {
            let gr = &g[b * m..(b + 1) * m];
            for k in 0..d {
                let mut acc = T::zero();
                for (&wv, &gv) in w[k * m..(k + 1) * m].iter().zip(gr) {
                    acc += wv * gv;
                }
                gi.push(acc);
            }
        }
        Some(Tensor::from_vec(&[n, d], gi)?)
    } else {
        None
    };

    Ok(DenseGrads {
        input: gin,
        weights: Tensor::from_vec(&[d, m], gw)?,
        bias: Tensor::from_vec(&[m], gb)?,
    })
}
