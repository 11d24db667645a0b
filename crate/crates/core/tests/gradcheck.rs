//! Backward kernels against central finite differences in f64.

use dmgcam_core::tensor::{
    conv2d_backward, conv2d_forward, cross_entropy, dense_backward, dense_forward, maxpool2_backward, maxpool2_forward,
    relu, relu_backward, softmax, softmax_cross_entropy_backward, ConvSpec,
};
use dmgcam_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 100;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central differences of scalar `f` at every element of `x`.
fn numeric(x: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += H;
            let mut m = x.clone();
            m.data_mut()[i] -= H;
            (f(&p) - f(&m)) / (2.0 * H)
        })
        .collect()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn assert_close(what: &str, seed: u64, analytic: &Tensor<f64>, numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric).enumerate() {
        let e = rel_err(a, n);
        assert!(
            e < TOL,
            "{what} seed {seed} element {i}: analytic {a} numeric {n} rel {e}"
        );
    }
}

#[test]
fn conv_backward_matches_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, c, o) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (h, w) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let spec = ConvSpec::new(c, o);
        let x = random(&mut rng, &[n, c, h, w]);
        let wt = random(&mut rng, &spec.weight_shape());
        let b = random(&mut rng, &[o]);
        let r = random(&mut rng, &[n, o, h, w]);
        let loss =
            |x: &Tensor<f64>, wt: &Tensor<f64>, b: &Tensor<f64>| dot(&conv2d_forward(x, wt, b, &spec).unwrap(), &r);
        let (gx, gw, gb) = conv2d_backward(&x, &wt, &r, &spec).unwrap();
        assert_close("conv input", seed, &gx, &numeric(&x, |x| loss(x, &wt, &b)));
        assert_close("conv weight", seed, &gw, &numeric(&wt, |wt| loss(&x, wt, &b)));
        assert_close("conv bias", seed, &gb, &numeric(&b, |b| loss(&x, &wt, b)));
    }
}

#[test]
fn dense_backward_matches_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d, m) = (rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=5));
        let x = random(&mut rng, &[n, d]);
        let wt = random(&mut rng, &[d, m]);
        let b = random(&mut rng, &[m]);
        let r = random(&mut rng, &[n, m]);
        let loss = |x: &Tensor<f64>, wt: &Tensor<f64>, b: &Tensor<f64>| dot(&dense_forward(x, wt, b).unwrap(), &r);
        let g = dense_backward(&x, &wt, &r, true).unwrap();
        assert_close(
            "dense input",
            seed,
            g.input.as_ref().unwrap(),
            &numeric(&x, |x| loss(x, &wt, &b)),
        );
        assert_close("dense weight", seed, &g.weights, &numeric(&wt, |wt| loss(&x, wt, &b)));
        assert_close("dense bias", seed, &g.bias, &numeric(&b, |b| loss(&x, &wt, b)));
    }
}

#[test]
fn relu_backward_matches_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=8)];
        let x = random(&mut rng, &shape);
        let r = random(&mut rng, x.shape());
        let g = relu_backward(&x, &r).unwrap();
        assert_close("relu", seed, &g, &numeric(&x, |x| dot(&relu(x), &r)));
    }
}

#[test]
fn maxpool_backward_matches_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [
            rng.gen_range(1..=2),
            rng.gen_range(1..=3),
            2 * rng.gen_range(1..=3),
            2 * rng.gen_range(1..=3),
        ];
        let x = random(&mut rng, &shape);
        let fwd = maxpool2_forward(&x).unwrap();
        let r = random(&mut rng, fwd.output.shape());
        let g = maxpool2_backward(x.shape(), &fwd.argmax, &r).unwrap();
        assert_close(
            "maxpool",
            seed,
            &g,
            &numeric(&x, |x| dot(&maxpool2_forward(x).unwrap().output, &r)),
        );
    }
}

#[test]
fn softmax_cross_entropy_backward_matches_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, c) = (rng.gen_range(1..=4), rng.gen_range(2..=5));
        let z = random(&mut rng, &[n, c]).scale(3.0);
        let mut y = Tensor::<f64>::zeros(&[n, c]);
        for i in 0..n {
            y.data_mut()[i * c + rng.gen_range(0..c)] = 1.0;
        }
        let g = softmax_cross_entropy_backward(&softmax(&z).unwrap(), &y).unwrap();
        let num = numeric(&z, |z| cross_entropy(&softmax(z).unwrap(), &y).unwrap());
        assert_close("softmax+ce", seed, &g, &num);
    }
}
