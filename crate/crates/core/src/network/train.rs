use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LayerKind, Network};
use crate::error::{Error, Result};
use crate::tensor::{cross_entropy, sgd_update, softmax, softmax_cross_entropy_backward, Real, Tensor};

/// Images (each C×H×W) with integer class labels.
#[derive(Clone, Debug, Default)]
pub struct Dataset<T = f32> {
    pub images: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    pub fn new(images: Vec<Tensor<T>>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::shape("dataset", "label count", images.len(), labels.len()));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let imgs: Vec<&Tensor<T>> = indices.iter().map(|&i| &self.images[i]).collect();
        Ok((Tensor::stack(&imgs)?, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dropout_active: bool,
    /// Leave convolution weights untouched (only dense layers train).
    pub freeze_conv: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 1,
            seed: 0,
            dropout_active: true,
            freeze_conv: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Fraction of training examples whose (training-mode) argmax matched
    /// the label during the epoch.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

pub(crate) fn onehot<T: Real>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::invalid(
                "onehot",
                format!("label {l} out of range for {classes} classes"),
            ));
        }
        t.data_mut()[i * classes + l] = T::one();
    }
    Ok(t)
}

pub(crate) fn argmax_rows<T: Real>(t: &Tensor<T>) -> Vec<usize> {
    let c = t.shape()[1];
    t.data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

impl<T: Real> Network<T> {
    /// Mini-batch SGD with softmax cross-entropy. Epoch order is a seeded
    /// Fisher–Yates shuffle; dropout masks come from the same stream.
    pub fn fine_tune(&mut self, data: &Dataset<T>, config: &TrainConfig) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if !(config.learning_rate >= 0.0) || !config.learning_rate.is_finite() {
            return Err(Error::invalid(
                "fine_tune",
                "learning rate must be finite and non-negative",
            ));
        }
        if config.batch_size == 0 {
            return Err(Error::invalid("fine_tune", "batch size must be at least 1"));
        }
        let classes = self.num_classes();
        if let Some(&bad) = data.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(
                "fine_tune",
                format!("label {bad} out of range for {classes} classes"),
            ));
        }
        let batch_size = config.batch_size.min(data.len());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut report = TrainReport {
            seed: config.seed,
            epochs: Vec::with_capacity(config.epochs),
        };

        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for chunk in order.chunks(batch_size) {
                let (batch, labels) = data.batch(chunk)?;
                let (logits, trace) = if config.dropout_active {
                    self.forward_train(&batch, &[], &mut rng)?
                } else {
                    self.forward(&batch, &[])?
                };
                let probs = softmax(&logits)?;
                let target = onehot(&labels, classes)?;
                let loss = cross_entropy(&probs, &target)?.as_f64();
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        op: format!("loss at epoch {epoch}"),
                    });
                }
                loss_sum += loss * chunk.len() as f64;
                correct += argmax_rows(&probs).iter().zip(&labels).filter(|(p, l)| p == l).count();

                if config.learning_rate == 0.0 {
                    continue;
                }
                let grad_logits = softmax_cross_entropy_backward(&probs, &target)?;
                let grads = self.backward(&trace, &grad_logits)?;
                for layer in &self.config.layers {
                    if config.freeze_conv && matches!(layer.kind, LayerKind::Conv { .. }) {
                        continue;
                    }
                    let (Some(g), Some(p)) = (grads.get(&layer.name), self.params.get_mut(&layer.name)) else {
                        continue;
                    };
                    sgd_update(&mut p.weight, &g.weight, config.learning_rate)?;
                    sgd_update(&mut p.bias, &g.bias, config.learning_rate)?;
                }
            }
            report.epochs.push(EpochStats {
                epoch,
                mean_loss: loss_sum / data.len() as f64,
                accuracy: correct as f64 / data.len() as f64,
            });
        }
        Ok(report)
    }

    /// Mean cross-entropy of the eval-mode network on `data`.
    pub fn loss(&self, data: &Dataset<T>) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("loss dataset"));
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut total = 0.0;
        for chunk in idx.chunks(64) {
            let (batch, labels) = data.batch(chunk)?;
            let probs = self.predict_batch(&batch)?;
            total += cross_entropy(&probs, &onehot(&labels, self.num_classes())?)?.as_f64() * chunk.len() as f64;
        }
        Ok(total / data.len() as f64)
    }

    /// Argmax class of each image (eval mode).
    pub fn classify(&self, data: &Dataset<T>) -> Result<Vec<usize>> {
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut out = Vec::with_capacity(data.len());
        for chunk in idx.chunks(64) {
            let (batch, _) = data.batch(chunk)?;
            out.extend(argmax_rows(&self.predict_batch(&batch)?));
        }
        Ok(out)
    }
}
