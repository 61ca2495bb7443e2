use alloc::vec::Vec;

use super::adam::AdamState;
use super::loss::{cross_entropy, cross_entropy_grad, one_hot};
use super::network::{Gradients, Mode, Network};
use crate::error::{bail, Result};
use crate::rng::{streams, Rng};
use crate::tensor::Tensor;

/// Indexed classification examples. Implementors may materialize inputs
/// lazily (e.g. from packed `f32` crops).
pub trait Examples {
    fn len(&self) -> usize;
    fn input(&self, i: usize) -> Tensor;
    fn class(&self, i: usize) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Examples for [(Tensor, usize)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn input(&self, i: usize) -> Tensor {
        self[i].0.clone()
    }
    fn class(&self, i: usize) -> usize {
        self[i].1
    }
}

impl Examples for Vec<(Tensor, usize)> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn input(&self, i: usize) -> Tensor {
        self[i].0.clone()
    }
    fn class(&self, i: usize) -> usize {
        self[i].1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop after this many epochs without a validation-accuracy gain and
    /// restore the best weights. `None` trains for exactly `epochs`.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 10, batch_size: 256, learning_rate: 1e-3, patience: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Accuracy and argmax predictions in eval mode.
pub fn evaluate<E: Examples + ?Sized>(net: &Network, data: &E) -> Result<(f64, Vec<usize>)> {
    let mut preds = Vec::with_capacity(data.len());
    let mut correct = 0usize;
    for i in 0..data.len() {
        let p = net.predict(&data.input(i))?.argmax();
        correct += (p == data.class(i)) as usize;
        preds.push(p);
    }
    let acc = if data.is_empty() { 0.0 } else { correct as f64 / data.len() as f64 };
    Ok((acc, preds))
}

/// Mini-batch Adam on softmax cross-entropy.
///
/// Per-sample gradients are summed in batch order and averaged, so the run
/// is a pure function of (network, data, config, seed).
pub fn fit<E: Examples + ?Sized>(
    net: &mut Network,
    train: &E,
    val: &E,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<History> {
    if train.is_empty() {
        bail!(Argument, "training set is empty");
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        bail!(Argument, "epochs and batch size must be positive");
    }
    let out = net.output_shape()?;
    let [n_classes] = out[..] else {
        bail!(Dimension, "classifier must produce a flat output, got {:?}", out);
    };
    net.set_mode(Mode::Train);
    let mut adam = AdamState::new(net, cfg.learning_rate);
    let mut history = History::default();
    let mut best: Option<(f64, Network)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        Rng::stream(seed, &[streams::SHUFFLE, epoch as u64]).shuffle(&mut order);
        let mut dropout = Rng::stream(seed, &[streams::DROPOUT, epoch as u64]);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros_like(net);
            for &i in batch {
                let class = train.class(i);
                if class >= n_classes {
                    bail!(Encoding, "class {} outside {} outputs", class, n_classes);
                }
                let target = one_hot(class, n_classes);
                let (probs, trace) = net.forward_trace(&train.input(i), &mut dropout)?;
                loss_sum += cross_entropy(&probs, &target)?;
                correct += (probs.argmax() == class) as usize;
                let g = net.backward_trace(&trace, &cross_entropy_grad(&probs, &target)?)?;
                acc.add_assign(&g);
            }
            acc.scale(1.0 / batch.len() as f64);
            adam.step(net, &acc)?;
        }
        let train_accuracy = correct as f64 / train.len() as f64;
        let val_accuracy =
            if val.is_empty() { train_accuracy } else { evaluate(net, val)?.0 };
        history.epochs.push(EpochStats {
            loss: loss_sum / train.len() as f64,
            train_accuracy,
            val_accuracy,
        });

        if let Some(patience) = cfg.patience {
            let improved = best.as_ref().is_none_or(|(b, _)| val_accuracy > *b);
            if improved {
                best = Some((val_accuracy, net.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    history.stopped_early = true;
                    break;
                }
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if let Some((_, snapshot)) = best {
        *net = snapshot;
    }
    net.set_mode(Mode::Eval);
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn blobs(seed: u64, n: usize) -> Vec<(Tensor, usize)> {
        let mut rng = Rng::stream(seed, &[]);
        (0..n)
            .map(|i| {
                let class = i % 2;
                let centre = if class == 0 { -1.0 } else { 1.0 };
                let x = (0..4).map(|_| centre + 0.3 * rng.normal()).collect();
                (Tensor::from_vec(&[4], x).unwrap(), class)
            })
            .collect()
    }

    fn net() -> Network {
        Network::new(
            &[4],
            &[
                LayerSpec::Dense { units: 8, activation: Activation::Relu },
                LayerSpec::Dropout { rate: 0.25 },
                LayerSpec::Dense { units: 2, activation: Activation::Linear },
                LayerSpec::Softmax,
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(1, 200);
        let mut n = net();
        let cfg = TrainConfig { epochs: 30, batch_size: 16, learning_rate: 1e-2, patience: None };
        let h = fit(&mut n, &data, &data, &cfg, 7).unwrap();
        assert_eq!(h.epochs.len(), 30);
        assert!(evaluate(&n, &data).unwrap().0 > 0.98);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let data = blobs(2, 64);
        let cfg = TrainConfig { epochs: 3, batch_size: 8, learning_rate: 1e-2, patience: None };
        let (mut a, mut b) = (net(), net());
        let ha = fit(&mut a, &data, &data, &cfg, 5).unwrap();
        let hb = fit(&mut b, &data, &data, &cfg, 5).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let empty: Vec<(Tensor, usize)> = Vec::new();
        let err = fit(&mut net(), &empty, &empty, &TrainConfig::default(), 0).unwrap_err();
        assert!(matches!(err, crate::Error::Argument(_)));
    }
}
