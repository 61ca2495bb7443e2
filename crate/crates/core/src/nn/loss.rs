use alloc::vec;

use crate::error::{bail, Result};
use crate::math;
use crate::tensor::Tensor;

const CLAMP: f64 = 1e-12;

pub fn one_hot(class: usize, n: usize) -> Tensor {
    let mut v = vec![0.0; n];
    v[class] = 1.0;
    Tensor::from_vec(&[n], v).expect("one-hot length")
}

fn check(probs: &Tensor, target: &Tensor) -> Result<()> {
    if probs.shape() != target.shape() {
        bail!(
            Dimension,
            "probabilities {:?} vs target {:?}",
            probs.shape(),
            target.shape()
        );
    }
    Ok(())
}

/// `-sum(t * ln(max(p, 1e-12)))`; for a one-hot target this is
/// `-ln p[class]`.
pub fn cross_entropy(probs: &Tensor, target: &Tensor) -> Result<f64> {
    check(probs, target)?;
    Ok(probs
        .data()
        .iter()
        .zip(target.data())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * math::ln(p.max(CLAMP)))
        .sum())
}

/// dL/dp of [`cross_entropy`].
pub fn cross_entropy_grad(probs: &Tensor, target: &Tensor) -> Result<Tensor> {
    check(probs, target)?;
    let data = probs
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| if t == 0.0 || p < CLAMP { 0.0 } else { -t / p })
        .collect();
    Tensor::from_vec(probs.shape(), data)
}
