use alloc::vec::Vec;

use super::loss::{cross_entropy, cross_entropy_grad};
use super::network::Network;
use crate::error::{bail, Result};
use crate::rng::{streams, Rng};
use crate::tensor::Tensor;

/// Denominator floor of the relative error, so entries where both
/// gradients are ~0 compare on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Max relative error between backpropagated and central-difference
/// gradients of the cross-entropy loss, over every parameter.
pub fn grad_check(net: &Network, input: &Tensor, target: &Tensor, epsilon: f64) -> Result<f64> {
    grad_check_with(net, input, target, epsilon, None)
}

/// Same as [`grad_check`] but probes at most `per_tensor` randomly chosen
/// entries of each parameter tensor.
pub fn grad_check_sampled(
    net: &Network,
    input: &Tensor,
    target: &Tensor,
    epsilon: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<f64> {
    grad_check_with(net, input, target, epsilon, Some((per_tensor, seed)))
}

fn grad_check_with(
    net: &Network,
    input: &Tensor,
    target: &Tensor,
    epsilon: f64,
    sample: Option<(usize, u64)>,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        bail!(Precondition, "epsilon {} not in (0, 1e-2]", epsilon);
    }
    if net.has_active_dropout() {
        bail!(Precondition, "gradient check needs dropout disabled");
    }
    let mut rng = Rng::stream(0, &[streams::CHECK]);
    let (out, trace) = net.forward_trace(input, &mut rng)?;
    let analytic = net.backward_trace(&trace, &cross_entropy_grad(&out, target)?)?;

    let mut probe = net.clone();
    let loss = |n: &Network| -> Result<f64> { cross_entropy(&n.predict(input)?, target) };
    let mut worst = 0.0f64;
    let n_tensors = analytic.0.len();
    for ti in 0..n_tensors {
        let len = analytic.0[ti].len();
        let indices: Vec<usize> = match sample {
            Some((k, seed)) if k < len => {
                let mut r = Rng::stream(seed, &[streams::CHECK, ti as u64]);
                (0..k).map(|_| r.below(len)).collect()
            }
            _ => (0..len).collect(),
        };
        for i in indices {
            let orig = probe.params()[ti].data()[i];
            probe.params_mut()[ti].data_mut()[i] = orig + epsilon;
            let up = loss(&probe)?;
            probe.params_mut()[ti].data_mut()[i] = orig - epsilon;
            let down = loss(&probe)?;
            probe.params_mut()[ti].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(rel_err(analytic.0[ti].data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{one_hot, Activation, LayerSpec};

    #[test]
    fn linear_net_is_exact() {
        // dense -> softmax has no kinks: only truncation and rounding error
        let net = Network::new(
            &[5],
            &[LayerSpec::Dense { units: 3, activation: Activation::Linear }, LayerSpec::Softmax],
            11,
        )
        .unwrap();
        let x = Tensor::from_vec(&[5], alloc::vec![0.3, -0.2, 0.9, 0.05, -1.1]).unwrap();
        let err = grad_check(&net, &x, &one_hot(1, 3), 1e-5).unwrap();
        assert!(err <= 1e-7, "err = {err}");
    }

    #[test]
    fn active_dropout_is_rejected() {
        let mut net = Network::new(
            &[4],
            &[
                LayerSpec::Dense { units: 3, activation: Activation::Relu },
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: 2, activation: Activation::Linear },
                LayerSpec::Softmax,
            ],
            2,
        )
        .unwrap();
        let x = Tensor::filled(&[4], 0.5);
        let err = grad_check(&net, &x, &one_hot(0, 2), 1e-5).unwrap_err();
        assert!(matches!(err, crate::Error::Precondition(_)));
        net.set_dropout_active(false);
        assert!(grad_check(&net, &x, &one_hot(0, 2), 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn epsilon_range_is_enforced() {
        let net = Network::new(&[2], &[LayerSpec::Softmax], 0).unwrap();
        let x = Tensor::filled(&[2], 0.5);
        assert!(grad_check(&net, &x, &one_hot(0, 2), 0.0).is_err());
        assert!(grad_check(&net, &x, &one_hot(0, 2), 0.05).is_err());
    }
}
