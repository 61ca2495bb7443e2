use alloc::vec::Vec;

use super::network::{Gradients, Network};
use crate::error::{bail, Result};
use crate::math;
use crate::tensor::Tensor;

/// Adam with bias correction. Defaults follow the common framework values
/// (beta1 0.9, beta2 0.999, epsilon 1e-7).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(net: &Network, learning_rate: f64) -> Self {
        let zeros: Vec<Tensor> = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient rejects the whole update
    /// and leaves parameters and moments untouched.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let mut params = net.params_mut();
        if params.len() != grads.0.len() || params.len() != self.first.len() {
            bail!(
                Dimension,
                "{} parameter tensors, {} gradients, {} moments",
                params.len(),
                grads.0.len(),
                self.first.len()
            );
        }
        for (i, (p, g)) in params.iter().zip(&grads.0).enumerate() {
            if p.shape() != g.shape() {
                bail!(Dimension, "gradient {} has shape {:?}, parameter {:?}", i, g.shape(), p.shape());
            }
        }
        if !grads.is_finite() {
            bail!(NonFinite, "gradient contains NaN or infinity; update rejected");
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(&grads.0)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let (b1, b2) = (self.beta1, self.beta2);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= self.learning_rate * mhat / (math::sqrt(vhat) + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn scalar_net() -> Network {
        Network::new(&[1], &[LayerSpec::Dense { units: 1, activation: Activation::Linear }], 4)
            .unwrap()
    }

    fn grads(w: f64, b: f64) -> Gradients {
        Gradients(alloc::vec![
            Tensor::from_vec(&[1, 1], alloc::vec![w]).unwrap(),
            Tensor::from_vec(&[1], alloc::vec![b]).unwrap(),
        ])
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar_net();
        let before = net.flat_params();
        let mut adam = AdamState::new(&net, 1e-3);
        for _ in 0..10 {
            adam.step(&mut net, &grads(0.0, 0.0)).unwrap();
        }
        assert_eq!(net.flat_params(), before);
        assert_eq!(adam.step_count(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // scalar recurrence: m1 = (1-b1) g, v1 = (1-b2) g^2, so the
        // corrected ratio is g / (|g| + eps)
        for g in [0.3, -2.0, 1e-3] {
            let mut net = scalar_net();
            let w0 = net.flat_params()[0];
            let mut adam = AdamState::new(&net, 1e-3);
            adam.step(&mut net, &grads(g, 0.0)).unwrap();
            let expected = -1e-3 * g / (g.abs() + 1e-7);
            let delta = net.flat_params()[0] - w0;
            assert!((delta - expected).abs() < 1e-15, "g={g} delta={delta}");
            assert!((delta.abs() - 1e-3).abs() < 1e-3 * 1e-3);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut net = scalar_net();
        let before = net.flat_params();
        let mut adam = AdamState::new(&net, 1e-3);
        let err = adam.step(&mut net, &grads(f64::NAN, 0.0)).unwrap_err();
        assert!(matches!(err, crate::Error::NonFinite(_)));
        assert_eq!(net.flat_params(), before);
        assert_eq!(adam.step_count(), 0);
    }
}
