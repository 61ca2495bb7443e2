use alloc::vec;
use alloc::vec::Vec;

use super::layers::{Cache, Layer, LayerSpec};
use crate::error::{bail, Result};
use crate::rng::{streams, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Whether the network takes exactly its declared input (`Cnn`) or any
/// spatial extent at least that large (`Fcn`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Cnn,
    Fcn,
}

/// Intermediate state of one training forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    caches: Vec<Cache>,
    output_shape: Vec<usize>,
}

/// One gradient tensor per parameter tensor, in [`Network::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients(net.params().into_iter().map(|p| Tensor::zeros(p.shape())).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().for_each(|g| g.scale(k));
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }
}

/// An ordered stack of layers with their parameters.
///
/// `predict` is read-only and safe to share across threads. `forward` /
/// `backward` keep the last training trace inside the network; the
/// `*_trace` variants are the pure equivalents used for batch training.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    topology: Topology,
    mode: Mode,
    dropout_rng: Rng,
    trace: Option<Trace>,
}

impl Network {
    /// Builds and Glorot-initializes a network for `input_shape`.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            bail!(Dimension, "invalid input shape {:?}", input_shape);
        }
        let mut rng = Rng::stream(seed, &[streams::INIT]);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let (layer, out) = Layer::build(spec, &shape, &mut rng)?;
            layers.push(layer);
            shape = out;
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            topology: Topology::Cnn,
            mode: Mode::Train,
            dropout_rng: Rng::stream(seed, &[streams::DROPOUT]),
            trace: None,
        })
    }

    /// Assembles a network from prebuilt layers, validating that shapes
    /// compose for `input_shape`.
    pub fn from_layers(
        input_shape: &[usize],
        layers: Vec<Layer>,
        topology: Topology,
    ) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if topology == Topology::Fcn && input_shape.len() != 3 {
            bail!(Dimension, "fully convolutional networks take (rows, cols, channels)");
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            topology,
            mode: Mode::Eval,
            dropout_rng: Rng::stream(0, &[streams::DROPOUT]),
            trace: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.trace = None;
    }

    /// Reseeds the stream used by stateful training `forward` calls.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = Rng::stream(seed, &[streams::DROPOUT]);
    }

    /// Turns every dropout layer on or off (off = identity in both modes).
    pub fn set_dropout_active(&mut self, active: bool) {
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                d.active = active;
            }
        }
    }

    pub fn has_active_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Dropout(d) if d.active && d.rate > 0.0))
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        self.output_shape_for(&self.input_shape)
    }

    pub fn output_shape_for(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(shape)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .filter_map(Layer::params_mut)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let ok = match self.topology {
            Topology::Cnn => x.shape() == self.input_shape.as_slice(),
            Topology::Fcn => {
                x.rank() == 3
                    && x.shape()[2] == self.input_shape[2]
                    && x.shape()[0] >= self.input_shape[0]
                    && x.shape()[1] >= self.input_shape[1]
            }
        };
        if !ok {
            if self.topology == Topology::Fcn && x.rank() == 3 && x.shape()[2] == self.input_shape[2]
            {
                bail!(
                    Range,
                    "input {:?} smaller than the {}x{} window",
                    x.shape(),
                    self.input_shape[0],
                    self.input_shape[1]
                );
            }
            bail!(
                Dimension,
                "network expects input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            );
        }
        Ok(())
    }

    /// Inference: dropout is the identity, nothing is cached.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut y = x.clone();
        for layer in &self.layers {
            y = layer.forward(y, None)?.0;
        }
        debug_assert!(y.is_finite(), "non-finite activations");
        Ok(y)
    }

    /// Training forward pass with dropout drawn from `rng`.
    pub fn forward_trace(&self, x: &Tensor, rng: &mut Rng) -> Result<(Tensor, Trace)> {
        self.check_input(x)?;
        let mut y = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(y, Some(rng))?;
            caches.push(cache.expect("training forward caches"));
            y = out;
        }
        debug_assert!(y.is_finite(), "non-finite activations");
        let output_shape = y.shape().to_vec();
        Ok((y, Trace { caches, output_shape }))
    }

    /// Gradients of all parameters given dL/d(output).
    pub fn backward_trace(&self, trace: &Trace, loss_grad: &Tensor) -> Result<Gradients> {
        if loss_grad.shape() != trace.output_shape.as_slice() {
            bail!(
                Dimension,
                "loss gradient {:?} does not match output {:?}",
                loss_grad.shape(),
                trace.output_shape
            );
        }
        if trace.caches.len() != self.layers.len() {
            bail!(State, "trace was recorded on a different network");
        }
        let first_param = self.layers.iter().position(|l| l.params().is_some());
        let mut grads: Vec<Tensor> = Vec::new();
        let mut dy = loss_grad.clone();
        for (idx, (layer, cache)) in self.layers.iter().zip(&trace.caches).enumerate().rev() {
            let need_dx = first_param.is_some_and(|f| idx > f);
            let (dx, pg) = layer.backward(cache, dy, need_dx)?;
            if let Some((dw, db)) = pg {
                grads.push(db);
                grads.push(dw);
            }
            match dx {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        grads.reverse();
        debug_assert!(grads.iter().all(Tensor::is_finite), "non-finite gradients");
        Ok(Gradients(grads))
    }

    /// Mode-aware forward. In train mode the trace is kept for [`backward`].
    ///
    /// [`backward`]: Network::backward
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self.mode {
            Mode::Eval => {
                self.trace = None;
                self.predict(x)
            }
            Mode::Train => {
                let mut rng = self.dropout_rng.clone();
                let (y, trace) = self.forward_trace(x, &mut rng)?;
                self.dropout_rng = rng;
                self.trace = Some(trace);
                Ok(y)
            }
        }
    }

    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<Gradients> {
        let Some(trace) = self.trace.take() else {
            bail!(State, "backward called without a preceding train-mode forward");
        };
        let grads = self.backward_trace(&trace, loss_grad);
        self.trace = Some(trace);
        grads
    }

    /// All parameters concatenated in canonical order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = vec![];
        for p in self.params() {
            out.extend_from_slice(p.data());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn small_net() -> Network {
        Network::new(
            &[6, 6, 2],
            &[
                LayerSpec::Conv2D { filters: 3, kernel: (3, 3), activation: Activation::Relu },
                LayerSpec::MaxPool2D { pool: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 4, activation: Activation::Linear },
                LayerSpec::Softmax,
            ],
            9,
        )
        .unwrap()
    }

    #[test]
    fn shapes_compose() {
        let net = small_net();
        assert_eq!(net.output_shape().unwrap(), vec![4]);
        assert_eq!(net.param_count(), 3 * 3 * 2 * 3 + 3 + 12 * 4 + 4);
    }

    #[test]
    fn wrong_input_shape_is_dimension_error() {
        let net = small_net();
        let err = net.predict(&Tensor::zeros(&[6, 5, 2])).unwrap_err();
        assert!(matches!(err, crate::Error::Dimension(_)));
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut net = small_net();
        let err = net.backward(&Tensor::zeros(&[4])).unwrap_err();
        assert!(matches!(err, crate::Error::State(_)));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let mut net = small_net();
        let x = Tensor::filled(&[6, 6, 2], 0.3);
        net.forward(&x).unwrap();
        let g = net.backward(&Tensor::zeros(&[4])).unwrap();
        assert_eq!(g.0.len(), 4);
        assert!(g.0.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dense_identity_weight_gradient_equals_input() {
        // y = w * x with w = 1, loss = y  =>  dL/dw = x
        let mut net = Network::new(
            &[1],
            &[LayerSpec::Dense { units: 1, activation: Activation::Linear }],
            0,
        )
        .unwrap();
        net.params_mut()[0].data_mut()[0] = 1.0;
        let x = Tensor::from_vec(&[1], vec![2.5]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[2.5]);
        let g = net.backward(&Tensor::filled(&[1], 1.0)).unwrap();
        assert_eq!(g.0[0].data(), &[2.5]);
        assert_eq!(g.0[1].data(), &[1.0]);
    }

    #[test]
    fn eval_mode_dropout_is_identity() {
        let mut net = Network::new(&[8], &[LayerSpec::Dropout { rate: 0.5 }], 1).unwrap();
        let x = Tensor::filled(&[8], 1.0);
        net.set_mode(Mode::Eval);
        assert_eq!(net.forward(&x).unwrap(), x);
        net.set_mode(Mode::Train);
        let y = net.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
