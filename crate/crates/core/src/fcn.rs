//! Conversion of the crop classifier into a fully convolutional network,
//! single-pass dense inference, and the equivalence check between the two.

use alloc::vec::Vec;

use crate::crops::CropGrid;
use crate::detector::HeatMap;
use crate::error::{bail, Result};
use crate::nn::{Conv2D, Layer, Mode, Network, Topology};
use crate::rng::{streams, Rng};
use crate::tensor::Tensor;

/// Rewrites `net` so it slides over images of any size.
///
/// Layers before the single `Flatten` are kept. The first `Dense` after it
/// becomes a convolution whose kernel spans the whole pre-flatten map, with
/// the dense weight rows read back in the row-major (row, col, channel)
/// order `Flatten` produced; later `Dense` layers become 1x1 convolutions.
/// Dropout is dropped.
pub fn convert_cnn_to_fcn(net: &Network) -> Result<Network> {
    if net.topology() != Topology::Cnn {
        bail!(Conversion, "network is already fully convolutional");
    }
    let layers = net.layers();
    let flattens: Vec<usize> =
        layers.iter().enumerate().filter(|(_, l)| matches!(l, Layer::Flatten)).map(|(i, _)| i).collect();
    let [split] = flattens[..] else {
        bail!(Conversion, "expected exactly one Flatten, found {}", flattens.len());
    };
    if !layers[split + 1..].iter().any(|l| matches!(l, Layer::Dense(_))) {
        bail!(Conversion, "Flatten is not followed by a Dense layer");
    }

    let mut out: Vec<Layer> = Vec::with_capacity(layers.len());
    let mut shape = net.input_shape().to_vec();
    for layer in &layers[..split] {
        shape = layer_output(layer, &shape)?;
        if !matches!(layer, Layer::Dropout(_)) {
            out.push(layer.clone());
        }
    }
    let [fh, fw, fd] = shape[..] else {
        bail!(Conversion, "Flatten input must be (rows, cols, channels), got {:?}", shape);
    };

    let mut first = true;
    let mut channels = fd;
    for layer in &layers[split + 1..] {
        match layer {
            Layer::Dense(d) => {
                let kernel = if first { (fh, fw) } else { (1, 1) };
                if d.inputs != kernel.0 * kernel.1 * channels {
                    bail!(Conversion, "Dense expects {} inputs, feature map provides {}", d.inputs, kernel.0 * kernel.1 * channels);
                }
                let weight = d.weight.clone().reshape(&[kernel.0, kernel.1, channels, d.units])?;
                out.push(Layer::Conv2D(Conv2D {
                    kernel,
                    in_channels: channels,
                    filters: d.units,
                    activation: d.activation,
                    weight,
                    bias: d.bias.clone(),
                }));
                channels = d.units;
                first = false;
            }
            Layer::Dropout(_) => {}
            Layer::Softmax => out.push(Layer::Softmax),
            other => bail!(Conversion, "{} after Flatten is not supported", other.kind_name()),
        }
    }
    let mut fcn = Network::from_layers(net.input_shape(), out, Topology::Fcn)?;
    fcn.set_mode(Mode::Eval);
    Ok(fcn)
}

fn layer_output(layer: &Layer, shape: &[usize]) -> Result<Vec<usize>> {
    Network::from_layers(shape, alloc::vec![layer.clone()], Topology::Cnn)?.output_shape()
}

/// Offset in pixels between neighbouring output cells.
pub fn output_stride(fcn: &Network) -> usize {
    fcn.layers()
        .iter()
        .map(|l| if let Layer::MaxPool2D { pool } = l { *pool } else { 1 })
        .product()
}

/// Grid of windows that the FCN output cells correspond to.
pub fn fcn_grid(fcn: &Network, rows: usize, cols: usize) -> Result<CropGrid> {
    CropGrid::new(rows, cols, fcn.input_shape()[0], output_stride(fcn))
}

/// One forward pass over the whole image: `(rows', cols', classes)`.
pub fn fcn_infer(fcn: &Network, img: &Tensor) -> Result<Tensor> {
    if fcn.topology() != Topology::Fcn {
        bail!(Precondition, "fcn_infer needs a converted network");
    }
    fcn.predict(img)
}

/// Antenna-class channel of the dense output.
pub fn fcn_heatmap(fcn: &Network, img: &Tensor) -> Result<HeatMap> {
    let y = fcn_infer(fcn, img)?;
    let (rows, cols, classes) = (y.shape()[0], y.shape()[1], y.shape()[2]);
    if classes < 2 {
        bail!(Dimension, "need at least two classes, got {}", classes);
    }
    let values = y.data().chunks(classes).map(|p| p[1]).collect();
    HeatMap::from_vec(rows, cols, values)
}

/// Largest difference between dense output cell `(a, b)` and the crop
/// classifier applied to the window at `(stride * a, stride * b)`.
pub fn compare_cell(cnn: &Network, dense: &Tensor, img: &Tensor, stride: usize, a: usize, b: usize) -> Result<f64> {
    let win = cnn.input_shape();
    let crop = img.window(stride * a, stride * b, win[0], win[1])?;
    let p = cnn.predict(&crop)?;
    let classes = dense.shape()[2];
    if p.len() != classes {
        bail!(Dimension, "classifier has {} outputs, dense map {}", p.len(), classes);
    }
    let cell = &dense.data()[(a * dense.shape()[1] + b) * classes..][..classes];
    Ok(p.data().iter().zip(cell).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Max abs difference over `trials` random output cells.
pub fn equivalence_check(cnn: &Network, fcn: &Network, img: &Tensor, trials: usize, seed: u64) -> Result<f64> {
    if cnn.mode() != Mode::Eval || fcn.mode() != Mode::Eval {
        bail!(Precondition, "both networks must be in eval mode");
    }
    let dense = fcn_infer(fcn, img)?;
    let stride = output_stride(fcn);
    let mut rng = Rng::stream(seed, &[streams::CHECK]);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let a = rng.below(dense.shape()[0]);
        let b = rng.below(dense.shape()[1]);
        worst = worst.max(compare_cell(cnn, &dense, img, stride, a, b)?);
    }
    Ok(worst)
}
