//! Stage 1: the antenna/background crop classifier, heatmaps and top-K
//! bitmaps.

use alloc::vec::Vec;

use crate::crops::{generate_crops, CropGrid, LabeledCrop, Splits};
use crate::error::{bail, Result};
use crate::math::round;
use crate::nn::{evaluate, fit, Activation, History, LayerSpec, Mode, Network, Topology, TrainConfig};
use crate::tensor::Tensor;

/// Conv(12, 5x5) -> Dropout(.25) -> MaxPool(2) -> Flatten -> Dense(128)
/// -> Dropout(.5) -> Dense(`classes`) -> Softmax.
pub fn classifier_specs(classes: usize) -> Vec<LayerSpec> {
    alloc::vec![
        LayerSpec::Conv2D { filters: 12, kernel: (5, 5), activation: Activation::Relu },
        LayerSpec::Dropout { rate: 0.25 },
        LayerSpec::MaxPool2D { pool: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 128, activation: Activation::Relu },
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Dense { units: classes, activation: Activation::Linear },
        LayerSpec::Softmax,
    ]
}

pub fn build_stage1(window: usize, seed: u64) -> Result<Network> {
    Network::new(&[window, window, 3], &classifier_specs(2), seed)
}

/// Training schedule for the detector: early stopping with patience 3,
/// at most 20 epochs.
pub fn stage1_train_config() -> TrainConfig {
    TrainConfig { epochs: 20, batch_size: 256, learning_rate: 1e-3, patience: Some(3) }
}

#[derive(Debug, Clone)]
pub struct Stage1Outcome {
    pub net: Network,
    pub history: History,
    pub test_accuracy: f64,
}

pub fn train_stage1(splits: &Splits, cfg: &TrainConfig, seed: u64) -> Result<Stage1Outcome> {
    let Some(first) = splits.train.first() else {
        bail!(Argument, "stage 1 training set is empty");
    };
    let mut net = build_stage1(first.window, seed)?;
    let history = fit(&mut net, &splits.train, &splits.val, cfg, seed)?;
    let test_accuracy = accuracy(&net, &splits.test)?;
    Ok(Stage1Outcome { net, history, test_accuracy })
}

pub fn accuracy(net: &Network, crops: &[LabeledCrop]) -> Result<f64> {
    Ok(evaluate(net, crops)?.0)
}

/// Top-K default for a grid: 60 on the 148x198 grid, scaled by area
/// elsewhere, never below 8.
pub fn default_top_k(grid_cells: usize) -> usize {
    let k = round(60.0 * grid_cells as f64 / 29304.0) as usize;
    k.max(8).min(grid_cells)
}

/// Antenna probability per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub rows: usize,
    pub cols: usize,
    values: Vec<f64>,
}

impl HeatMap {
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() || values.is_empty() {
            bail!(Dimension, "heatmap {}x{} with {} values", rows, cols, values.len());
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            bail!(Range, "heatmap values must be probabilities");
        }
        Ok(HeatMap { rows, cols, values })
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.cols + b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs the classifier on every crop of `img`.
pub fn heatmap(img: &Tensor, net: &Network, grid: &CropGrid) -> Result<HeatMap> {
    if net.topology() != Topology::Cnn || net.mode() != Mode::Eval {
        bail!(Precondition, "heatmap needs a per-crop network in eval mode");
    }
    if net.input_shape() != [grid.window, grid.window, 3] {
        bail!(Dimension, "network input {:?} does not match window {}", net.input_shape(), grid.window);
    }
    let mut values = Vec::with_capacity(grid.total());
    for (_, crop) in generate_crops(img, grid)? {
        values.push(net.predict(&crop)?.data()[1]);
    }
    HeatMap::from_vec(grid.rows, grid.cols, values)
}

/// Binary grid with one or more channels, stored `rows x cols x channels`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMap {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    bits: Vec<u8>,
}

impl BitMap {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            bail!(Dimension, "empty bitmap {}x{}x{}", rows, cols, channels);
        }
        Ok(BitMap { rows, cols, channels, bits: alloc::vec![0; rows * cols * channels] })
    }

    /// Single-channel map with the given cells set.
    pub fn from_cells(rows: usize, cols: usize, cells: &[(usize, usize)]) -> Result<Self> {
        let mut m = BitMap::zeros(rows, cols, 1)?;
        for &(a, b) in cells {
            if a >= rows || b >= cols {
                bail!(Range, "cell ({}, {}) outside {}x{}", a, b, rows, cols);
            }
            m.set(a, b, 0, true);
        }
        Ok(m)
    }

    pub fn from_bits(rows: usize, cols: usize, channels: usize, bits: Vec<u8>) -> Result<Self> {
        let m = BitMap::zeros(rows, cols, channels)?;
        if bits.len() != m.bits.len() || bits.iter().any(|&b| b > 1) {
            bail!(Dimension, "expected {} bits of 0/1", m.bits.len());
        }
        Ok(BitMap { bits, ..m })
    }

    pub fn get(&self, a: usize, b: usize, ch: usize) -> bool {
        self.bits[(a * self.cols + b) * self.channels + ch] == 1
    }

    pub fn set(&mut self, a: usize, b: usize, ch: usize, on: bool) {
        self.bits[(a * self.cols + b) * self.channels + ch] = on as u8;
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count(&self, ch: usize) -> usize {
        (0..self.rows * self.cols).filter(|&k| self.bits[k * self.channels + ch] == 1).count()
    }

    /// Set cells of one channel, row-major.
    pub fn cells(&self, ch: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for a in 0..self.rows {
            for b in 0..self.cols {
                if self.get(a, b, ch) {
                    v.push((a, b));
                }
            }
        }
        v
    }

    pub fn channel(&self, ch: usize) -> Result<BitMap> {
        if ch >= self.channels {
            bail!(Range, "channel {} of {}", ch, self.channels);
        }
        let bits = (0..self.rows * self.cols).map(|k| self.bits[k * self.channels + ch]).collect();
        BitMap::from_bits(self.rows, self.cols, 1, bits)
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.bits.iter().map(|&b| b as f64).collect();
        Tensor::from_vec(&[self.rows, self.cols, self.channels], data).expect("bitmap extents")
    }
}

/// Marks the `k` most probable cells; equal probabilities go in row-major
/// order.
pub fn bitmap_topk(hm: &HeatMap, k: usize) -> Result<BitMap> {
    let n = hm.values.len();
    if k > n {
        bail!(Range, "top-{} requested from {} cells", k, n);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| hm.values[y].total_cmp(&hm.values[x]).then(x.cmp(&y)));
    let mut m = BitMap::zeros(hm.rows, hm.cols, 1)?;
    for &i in &idx[..k] {
        m.bits[i] = 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crops::{CropLabel, Splits};
    use crate::rng::Rng;

    #[test]
    fn default_k() {
        assert_eq!(default_top_k(29304), 60);
        assert_eq!(default_top_k(1064), 8);
        assert_eq!(default_top_k(6650), 14);
        assert_eq!(default_top_k(183150), 375);
    }

    #[test]
    fn topk_matches_sort_oracle() {
        let mut rng = Rng::stream(8, &[]);
        for _ in 0..10 {
            let vals: Vec<f64> = (0..28 * 38).map(|_| (rng.below(50) as f64) / 50.0).collect();
            let hm = HeatMap::from_vec(28, 38, vals.clone()).unwrap();
            let bm = bitmap_topk(&hm, 60).unwrap();
            let mut pairs: Vec<(f64, usize)> = vals.iter().copied().zip(0..).collect();
            // stable sort descending keeps row-major order among ties
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let mut want = alloc::vec![0u8; vals.len()];
            for p in &pairs[..60] {
                want[p.1] = 1;
            }
            assert_eq!(bm.bits(), want.as_slice());
            assert_eq!(bm.count(0), 60);
        }
    }

    #[test]
    fn topk_edges() {
        let hm = HeatMap::from_vec(2, 3, alloc::vec![0.1, 0.9, 0.3, 0.9, 0.0, 0.2]).unwrap();
        assert_eq!(bitmap_topk(&hm, 1).unwrap().cells(0), alloc::vec![(0, 1)]);
        assert_eq!(bitmap_topk(&hm, 6).unwrap().count(0), 6);
        assert!(bitmap_topk(&hm, 7).is_err());
    }

    fn solid(rgb: [f64; 3], label: CropLabel, k: u32, rng: &mut Rng) -> LabeledCrop {
        let mut t = Tensor::zeros(&[12, 12, 3]);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = (rgb[i % 3] + 0.05 * (rng.uniform() - 0.5)).clamp(0.0, 1.0);
        }
        LabeledCrop::new(&t, label, (0, k, 0)).unwrap()
    }

    #[test]
    fn separable_classes_learned_quickly() {
        let mut rng = Rng::stream(2, &[]);
        let mut make = |n: usize| {
            let mut v = Vec::new();
            for k in 0..n as u32 {
                v.push(solid([0.9, 0.1, 0.1], CropLabel::AntennaArray, k, &mut rng));
                v.push(solid([0.5, 0.5, 0.5], CropLabel::Background, k, &mut rng));
            }
            v
        };
        let splits = Splits { train: make(200), val: make(20), test: make(20) };
        let cfg = TrainConfig { epochs: 2, batch_size: 16, ..TrainConfig::default() };
        let out = train_stage1(&splits, &cfg, 1).unwrap();
        assert_eq!(out.test_accuracy, 1.0);
        let again = train_stage1(&splits, &cfg, 1).unwrap();
        assert_eq!(out.history, again.history);
    }
}
