//! Stage 2: from (stacked) detector bitmaps to the best beam pair.

use alloc::vec::Vec;

use crate::codebook::{BeamPair, N_BEAMS, N_PAIRS};
use crate::crops::split_sizes;
use crate::detector::{classifier_specs, BitMap};
use crate::error::{bail, Result};
use crate::nn::{evaluate, fit, Examples, History, Mode, Network, TrainConfig};
use crate::rng::{streams, Rng};
use crate::scene::Case;
use crate::tensor::Tensor;

/// Most bitmaps that can be stacked into one input.
pub const MAX_CHANNELS: usize = 8;

/// Class index of a pair: `(t / 2) * 13 + r / 2`.
pub fn encode_pair(p: BeamPair) -> Result<usize> {
    let p = BeamPair::new(p.t, p.r)?;
    Ok((p.t / 2) as usize * N_BEAMS + (p.r / 2) as usize)
}

pub fn decode_class(c: usize) -> Result<BeamPair> {
    if c >= N_PAIRS {
        bail!(Range, "class {} outside 0..{}", c, N_PAIRS);
    }
    BeamPair::new((c / N_BEAMS * 2) as u8, (c % N_BEAMS * 2) as u8)
}

/// Concatenates maps along the channel axis in the given order.
pub fn stack_bitmaps(maps: &[BitMap]) -> Result<BitMap> {
    let Some(first) = maps.first() else {
        bail!(Argument, "nothing to stack");
    };
    let channels: usize = maps.iter().map(|m| m.channels).sum();
    if channels > MAX_CHANNELS {
        bail!(Range, "{} channels exceed the limit of {}", channels, MAX_CHANNELS);
    }
    if maps.iter().any(|m| (m.rows, m.cols) != (first.rows, first.cols)) {
        bail!(Dimension, "bitmaps must share the grid {}x{}", first.rows, first.cols);
    }
    let mut out = BitMap::zeros(first.rows, first.cols, channels)?;
    for a in 0..first.rows {
        for b in 0..first.cols {
            let mut ch = 0;
            for m in maps {
                for k in 0..m.channels {
                    out.set(a, b, ch, m.get(a, b, k));
                    ch += 1;
                }
            }
        }
    }
    Ok(out)
}

pub fn build_stage2(rows: usize, cols: usize, channels: usize, seed: u64) -> Result<Network> {
    Network::new(&[rows, cols, channels], &classifier_specs(N_PAIRS), seed)
}

/// One training example: a bitmap and the pair it should map to.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Sample {
    pub case: Case,
    /// 1-based light level the bitmap was produced under.
    pub light_level: usize,
    pub bitmap: BitMap,
    pub pair: BeamPair,
}

impl Examples for [Stage2Sample] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn input(&self, i: usize) -> Tensor {
        self[i].bitmap.to_tensor()
    }
    fn class(&self, i: usize) -> usize {
        encode_pair(self[i].pair).expect("pairs validated on split")
    }
}

/// Seeded 70/15/15 split.
pub fn split_samples(mut samples: Vec<Stage2Sample>, seed: u64) -> Result<[Vec<Stage2Sample>; 3]> {
    for s in &samples {
        if encode_pair(s.pair).is_err() {
            bail!(Encoding, "label {} of case {} is not a codebook pair", s.pair, s.case);
        }
    }
    Rng::stream(seed, &[streams::SPLIT]).shuffle(&mut samples);
    let (n_train, n_val, _) = split_sizes(samples.len());
    let test = samples.split_off(n_train + n_val);
    let val = samples.split_off(n_train);
    Ok([samples, val, test])
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome {
    pub net: Network,
    pub history: History,
    pub test: Vec<Stage2Sample>,
    pub test_predictions: Vec<usize>,
    pub test_accuracy: f64,
}

pub fn train_stage2(samples: Vec<Stage2Sample>, cfg: &TrainConfig, seed: u64) -> Result<Stage2Outcome> {
    let Some(first) = samples.first() else {
        bail!(Argument, "stage 2 dataset is empty");
    };
    let (rows, cols, ch) = (first.bitmap.rows, first.bitmap.cols, first.bitmap.channels);
    if samples.iter().any(|s| (s.bitmap.rows, s.bitmap.cols, s.bitmap.channels) != (rows, cols, ch)) {
        bail!(Dimension, "all bitmaps must be {}x{}x{}", rows, cols, ch);
    }
    let [train, val, test] = split_samples(samples, seed)?;
    let mut net = build_stage2(rows, cols, ch, seed)?;
    let history = fit(&mut net, train.as_slice(), val.as_slice(), cfg, seed)?;
    let (test_accuracy, test_predictions) = evaluate(&net, test.as_slice())?;
    Ok(Stage2Outcome { net, history, test, test_predictions, test_accuracy })
}

/// Most probable pair and its probability; ties go to the lower class.
pub fn pair_from_probs(probs: &Tensor) -> Result<(BeamPair, f64)> {
    if probs.shape() != [N_PAIRS] {
        bail!(Dimension, "expected {} class probabilities, got {:?}", N_PAIRS, probs.shape());
    }
    let c = probs.argmax();
    Ok((decode_class(c)?, probs.data()[c]))
}

pub fn predict_pair(net: &Network, bitmap: &BitMap) -> Result<(BeamPair, f64)> {
    if net.mode() != Mode::Eval {
        bail!(Precondition, "predict_pair needs eval mode");
    }
    let want = net.input_shape();
    if want[2] != bitmap.channels {
        bail!(Dimension, "network takes {} channels, bitmap has {}", want[2], bitmap.channels);
    }
    pair_from_probs(&net.predict(&bitmap.to_tensor())?)
}
