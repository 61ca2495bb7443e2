//! Wall-clock timing of the inference path.

use std::time::Instant;

use visbeam_core::metrics::TimingStats;
use visbeam_core::nn::Network;
use visbeam_core::stage2::{predict_pair, stack_bitmaps};
use visbeam_core::Tensor;

use crate::error::{Error, Result};
use crate::pipeline::Detector;

pub const WARMUP_PASSES: usize = 3;
pub const MIN_REPEATS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct StageTimings {
    /// Heatmap + top-K for all cameras of one prediction.
    pub stage1: TimingStats,
    pub stage2: Option<TimingStats>,
    pub total: TimingStats,
}

/// Times `repeats` passes over `inputs` (one image per camera for each
/// prediction) after three warm-up passes. Every sample is the mean
/// per-prediction time of one pass. Runs on the calling thread.
pub fn bench_inference(
    det: &Detector,
    stage2: Option<&Network>,
    inputs: &[Vec<Tensor>],
    k: usize,
    repeats: usize,
) -> Result<StageTimings> {
    if repeats < MIN_REPEATS {
        return Err(Error::Config(format!("repeats must be at least {MIN_REPEATS}")));
    }
    if inputs.is_empty() || inputs.iter().any(Vec::is_empty) {
        return Err(Error::Config("nothing to benchmark".into()));
    }
    let mut s1 = Vec::with_capacity(repeats);
    let mut s2 = Vec::with_capacity(repeats);
    let mut tot = Vec::with_capacity(repeats);
    for pass in 0..WARMUP_PASSES + repeats {
        let (mut a, mut b) = (0.0, 0.0);
        for images in inputs {
            let t0 = Instant::now();
            let maps = images.iter().map(|img| det.bitmap(img, k)).collect::<Result<Vec<_>>>()?;
            let t1 = Instant::now();
            if let Some(net) = stage2 {
                std::hint::black_box(predict_pair(net, &stack_bitmaps(&maps)?)?);
            } else {
                std::hint::black_box(&maps);
            }
            let t2 = Instant::now();
            a += (t1 - t0).as_secs_f64() * 1e3;
            b += (t2 - t1).as_secs_f64() * 1e3;
        }
        if pass >= WARMUP_PASSES {
            let n = inputs.len() as f64;
            s1.push(a / n);
            s2.push(b / n);
            tot.push((a + b) / n);
        }
    }
    Ok(StageTimings {
        stage1: TimingStats::from_samples(s1)?,
        stage2: match stage2 {
            Some(_) => Some(TimingStats::from_samples(s2)?),
            None => None,
        },
        total: TimingStats::from_samples(tot)?,
    })
}

/// Per-crop and FCN timings of the same detector over the same images.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub per_crop: StageTimings,
    pub fcn: StageTimings,
    pub threads: usize,
}

impl ModeComparison {
    /// Mean per-crop time over mean FCN time.
    pub fn speedup(&self) -> f64 {
        self.per_crop.total.mean_ms / self.fcn.total.mean_ms
    }
}

/// Heatmap-only comparison of the two detector modes.
pub fn compare_modes(cnn: &Network, stride: usize, images: &[Tensor], repeats: usize) -> Result<ModeComparison> {
    let per_crop = Detector::new(cnn.clone(), crate::DetectorMode::PerCrop, stride)?;
    let fcn = Detector::new(cnn.clone(), crate::DetectorMode::Fcn, stride)?;
    let inputs: Vec<Vec<Tensor>> = images.iter().map(|i| vec![i.clone()]).collect();
    let time = |det: &Detector| -> Result<StageTimings> {
        let rows = images[0].shape()[0];
        let cols = images[0].shape()[1];
        let k = det.grid(rows, cols)?.total().min(8);
        bench_inference(det, None, &inputs, k, repeats)
    };
    Ok(ModeComparison { per_crop: time(&per_crop)?, fcn: time(&fcn)?, threads: 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use visbeam_core::detector::build_stage1;

    #[test]
    fn records_requested_samples() {
        let det = Detector::new(build_stage1(12, 1).unwrap(), crate::DetectorMode::Fcn, 5).unwrap();
        let img = Tensor::filled(&[30, 40, 3], 0.5);
        let t = bench_inference(&det, None, &[vec![img.clone()]], 4, 10).unwrap();
        assert_eq!(t.total.samples_ms.len(), 10);
        assert!(t.stage2.is_none());
        assert!(bench_inference(&det, None, &[vec![img]], 4, 9).is_err());
    }
}
