//! End-to-end orchestration: scenes -> crops -> detector -> bitmaps ->
//! Stage 2, plus the evaluation helpers built on them.

use std::time::Instant;

use rayon::prelude::*;
use visbeam_core::codebook::BeamPair;
use visbeam_core::crops::{balance_and_split, dedup_crops, label_image, CropGrid, LabeledCrop, Splits};
use visbeam_core::detector::{bitmap_topk, heatmap, train_stage1, BitMap, HeatMap, Stage1Outcome};
use visbeam_core::fcn::{convert_cnn_to_fcn, fcn_heatmap, output_stride};
use visbeam_core::labeler::{build_label_table, LabelTable, SnrTable};
use visbeam_core::metrics::{extract_boxes, ground_truth_rect, iou};
use visbeam_core::nn::{Mode, Network, Topology};
use visbeam_core::scene::{render_scene, slider_band, Camera, Case, Device, Image, LinkBudget, MarkerBox};
use visbeam_core::stage2::{predict_pair, stack_bitmaps, train_stage2, Stage2Outcome, Stage2Sample};
use visbeam_core::Tensor;

use crate::config::{DetectorMode, RunConfig};
use crate::error::{Error, Result};

pub fn render(cfg: &RunConfig, camera: Camera, case: Case, light: f64) -> Result<(Image, Vec<MarkerBox>)> {
    Ok(render_scene(&cfg.scene(camera), case, light)?)
}

/// Both cameras, all cases, at neutral light; identical crops collapsed.
pub fn stage1_crops(cfg: &RunConfig) -> Result<Vec<LabeledCrop>> {
    let jobs: Vec<(Camera, Case)> =
        [Camera::One, Camera::Two].into_iter().flat_map(|cam| Case::all().map(move |c| (cam, c))).collect();
    let per_image: Vec<Vec<LabeledCrop>> = jobs
        .par_iter()
        .map(|&(cam, case)| {
            let (img, boxes) = render(cfg, cam, case, 1.0)?;
            let img = img.into_tensor();
            let grid = CropGrid::for_image(&img, cfg.window, cfg.stride)?;
            let id = (cam.id() as u32 - 1) * 25 + case.index() as u32;
            Ok(label_image(&img, &grid, &boxes, id)?)
        })
        .collect::<Result<_>>()?;
    Ok(dedup_crops(per_image.into_iter().flatten().collect()))
}

pub fn stage1_splits(cfg: &RunConfig) -> Result<Splits> {
    Ok(balance_and_split(stage1_crops(cfg)?, cfg.seed, (cfg.light_min, cfg.light_max))?)
}

pub fn train_detector(cfg: &RunConfig, splits: &Splits) -> Result<Stage1Outcome> {
    Ok(train_stage1(splits, &cfg.stage1.train_config(), cfg.seed)?)
}

/// Stage-1 classifier plus, in FCN mode, its converted form.
#[derive(Debug, Clone)]
pub struct Detector {
    pub cnn: Network,
    pub fcn: Option<Network>,
    pub mode: DetectorMode,
    pub stride: usize,
}

impl Detector {
    pub fn new(mut cnn: Network, mode: DetectorMode, stride: usize) -> Result<Self> {
        if cnn.topology() != Topology::Cnn {
            return Err(Error::Config("detector weights must be the per-crop network".into()));
        }
        cnn.set_mode(Mode::Eval);
        let fcn = match mode {
            DetectorMode::PerCrop => None,
            DetectorMode::Fcn => Some(convert_cnn_to_fcn(&cnn)?),
        };
        Ok(Detector { cnn, fcn, mode, stride })
    }

    /// Uses an already converted network for FCN mode.
    pub fn with_fcn(mut cnn: Network, fcn: Network) -> Result<Self> {
        if fcn.topology() != Topology::Fcn {
            return Err(Error::Config("expected FCN-flagged weights".into()));
        }
        cnn.set_mode(Mode::Eval);
        let stride = output_stride(&fcn);
        Ok(Detector { cnn, fcn: Some(fcn), mode: DetectorMode::Fcn, stride })
    }

    pub fn window(&self) -> usize {
        self.cnn.input_shape()[0]
    }

    pub fn grid(&self, rows: usize, cols: usize) -> Result<CropGrid> {
        let stride = match &self.fcn {
            Some(f) if self.mode == DetectorMode::Fcn => output_stride(f),
            _ => self.stride,
        };
        Ok(CropGrid::new(rows, cols, self.window(), stride)?)
    }

    pub fn heatmap(&self, img: &Tensor) -> Result<HeatMap> {
        match (&self.fcn, self.mode) {
            (Some(f), DetectorMode::Fcn) => Ok(fcn_heatmap(f, img)?),
            _ => {
                let grid = self.grid(img.shape()[0], img.shape()[1])?;
                Ok(heatmap(img, &self.cnn, &grid)?)
            }
        }
    }

    pub fn bitmap(&self, img: &Tensor, k: usize) -> Result<BitMap> {
        Ok(bitmap_topk(&self.heatmap(img)?, k)?)
    }
}

pub fn snr_table(cfg: &RunConfig) -> Result<SnrTable> {
    Ok(SnrTable::from_oracle(&cfg.scene(Camera::One), &LinkBudget::default(), cfg.samples_per_pair, cfg.seed)?)
}

pub fn label_table(cfg: &RunConfig) -> Result<LabelTable> {
    Ok(build_label_table(&snr_table(cfg)?)?)
}

/// Bitmaps of one camera for every (case, light level), case-major.
pub fn camera_bitmaps(cfg: &RunConfig, det: &Detector, camera: Camera) -> Result<Vec<BitMap>> {
    let levels = cfg.light_factors()?;
    let k = cfg.top_k()?;
    let jobs: Vec<(Case, f64)> = Case::all().flat_map(|c| levels.iter().map(move |&l| (c, l))).collect();
    jobs.par_iter()
        .map(|&(case, light)| {
            let (img, _) = render(cfg, camera, case, light)?;
            det.bitmap(img.as_tensor(), k)
        })
        .collect()
}

/// Stage-2 samples from per-camera bitmaps (in stacking order).
pub fn stage2_samples(cfg: &RunConfig, per_camera: &[&[BitMap]], labels: &LabelTable) -> Result<Vec<Stage2Sample>> {
    let levels = cfg.light_levels;
    let mut out = Vec::with_capacity(25 * levels);
    for case in Case::all() {
        let pair = labels.label(case)?;
        for level in 1..=levels {
            let idx = case.index() * levels + level - 1;
            let maps: Vec<BitMap> = per_camera
                .iter()
                .map(|m| m.get(idx).cloned().ok_or_else(|| Error::Config("bitmap set is incomplete".into())))
                .collect::<Result<_>>()?;
            out.push(Stage2Sample { case, light_level: level, bitmap: stack_bitmaps(&maps)?, pair });
        }
    }
    Ok(out)
}

pub fn train_predictor(cfg: &RunConfig, samples: Vec<Stage2Sample>) -> Result<Stage2Outcome> {
    Ok(train_stage2(samples, &cfg.stage2.train_config(), cfg.seed)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pair: BeamPair,
    pub confidence: f64,
    pub stage1_ms: f64,
    pub stage2_ms: f64,
}

impl Prediction {
    pub fn total_ms(&self) -> f64 {
        self.stage1_ms + self.stage2_ms
    }
}

/// One image per camera, in the order the Stage-2 network was trained on.
pub fn predict(det: &Detector, stage2: &Network, images: &[Tensor], k: usize) -> Result<Prediction> {
    let t0 = Instant::now();
    let maps: Vec<BitMap> = images.iter().map(|img| det.bitmap(img, k)).collect::<Result<_>>()?;
    let stacked = stack_bitmaps(&maps)?;
    let t1 = Instant::now();
    let (pair, confidence) = predict_pair(stage2, &stacked)?;
    let t2 = Instant::now();
    Ok(Prediction {
        pair,
        confidence,
        stage1_ms: (t1 - t0).as_secs_f64() * 1e3,
        stage2_ms: (t2 - t1).as_secs_f64() * 1e3,
    })
}

/// IoU of the extracted transmitter / receiver boxes against ground truth.
pub fn detection_iou(cfg: &RunConfig, det: &Detector, camera: Camera, case: Case, light: f64) -> Result<(f64, f64)> {
    let (img, boxes) = render(cfg, camera, case, light)?;
    let grid = det.grid(cfg.rows, cfg.cols)?;
    let bm = det.bitmap(img.as_tensor(), cfg.top_k()?)?;
    let scene = cfg.scene(camera);
    let (tx, rx) = extract_boxes(&bm, &grid, &slider_band(&scene, Device::Transmitter))?;
    let gt_tx = ground_truth_rect(&grid, &boxes[0].rect())?;
    let gt_rx = ground_truth_rect(&grid, &boxes[1].rect())?;
    Ok((iou(&tx, &gt_tx), iou(&rx, &gt_rx)))
}
