//! Run configuration: JSON on disk, validated on load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use visbeam_core::crops::{crop_count, DEFAULT_STRIDE, DEFAULT_WINDOW};
use visbeam_core::detector::default_top_k;
use visbeam_core::nn::TrainConfig;
use visbeam_core::scene::{Camera, Obstacle, SceneConfig, MAX_LIGHT, MIN_LIGHT, PAPER_COLS, PAPER_ROWS};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    None,
    Wood,
    Cardbox,
}

impl From<ObstacleKind> for Obstacle {
    fn from(k: ObstacleKind) -> Obstacle {
        match k {
            ObstacleKind::None => Obstacle::None,
            ObstacleKind::Wood => Obstacle::Wood,
            ObstacleKind::Cardbox => Obstacle::Cardbox,
        }
    }
}

impl From<Obstacle> for ObstacleKind {
    fn from(o: Obstacle) -> ObstacleKind {
        match o {
            Obstacle::None => ObstacleKind::None,
            Obstacle::Wood => ObstacleKind::Wood,
            Obstacle::Cardbox => ObstacleKind::Cardbox,
        }
    }
}

/// How the detector turns an image into a heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorMode {
    /// Classifier on every window of the stride-`S` grid.
    PerCrop,
    /// One pass of the converted network; stride-2 grid.
    Fcn,
}

impl std::str::FromStr for DetectorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-crop" => Ok(DetectorMode::PerCrop),
            "fcn" => Ok(DetectorMode::Fcn),
            _ => Err(Error::Config(format!("mode must be per-crop or fcn, got '{s}'"))),
        }
    }
}

impl DetectorMode {
    pub fn name(self) -> &'static str {
        match self {
            DetectorMode::PerCrop => "per-crop",
            DetectorMode::Fcn => "fcn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Early-stopping patience in epochs; absent = fixed epoch count.
    pub patience: Option<usize>,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { epochs: 10, batch_size: 256, learning_rate: 1e-3, patience: None }
    }
}

impl Hyper {
    pub fn stage1() -> Self {
        Hyper { epochs: 20, patience: Some(3), ..Default::default() }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience: self.patience,
        }
    }
}

fn default_stage1() -> Hyper {
    Hyper::stage1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// 750x1000 images (top-K then defaults to 60).
    pub paper_scale: bool,
    pub rows: usize,
    pub cols: usize,
    pub window: usize,
    pub stride: usize,
    /// Bitmap cells per camera; derived from the grid size when absent.
    pub top_k: Option<usize>,
    pub light_levels: usize,
    pub light_min: f64,
    pub light_max: f64,
    pub obstacle: ObstacleKind,
    /// Camera ids stacked (in this order) into the Stage-2 input.
    pub cameras: Vec<u8>,
    pub samples_per_pair: usize,
    pub mode: DetectorMode,
    #[serde(default = "default_stage1")]
    pub stage1: Hyper,
    pub stage2: Hyper,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            paper_scale: false,
            rows: 150,
            cols: 200,
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            top_k: None,
            light_levels: 50,
            light_min: MIN_LIGHT,
            light_max: MAX_LIGHT,
            obstacle: ObstacleKind::Cardbox,
            cameras: vec![1],
            samples_per_pair: 50,
            mode: DetectorMode::PerCrop,
            stage1: Hyper::stage1(),
            stage2: Hyper::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.normalized()
    }

    /// Applies `paper_scale` and validates.
    pub fn normalized(mut self) -> Result<Self> {
        if self.paper_scale {
            self.rows = PAPER_ROWS;
            self.cols = PAPER_COLS;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window == 0 || self.stride == 0 {
            return bad("window and stride must be positive".into());
        }
        if self.rows < 5 * self.window || self.cols < 5 * self.window {
            return bad(format!("image {}x{} must hold five {}-pixel windows per axis", self.rows, self.cols, self.window));
        }
        if self.light_levels == 0 {
            return bad("light_levels must be at least 1".into());
        }
        if !(MIN_LIGHT..=MAX_LIGHT).contains(&self.light_min)
            || !(MIN_LIGHT..=MAX_LIGHT).contains(&self.light_max)
            || self.light_min > self.light_max
        {
            return bad(format!("light range must lie in [{MIN_LIGHT}, {MAX_LIGHT}]"));
        }
        if self.cameras.is_empty() || self.cameras.len() > 8 {
            return bad("cameras must list 1 to 8 camera ids".into());
        }
        for &c in &self.cameras {
            Camera::from_id(c).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.samples_per_pair == 0 {
            return bad("samples_per_pair must be at least 1".into());
        }
        for (name, h) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if h.epochs == 0 || h.batch_size == 0 || !(h.learning_rate > 0.0 && h.learning_rate.is_finite()) {
                return bad(format!("{name}: epochs, batch_size and learning_rate must be positive"));
            }
        }
        if let Some(k) = self.top_k {
            let cells = self.grid_cells()?;
            if k == 0 || k > cells {
                return bad(format!("top_k {k} outside 1..={cells}"));
            }
        }
        Ok(())
    }

    pub fn scene(&self, camera: Camera) -> SceneConfig {
        SceneConfig { rows: self.rows, cols: self.cols, camera, obstacle: self.obstacle.into(), ..Default::default() }
    }

    pub fn camera_list(&self) -> Result<Vec<Camera>> {
        self.cameras
            .iter()
            .map(|&c| Camera::from_id(c).map_err(|e| Error::Config(e.to_string())))
            .collect()
    }

    /// Cells in the bitmap grid of the configured mode.
    pub fn grid_cells(&self) -> Result<usize> {
        let stride = match self.mode {
            DetectorMode::PerCrop => self.stride,
            DetectorMode::Fcn => 2,
        };
        let (_, _, n) = crop_count(self.rows, self.cols, self.window, stride)?;
        Ok(n)
    }

    pub fn top_k(&self) -> Result<usize> {
        match self.top_k {
            Some(k) => Ok(k),
            None => Ok(default_top_k(self.grid_cells()?)),
        }
    }

    pub fn light_factors(&self) -> Result<Vec<f64>> {
        Ok(visbeam_core::scene::light_levels(self.light_levels, self.light_min, self.light_max)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default().normalized().unwrap();
        assert_eq!(c.top_k().unwrap(), 8);
        assert_eq!(c.stage1.patience, Some(3));
        assert_eq!(c.stage2.batch_size, 256);
    }

    #[test]
    fn paper_scale_overrides_extents() {
        let c = RunConfig { paper_scale: true, ..Default::default() }.normalized().unwrap();
        assert_eq!((c.rows, c.cols), (750, 1000));
        assert_eq!(c.top_k().unwrap(), 60);
        let f = RunConfig { paper_scale: true, mode: DetectorMode::Fcn, ..Default::default() }.normalized().unwrap();
        assert_eq!(f.top_k().unwrap(), 375);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let c = RunConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"obstacle": "wood", "mode": "fcn"}"#).unwrap();
        assert_eq!(partial.obstacle, ObstacleKind::Wood);
        assert_eq!(partial.stage1, Hyper::stage1());
    }

    #[test]
    fn validation_failures() {
        for c in [
            RunConfig { rows: 40, ..Default::default() },
            RunConfig { light_min: 0.1, ..Default::default() },
            RunConfig { cameras: vec![3], ..Default::default() },
            RunConfig { top_k: Some(5000), ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }
}
