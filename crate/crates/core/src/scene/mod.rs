//! Synthetic stand-in for the camera/radio testbed.
//!
//! Scenes are flat colored rectangles on a textured background: two
//! sliders, the transmitter (red marker) and receiver (green marker) at
//! one of five stops each, and an optional obstacle. The SNR oracle models
//! the same room from above with a LoS ray and one bounce off each side
//! wall.

mod layout;
mod render;
mod snr;

use core::fmt;

pub use layout::{marker_boxes, obstacle_rect, slider_band, slider_midline, PixelRect};
pub use render::{augment_light, light_levels, render_scene, Image, MAX_LIGHT, MIN_LIGHT};
pub use snr::{beam_gain_db, mean_snr_db, snr_oracle, LinkBudget, Room};

use crate::error::{bail, Result};

/// Number of stops along each slider.
pub const STOPS: u8 = 5;

/// Reference frame the layout is authored in; other extents are scaled.
pub const DESK_ROWS: usize = 150;
pub const DESK_COLS: usize = 200;
pub const PAPER_ROWS: usize = 750;
pub const PAPER_COLS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Camera {
    /// Clear view of both devices.
    One,
    /// Opposite side of the room; the obstacle can hide the transmitter.
    Two,
}

impl Camera {
    pub fn id(self) -> u8 {
        match self {
            Camera::One => 1,
            Camera::Two => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Camera::One),
            2 => Ok(Camera::Two),
            _ => bail!(Range, "camera id {} (expected 1 or 2)", id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Obstacle {
    None,
    Wood,
    Cardbox,
}

impl Obstacle {
    pub fn name(self) -> &'static str {
        match self {
            Obstacle::None => "none",
            Obstacle::Wood => "wood",
            Obstacle::Cardbox => "cardbox",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Obstacle::None),
            "wood" => Ok(Obstacle::Wood),
            "cardbox" => Ok(Obstacle::Cardbox),
            _ => bail!(Argument, "unknown obstacle '{}'", s),
        }
    }

    /// Thickness along the link axis, cm.
    pub fn thickness_cm(self) -> f64 {
        match self {
            Obstacle::None => 0.0,
            Obstacle::Wood => 3.0,
            Obstacle::Cardbox => 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Device {
    Transmitter,
    Receiver,
}

/// Discrete placement: transmitter at stop `i`, receiver at stop `j`
/// (both 1-based, counted from the same wall).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Case {
    pub i: u8,
    pub j: u8,
}

impl Case {
    pub fn new(i: u8, j: u8) -> Result<Self> {
        if !(1..=STOPS).contains(&i) || !(1..=STOPS).contains(&j) {
            bail!(Range, "case ({}, {}) outside 1..={}", i, j, STOPS);
        }
        Ok(Case { i, j })
    }

    /// All 25 cases, transmitter-major.
    pub fn all() -> impl Iterator<Item = Case> {
        (1..=STOPS).flat_map(|i| (1..=STOPS).map(move |j| Case { i, j }))
    }

    pub fn mirrored(self) -> Case {
        Case { i: STOPS + 1 - self.i, j: STOPS + 1 - self.j }
    }

    /// Position of this case in [`Case::all`].
    pub fn index(self) -> usize {
        (self.i as usize - 1) * STOPS as usize + (self.j as usize - 1)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// Room, camera and image parameters. Lengths in cm.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub room_width_cm: f64,
    pub room_depth_cm: f64,
    pub slider_length_cm: f64,
    pub slider_separation_cm: f64,
    pub device_height_cm: f64,
    pub camera_height_cm: f64,
    pub fov_deg: f64,
    /// Obstacle footprint across the link axis, cm.
    pub obstacle_width_cm: f64,
    pub obstacle: Obstacle,
    pub rows: usize,
    pub cols: usize,
    pub camera: Camera,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            room_width_cm: 310.0,
            room_depth_cm: 510.0,
            slider_length_cm: 120.0,
            slider_separation_cm: 350.0,
            device_height_cm: 100.0,
            camera_height_cm: 169.0,
            fov_deg: 125.0,
            obstacle_width_cm: 33.0,
            obstacle: Obstacle::Cardbox,
            rows: DESK_ROWS,
            cols: DESK_COLS,
            camera: Camera::One,
        }
    }
}

impl SceneConfig {
    pub fn desk(camera: Camera, obstacle: Obstacle) -> Self {
        SceneConfig { camera, obstacle, ..Default::default() }
    }

    pub fn paper_scale(camera: Camera, obstacle: Obstacle) -> Self {
        SceneConfig { camera, obstacle, rows: PAPER_ROWS, cols: PAPER_COLS, ..Default::default() }
    }

    pub fn with_camera(&self, camera: Camera) -> Self {
        SceneConfig { camera, ..self.clone() }
    }

    /// Distance between consecutive stops.
    pub fn stop_spacing_cm(&self) -> f64 {
        self.slider_length_cm / STOPS as f64
    }

    /// Checks geometry and that the image holds at least five windows of
    /// extent `window` along each axis.
    pub fn validate(&self, window: usize) -> Result<()> {
        let positive = [
            self.room_width_cm,
            self.room_depth_cm,
            self.slider_length_cm,
            self.slider_separation_cm,
            self.camera_height_cm,
            self.fov_deg,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            bail!(Argument, "room, slider and camera parameters must be positive");
        }
        if self.slider_separation_cm >= self.room_depth_cm
            || self.slider_length_cm >= self.room_width_cm
        {
            bail!(Argument, "sliders do not fit in the room");
        }
        if self.rows < 5 * window || self.cols < 5 * window {
            bail!(
                Range,
                "image {}x{} smaller than 5 windows of {}",
                self.rows,
                self.cols,
                window
            );
        }
        Ok(())
    }
}

/// Ground-truth marker rectangle in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerBox {
    pub device: Device,
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    /// Fully hidden behind the obstacle in this camera.
    pub occluded: bool,
}

impl MarkerBox {
    pub fn rect(&self) -> PixelRect {
        PixelRect { top: self.top, left: self.left, height: self.height, width: self.width }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_five_distinct_cases() {
        let all: alloc::vec::Vec<Case> = Case::all().collect();
        assert_eq!(all.len(), 25);
        for (k, c) in all.iter().enumerate() {
            assert_eq!(c.index(), k);
        }
        assert!(Case::new(0, 1).is_err());
        assert!(Case::new(3, 6).is_err());
    }

    #[test]
    fn stops_are_24_cm_apart() {
        assert_eq!(SceneConfig::default().stop_spacing_cm(), 24.0);
    }

    #[test]
    fn image_must_hold_five_windows() {
        let cfg = SceneConfig { rows: 59, ..Default::default() };
        assert!(cfg.validate(12).is_err());
        assert!(SceneConfig::default().validate(12).is_ok());
    }
}
