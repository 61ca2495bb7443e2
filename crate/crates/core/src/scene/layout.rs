use alloc::vec::Vec;

use super::{Camera, Case, Device, MarkerBox, Obstacle, SceneConfig, DESK_COLS, DESK_ROWS, STOPS};
use crate::error::{bail, Result};
use crate::math::round;

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl PixelRect {
    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains_point(&self, row: usize, col: usize) -> bool {
        row >= self.top && row < self.bottom() && col >= self.left && col < self.right()
    }

    pub fn covers(&self, other: &PixelRect) -> bool {
        other.top >= self.top
            && other.left >= self.left
            && other.bottom() <= self.bottom()
            && other.right() <= self.right()
    }

    pub fn overlap(&self, other: &PixelRect) -> usize {
        let h = self.bottom().min(other.bottom()).saturating_sub(self.top.max(other.top));
        let w = self.right().min(other.right()).saturating_sub(self.left.max(other.left));
        h * w
    }

    pub fn union(&self, other: &PixelRect) -> PixelRect {
        let top = self.top.min(other.top);
        let left = self.left.min(other.left);
        PixelRect {
            top,
            left,
            height: self.bottom().max(other.bottom()) - top,
            width: self.right().max(other.right()) - left,
        }
    }
}

// Reference-frame geometry (150x200). Marker corners sit on multiples of 5.
const MARKER: usize = 7;
const BODY: usize = 3;
const RAIL: usize = 2;
const RAIL_MARGIN: usize = 6;
const STOP_PITCH: usize = 15;

struct Slider {
    top: usize,
    first_left: usize,
    /// +1 when stop 1 is on the image's left.
    rising: bool,
}

fn sliders(camera: Camera) -> (Slider, Slider) {
    match camera {
        Camera::One => (
            Slider { top: 40, first_left: 30, rising: true },
            Slider { top: 95, first_left: 110, rising: true },
        ),
        // Viewed from the far side: stop order is reversed on screen.
        Camera::Two => (
            Slider { top: 35, first_left: 165, rising: false },
            Slider { top: 100, first_left: 85, rising: false },
        ),
    }
}

fn obstacle_ref(camera: Camera) -> (usize, usize, usize, usize) {
    match camera {
        Camera::One => (58, 98, 30, 10),
        // Hides transmitter stop 3 together with its mount.
        Camera::Two => (28, 130, 40, 17),
    }
}

fn stop_left(s: &Slider, stop: u8) -> usize {
    let k = (stop - 1) as usize * STOP_PITCH;
    if s.rising {
        s.first_left + k
    } else {
        s.first_left - k
    }
}

fn scale(cfg: &SceneConfig, top: usize, left: usize, h: usize, w: usize) -> PixelRect {
    let sy = cfg.rows as f64 / DESK_ROWS as f64;
    let sx = cfg.cols as f64 / DESK_COLS as f64;
    let t = round(top as f64 * sy) as usize;
    let l = round(left as f64 * sx) as usize;
    let b = (round((top + h) as f64 * sy) as usize).max(t + 1);
    let r = (round((left + w) as f64 * sx) as usize).max(l + 1);
    PixelRect { top: t, left: l, height: b - t, width: r - l }
}

fn slider_for(cfg: &SceneConfig, device: Device) -> Slider {
    let (tx, rx) = sliders(cfg.camera);
    match device {
        Device::Transmitter => tx,
        Device::Receiver => rx,
    }
}

pub(crate) fn marker_rect(cfg: &SceneConfig, device: Device, stop: u8) -> PixelRect {
    let s = slider_for(cfg, device);
    scale(cfg, s.top, stop_left(&s, stop), MARKER, MARKER)
}

pub(crate) fn body_rect(cfg: &SceneConfig, device: Device, stop: u8) -> PixelRect {
    let s = slider_for(cfg, device);
    scale(cfg, s.top + MARKER, stop_left(&s, stop), BODY, MARKER)
}

pub(crate) fn rail_rect(cfg: &SceneConfig, device: Device) -> PixelRect {
    let s = slider_for(cfg, device);
    let a = stop_left(&s, 1);
    let b = stop_left(&s, STOPS);
    let lo = a.min(b) - RAIL_MARGIN;
    let hi = a.max(b) + MARKER + RAIL_MARGIN;
    scale(cfg, s.top + MARKER + BODY, lo, RAIL, hi - lo)
}

/// Obstacle footprint in the image, if the scene has one.
pub fn obstacle_rect(cfg: &SceneConfig) -> Option<PixelRect> {
    if cfg.obstacle == Obstacle::None {
        return None;
    }
    let (t, l, h, w) = obstacle_ref(cfg.camera);
    Some(scale(cfg, t, l, h, w))
}

/// Ground-truth boxes for a case: transmitter first, then receiver.
pub fn marker_boxes(cfg: &SceneConfig, case: Case) -> Result<Vec<MarkerBox>> {
    let case = Case::new(case.i, case.j)?;
    if cfg.rows == 0 || cfg.cols == 0 {
        bail!(Argument, "empty image extents");
    }
    let obstacle = obstacle_rect(cfg);
    let make = |device, stop| {
        let r = marker_rect(cfg, device, stop);
        MarkerBox {
            device,
            top: r.top,
            left: r.left,
            height: r.height,
            width: r.width,
            occluded: obstacle.is_some_and(|o| o.covers(&r)),
        }
    };
    Ok(alloc::vec![make(Device::Transmitter, case.i), make(Device::Receiver, case.j)])
}

/// Column of the slider's center line: midway between the centers of the
/// two end stops.
pub fn slider_midline(cfg: &SceneConfig, device: Device) -> f64 {
    let center = |stop| {
        let r = marker_rect(cfg, device, stop);
        r.left as f64 + (r.width as f64 - 1.0) / 2.0
    };
    (center(1) + center(STOPS)) / 2.0
}

/// Union of all five marker positions of one slider.
pub fn slider_band(cfg: &SceneConfig, device: Device) -> PixelRect {
    (2..=STOPS).fold(marker_rect(cfg, device, 1), |acc, s| acc.union(&marker_rect(cfg, device, s)))
}
