use alloc::vec::Vec;

use super::layout::{body_rect, marker_rect, obstacle_rect, rail_rect, PixelRect};
use super::{Camera, Case, Device, MarkerBox, Obstacle, SceneConfig};
use crate::error::{bail, Result};
use crate::tensor::Tensor;

pub const MIN_LIGHT: f64 = 0.4;
pub const MAX_LIGHT: f64 = 1.6;

/// RGB image, row-major `rows x cols x 3`, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Tensor,
}

impl Image {
    pub fn filled(rows: usize, cols: usize, rgb: [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols * 3);
        for _ in 0..rows * cols {
            data.extend_from_slice(&rgb);
        }
        Self::from_tensor(Tensor::from_vec(&[rows, cols, 3], data)?)
    }

    /// Takes ownership of a `rows x cols x 3` tensor, clamping into [0, 1].
    pub fn from_tensor(mut t: Tensor) -> Result<Self> {
        if t.rank() != 3 || t.shape()[2] != 3 {
            bail!(Dimension, "image tensor must be rows x cols x 3, got {:?}", t.shape());
        }
        if !t.is_finite() {
            bail!(NonFinite, "image contains non-finite values");
        }
        for v in t.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Image { pixels: t })
    }

    pub fn rows(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let k = (row * self.cols() + col) * 3;
        let d = self.pixels.data();
        [d[k], d[k + 1], d[k + 2]]
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.pixels
    }

    pub fn into_tensor(self) -> Tensor {
        self.pixels
    }

    fn paint(&mut self, r: &PixelRect, rgb: [f64; 3], grain: f64, salt: u64) {
        let cols = self.cols();
        let rows = self.rows();
        let d = self.pixels.data_mut();
        for y in r.top..r.bottom().min(rows) {
            for x in r.left..r.right().min(cols) {
                let n = grain * noise(y, x, salt);
                let k = (y * cols + x) * 3;
                for c in 0..3 {
                    d[k + c] = (rgb[c] + n).clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// Deterministic per-pixel texture in [-1, 1).
fn noise(y: usize, x: usize, salt: u64) -> f64 {
    let mut z = (y as u64) << 32 ^ x as u64 ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

const WALL: [f64; 3] = [0.78, 0.76, 0.72];
const FLOOR: [f64; 3] = [0.55, 0.50, 0.45];
const WINDOW: [f64; 3] = [0.62, 0.74, 0.86];
const SHELF: [f64; 3] = [0.38, 0.30, 0.25];
const RAIL_GRAY: [f64; 3] = [0.22, 0.22, 0.24];
const BODY_GRAY: [f64; 3] = [0.30, 0.30, 0.32];
const TX_RED: [f64; 3] = [0.86, 0.14, 0.12];
const RX_GREEN: [f64; 3] = [0.15, 0.78, 0.22];
const WOOD: [f64; 3] = [0.50, 0.32, 0.18];
const CARDBOX: [f64; 3] = [0.66, 0.52, 0.34];

fn scaled(cfg: &SceneConfig, t: usize, l: usize, h: usize, w: usize) -> PixelRect {
    let sy = cfg.rows as f64 / super::DESK_ROWS as f64;
    let sx = cfg.cols as f64 / super::DESK_COLS as f64;
    let r = |v: usize, s: f64| crate::math::round(v as f64 * s) as usize;
    PixelRect { top: r(t, sy), left: r(l, sx), height: r(h, sy).max(1), width: r(w, sx).max(1) }
}

fn background(cfg: &SceneConfig) -> Result<Image> {
    let mut img = Image::filled(cfg.rows, cfg.cols, WALL)?;
    let horizon = scaled(cfg, 68, 0, 82, 200);
    img.paint(&PixelRect { top: 0, left: 0, height: horizon.top, width: cfg.cols }, WALL, 0.03, 11);
    img.paint(&horizon, FLOOR, 0.04, 12);
    let (window, shelf) = match cfg.camera {
        Camera::One => ((8, 140), (15, 5)),
        Camera::Two => ((8, 10), (15, 175)),
    };
    img.paint(&scaled(cfg, window.0, window.1, 22, 45), WINDOW, 0.02, 13);
    img.paint(&scaled(cfg, shelf.0, shelf.1, 45, 20), SHELF, 0.03, 14);
    Ok(img)
}

/// Renders one case. Light is applied last, as in [`augment_light`].
pub fn render_scene(cfg: &SceneConfig, case: Case, light_factor: f64) -> Result<(Image, Vec<MarkerBox>)> {
    check_light(light_factor)?;
    let boxes = super::marker_boxes(cfg, case)?;
    let mut img = background(cfg)?;
    for (device, stop, color) in [
        (Device::Transmitter, case.i, TX_RED),
        (Device::Receiver, case.j, RX_GREEN),
    ] {
        img.paint(&rail_rect(cfg, device), RAIL_GRAY, 0.02, 20);
        img.paint(&body_rect(cfg, device, stop), BODY_GRAY, 0.02, 21);
        img.paint(&marker_rect(cfg, device, stop), color, 0.02, 22 + stop as u64);
    }
    if let Some(r) = obstacle_rect(cfg) {
        let color = match cfg.obstacle {
            Obstacle::Wood => WOOD,
            _ => CARDBOX,
        };
        img.paint(&r, color, 0.03, 30);
    }
    let img = if light_factor == 1.0 { img } else { augment_light(&img, light_factor)? };
    Ok((img, boxes))
}

fn check_light(factor: f64) -> Result<()> {
    if !(MIN_LIGHT..=MAX_LIGHT).contains(&factor) {
        bail!(Range, "light factor {} outside [{}, {}]", factor, MIN_LIGHT, MAX_LIGHT);
    }
    Ok(())
}

/// Scales every channel by `factor` and clamps to [0, 1].
pub fn augment_light(img: &Image, factor: f64) -> Result<Image> {
    check_light(factor)?;
    let mut t = img.pixels.clone();
    for v in t.data_mut() {
        *v = (*v * factor).clamp(0.0, 1.0);
    }
    Ok(Image { pixels: t })
}

/// `n` factors evenly spaced over `[lo, hi]`, endpoints included.
pub fn light_levels(n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if n == 0 {
        bail!(Argument, "need at least one light level");
    }
    check_light(lo)?;
    check_light(hi)?;
    if n == 1 {
        return Ok(alloc::vec![lo]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|k| if k == n - 1 { hi } else { lo + k as f64 * step }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let cfg = SceneConfig::desk(Camera::Two, Obstacle::Wood);
        let c = Case::new(2, 4).unwrap();
        let (a, _) = render_scene(&cfg, c, 1.3).unwrap();
        let (b, _) = render_scene(&cfg, c, 1.3).unwrap();
        assert_eq!(a, b);
        assert!(a.as_tensor().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn markers_have_their_colors() {
        let cfg = SceneConfig::desk(Camera::One, Obstacle::Cardbox);
        let (img, boxes) = render_scene(&cfg, Case::new(1, 5).unwrap(), 1.0).unwrap();
        let tx = img.pixel(boxes[0].top + 3, boxes[0].left + 3);
        let rx = img.pixel(boxes[1].top + 3, boxes[1].left + 3);
        assert!(tx[0] > 0.8 && tx[1] < 0.2);
        assert!(rx[1] > 0.7 && rx[0] < 0.2);
    }

    #[test]
    fn occluded_marker_is_invisible() {
        let cfg = SceneConfig::desk(Camera::Two, Obstacle::Cardbox);
        let (img, boxes) = render_scene(&cfg, Case::new(3, 1).unwrap(), 1.0).unwrap();
        assert!(boxes[0].occluded);
        let r = boxes[0].rect();
        for y in r.top..r.bottom() {
            for x in r.left..r.right() {
                let p = img.pixel(y, x);
                assert!(p[0] < 0.75 && p[1] > 0.4);
            }
        }
    }

    #[test]
    fn light_is_multiply_then_clamp() {
        let img = Image::filled(2, 3, [0.5, 0.5, 0.5]).unwrap();
        assert_eq!(augment_light(&img, 1.0).unwrap(), img);
        let dark = augment_light(&img, 0.4).unwrap();
        assert!(dark.as_tensor().data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let bright = augment_light(&Image::filled(1, 1, [0.9, 0.1, 0.7]).unwrap(), 1.6).unwrap();
        assert_eq!(bright.pixel(0, 0)[0], 1.0);
        assert!(augment_light(&img, 0.0).is_err());
        assert!(augment_light(&img, 1.61).is_err());
    }

    #[test]
    fn fifty_level_schedule() {
        let l = light_levels(50, MIN_LIGHT, MAX_LIGHT).unwrap();
        assert_eq!(l.len(), 50);
        assert_eq!(l[0], 0.4);
        assert_eq!(l[49], 1.6);
        assert!((l[24] - (0.4 + 24.0 * 1.2 / 49.0)).abs() < 1e-12);
        assert!((l[24] - 0.9878).abs() < 1e-4);
    }
}
