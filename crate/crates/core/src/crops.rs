//! Sliding-window crops, their ground-truth labels, and the balanced
//! train/validation/test split used for the detector.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::nn::Examples;
use crate::rng::{streams, Rng};
use crate::scene::{MarkerBox, PixelRect, MAX_LIGHT, MIN_LIGHT};
use crate::tensor::Tensor;

pub const DEFAULT_WINDOW: usize = 12;
pub const DEFAULT_STRIDE: usize = 5;
/// Minimum share of a crop covered by one visible marker for a positive
/// label, in percent.
pub const POSITIVE_OVERLAP_PCT: usize = 30;

/// `(rows, cols, rows * cols)` of the window grid over an `h x l` image.
pub fn crop_count(h: usize, l: usize, w: usize, s: usize) -> Result<(usize, usize, usize)> {
    if w == 0 || s == 0 {
        bail!(Range, "window and stride must be positive");
    }
    if w > h || w > l {
        bail!(Range, "window {} larger than image {}x{}", w, h, l);
    }
    let rows = (h - w) / s + 1;
    let cols = (l - w) / s + 1;
    Ok((rows, cols, rows * cols))
}

/// Window placement over one image size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropGrid {
    pub window: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
}

impl CropGrid {
    pub fn new(h: usize, l: usize, window: usize, stride: usize) -> Result<Self> {
        let (rows, cols, _) = crop_count(h, l, window, stride)?;
        Ok(CropGrid { window, stride, rows, cols })
    }

    /// Grid over a `rows x cols x C` tensor.
    pub fn for_image(img: &Tensor, window: usize, stride: usize) -> Result<Self> {
        if img.rank() != 3 {
            bail!(Dimension, "expected rows x cols x channels, got {:?}", img.shape());
        }
        Self::new(img.shape()[0], img.shape()[1], window, stride)
    }

    pub fn total(&self) -> usize {
        self.rows * self.cols
    }

    /// Pixel rectangle of cell `(a, b)`.
    pub fn window_rect(&self, a: usize, b: usize) -> PixelRect {
        PixelRect { top: a * self.stride, left: b * self.stride, height: self.window, width: self.window }
    }
}

/// Row-major crops with their grid positions.
pub fn generate_crops<'a>(
    img: &'a Tensor,
    grid: &CropGrid,
) -> Result<impl Iterator<Item = ((usize, usize), Tensor)> + 'a> {
    let g = CropGrid::for_image(img, grid.window, grid.stride)?;
    if g != *grid {
        bail!(Dimension, "grid {:?} does not belong to image {:?}", grid, img.shape());
    }
    Ok((0..g.rows).flat_map(move |a| (0..g.cols).map(move |b| (a, b))).map(move |(a, b)| {
        let r = g.window_rect(a, b);
        let crop = img.window(r.top, r.left, g.window, g.window).expect("window inside grid");
        ((a, b), crop)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CropLabel {
    Background = 0,
    AntennaArray = 1,
}

impl CropLabel {
    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(c: usize) -> Result<Self> {
        match c {
            0 => Ok(CropLabel::Background),
            1 => Ok(CropLabel::AntennaArray),
            _ => bail!(Range, "crop class {}", c),
        }
    }
}

/// Whether `marker` covers at least the positive share of cell `(a, b)`.
pub fn covers_cell(grid: &CropGrid, pos: (usize, usize), marker: &PixelRect) -> bool {
    let area = grid.window * grid.window;
    grid.window_rect(pos.0, pos.1).overlap(marker) * 100 >= POSITIVE_OVERLAP_PCT * area
}

pub fn label_crop(pos: (usize, usize), grid: &CropGrid, markers: &[MarkerBox]) -> CropLabel {
    if markers.iter().any(|m| !m.occluded && covers_cell(grid, pos, &m.rect())) {
        CropLabel::AntennaArray
    } else {
        CropLabel::Background
    }
}

/// A crop ready for training: shared source pixels plus the light factor
/// applied when it is materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCrop {
    pub pixels: Arc<[f32]>,
    pub window: usize,
    pub label: CropLabel,
    /// (image id, grid row, grid col) of the source window.
    pub origin: (u32, u32, u32),
    pub light: f64,
}

impl LabeledCrop {
    pub fn new(crop: &Tensor, label: CropLabel, origin: (u32, u32, u32)) -> Result<Self> {
        let s = crop.shape();
        if s.len() != 3 || s[0] != s[1] || s[2] != 3 {
            bail!(Dimension, "crop must be W x W x 3, got {:?}", s);
        }
        let pixels: Arc<[f32]> = crop.data().iter().map(|&v| v as f32).collect();
        Ok(LabeledCrop { pixels, window: s[0], label, origin, light: 1.0 })
    }

    /// Pixels times the light factor, clamped to [0, 1].
    pub fn tensor(&self) -> Tensor {
        let data = self.pixels.iter().map(|&v| (v as f64 * self.light).clamp(0.0, 1.0)).collect();
        Tensor::from_vec(&[self.window, self.window, 3], data).expect("crop extents")
    }

    pub fn with_light(&self, light: f64) -> Self {
        LabeledCrop { light, ..self.clone() }
    }

    fn content_key(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.label as u64;
        for v in self.pixels.iter() {
            h = (h ^ v.to_bits() as u64).wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

impl Examples for [LabeledCrop] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn input(&self, i: usize) -> Tensor {
        self[i].tensor()
    }
    fn class(&self, i: usize) -> usize {
        self[i].label.class()
    }
}

impl Examples for Vec<LabeledCrop> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn input(&self, i: usize) -> Tensor {
        self[i].tensor()
    }
    fn class(&self, i: usize) -> usize {
        self[i].label.class()
    }
}

/// Every crop of one image with its label.
pub fn label_image(img: &Tensor, grid: &CropGrid, markers: &[MarkerBox], image_id: u32) -> Result<Vec<LabeledCrop>> {
    generate_crops(img, grid)?
        .map(|((a, b), crop)| {
            LabeledCrop::new(&crop, label_crop((a, b), grid, markers), (image_id, a as u32, b as u32))
        })
        .collect()
}

/// Drops crops whose label and pixels repeat an earlier crop, keeping the
/// first occurrence.
pub fn dedup_crops(crops: Vec<LabeledCrop>) -> Vec<LabeledCrop> {
    let mut seen: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut out: Vec<LabeledCrop> = Vec::new();
    for c in crops {
        let bucket = seen.entry(c.content_key()).or_default();
        if bucket.iter().any(|&k| out[k].label == c.label && out[k].pixels == c.pixels) {
            continue;
        }
        bucket.push(out.len());
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<LabeledCrop>,
    pub val: Vec<LabeledCrop>,
    pub test: Vec<LabeledCrop>,
}

/// Sizes of a 70/15/15 split of `n` items.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (n * 70 + 50) / 100;
    let val = ((n * 15 + 50) / 100).min(n - train);
    (train, val, n - train - val)
}

/// Equalizes the classes by duplicating minority crops, gives every item a
/// fresh light factor from `light`, and splits 70/15/15.
///
/// Crops with identical source pixels (including the duplicates) form one
/// group and always land in the same split.
pub fn balance_and_split(crops: Vec<LabeledCrop>, seed: u64, light: (f64, f64)) -> Result<Splits> {
    let (lo, hi) = light;
    if !(MIN_LIGHT..=MAX_LIGHT).contains(&lo) || !(MIN_LIGHT..=MAX_LIGHT).contains(&hi) || lo > hi {
        bail!(Range, "light range [{}, {}] outside [{}, {}]", lo, hi, MIN_LIGHT, MAX_LIGHT);
    }
    let (mut neg, mut pos): (Vec<LabeledCrop>, Vec<LabeledCrop>) =
        crops.into_iter().partition(|c| c.label == CropLabel::Background);
    if neg.is_empty() || pos.is_empty() {
        bail!(Balance, "need both classes ({} background, {} antenna)", neg.len(), pos.len());
    }
    let mut rng = Rng::stream(seed, &[streams::LIGHT]);
    let (minority, target) = if pos.len() < neg.len() { (&mut pos, neg.len()) } else { (&mut neg, pos.len()) };
    let mut order: Vec<usize> = (0..minority.len()).collect();
    rng.shuffle(&mut order);
    let sources = minority.len();
    let mut k = 0;
    while minority.len() < target {
        let copy = minority[order[k % sources]].clone();
        minority.push(copy);
        k += 1;
    }
    let mut items = neg;
    items.append(&mut pos);
    for it in items.iter_mut() {
        it.light = rng.uniform_in(lo, hi);
    }

    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (idx, it) in items.iter().enumerate() {
        groups.entry(it.content_key()).or_default().push(idx);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    Rng::stream(seed, &[streams::SPLIT]).shuffle(&mut groups);

    let (n_train, n_val, _) = split_sizes(items.len());
    let mut out = Splits::default();
    let mut slots: Vec<Option<LabeledCrop>> = items.into_iter().map(Some).collect();
    for g in groups {
        let dest = if out.train.len() < n_train {
            &mut out.train
        } else if out.val.len() < n_val {
            &mut out.val
        } else {
            &mut out.test
        };
        for idx in g {
            dest.push(slots[idx].take().expect("each item in one group"));
        }
    }
    Ok(out)
}

/// Grid cells labelled positive for one marker, row-major.
pub fn positive_cells(grid: &CropGrid, marker: &PixelRect) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for a in 0..grid.rows {
        for b in 0..grid.cols {
            if covers_cell(grid, (a, b), marker) {
                v.push((a, b));
            }
        }
    }
    v
}
