//! Detection IoU, cluster boxes, confusion matrices, timing summaries and
//! the sweep-vs-prediction latency comparison.

use alloc::vec::Vec;

use crate::crops::{positive_cells, CropGrid};
use crate::detector::BitMap;
use crate::error::{bail, Result};
use crate::math::round;
use crate::scene::PixelRect;

/// Rectangle in grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            bail!(Range, "rect must be at least 1x1");
        }
        Ok(Rect { top, left, height, width })
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        a >= self.top && a < self.top + self.height && b >= self.left && b < self.left + self.width
    }

    /// Smallest rect holding every cell.
    pub fn bounding(cells: &[(usize, usize)]) -> Option<Rect> {
        let (a0, b0) = *cells.first()?;
        let (mut t, mut l, mut bo, mut r) = (a0, b0, a0, b0);
        for &(a, b) in cells {
            t = t.min(a);
            l = l.min(b);
            bo = bo.max(a);
            r = r.max(b);
        }
        Some(Rect { top: t, left: l, height: bo - t + 1, width: r - l + 1 })
    }
}

/// Intersection over union of two cell rectangles.
pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let h = (a.top + a.height).min(b.top + b.height).saturating_sub(a.top.max(b.top));
    let w = (a.left + a.width).min(b.left + b.width).saturating_sub(a.left.max(b.left));
    let inter = h * w;
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Ground-truth box of a marker on a grid: the bounding rect of the cells
/// the crop labeler would call positive.
pub fn ground_truth_rect(grid: &CropGrid, marker: &PixelRect) -> Result<Rect> {
    match Rect::bounding(&positive_cells(grid, marker)) {
        Some(r) => Ok(r),
        None => bail!(Detection, "marker {:?} covers no grid cell", marker),
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

/// Two-means over cell coordinates, seeded with the first set cell of the
/// leftmost column and the last set cell of the rightmost column.
pub fn two_means(cells: &[(usize, usize)]) -> Result<[Vec<(usize, usize)>; 2]> {
    if cells.len() < 2 {
        bail!(Detection, "need at least two set cells, got {}", cells.len());
    }
    let left = *cells.iter().min_by_key(|&&(a, b)| (b, a)).expect("non-empty");
    let right = *cells.iter().max_by_key(|&&(a, b)| (b, a)).expect("non-empty");
    if left == right {
        bail!(Detection, "set cells are not distinct");
    }
    let mut centers = [(left.0 as f64, left.1 as f64), (right.0 as f64, right.1 as f64)];
    let mut assign: Vec<usize> = alloc::vec![usize::MAX; cells.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (k, &(a, b)) in cells.iter().enumerate() {
            let d0 = sq(a as f64 - centers[0].0) + sq(b as f64 - centers[0].1);
            let d1 = sq(a as f64 - centers[1].0) + sq(b as f64 - centers[1].1);
            let c = if d1 < d0 { 1 } else { 0 };
            changed |= assign[k] != c;
            assign[k] = c;
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&(usize, usize)> =
                cells.iter().zip(&assign).filter(|(_, &k)| k == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                bail!(Detection, "a cluster lost all of its cells");
            }
            let n = members.len() as f64;
            *center = (
                members.iter().map(|p| p.0 as f64).sum::<f64>() / n,
                members.iter().map(|p| p.1 as f64).sum::<f64>() / n,
            );
        }
    }
    let mut out = [Vec::new(), Vec::new()];
    for (&p, &c) in cells.iter().zip(&assign) {
        out[c].push(p);
    }
    Ok(out)
}

fn centroid(cells: &[(usize, usize)]) -> (f64, f64) {
    let n = cells.len() as f64;
    (
        cells.iter().map(|p| p.0 as f64).sum::<f64>() / n,
        cells.iter().map(|p| p.1 as f64).sum::<f64>() / n,
    )
}

/// Grows a box from the cluster centroid. Each round, every side whose
/// next row/column strip holds a cluster cell moves out by one; growth
/// stops after a round in which no side moved.
pub fn grow_rect(cells: &[(usize, usize)], rows: usize, cols: usize) -> Result<Rect> {
    if cells.is_empty() {
        bail!(Detection, "empty cluster");
    }
    let (ca, cb) = centroid(cells);
    let a = (round(ca) as usize).min(rows - 1);
    let b = (round(cb) as usize).min(cols - 1);
    // inclusive bounds
    let (mut t, mut bo, mut l, mut r) = (a, a, b, b);
    let hit = |a0: usize, a1: usize, b0: usize, b1: usize| {
        cells.iter().any(|&(x, y)| x >= a0 && x <= a1 && y >= b0 && y <= b1)
    };
    loop {
        let mut moved = false;
        if t > 0 && hit(t - 1, t - 1, l, r) {
            t -= 1;
            moved = true;
        }
        if bo + 1 < rows && hit(bo + 1, bo + 1, l, r) {
            bo += 1;
            moved = true;
        }
        if l > 0 && hit(t, bo, l - 1, l - 1) {
            l -= 1;
            moved = true;
        }
        if r + 1 < cols && hit(t, bo, r + 1, r + 1) {
            r += 1;
            moved = true;
        }
        if !moved {
            break;
        }
    }
    Rect::new(t, l, bo - t + 1, r - l + 1)
}

fn distance_to(rect: &PixelRect, y: f64, x: f64) -> f64 {
    let dy = (rect.top as f64 - y).max(0.0).max(y - (rect.bottom() as f64 - 1.0));
    let dx = (rect.left as f64 - x).max(0.0).max(x - (rect.right() as f64 - 1.0));
    crate::math::hypot(dy, dx)
}

/// Transmitter and receiver boxes (in that order) from a single-channel
/// detection bitmap. The cluster whose centroid window lies nearer the
/// transmitter slider band `tx_band` (pixels) is the transmitter.
pub fn extract_boxes(bm: &BitMap, grid: &CropGrid, tx_band: &PixelRect) -> Result<(Rect, Rect)> {
    if (bm.rows, bm.cols) != (grid.rows, grid.cols) {
        bail!(Dimension, "bitmap {}x{} does not match grid {}x{}", bm.rows, bm.cols, grid.rows, grid.cols);
    }
    let [c0, c1] = two_means(&bm.cells(0))?;
    let r0 = grow_rect(&c0, bm.rows, bm.cols)?;
    let r1 = grow_rect(&c1, bm.rows, bm.cols)?;
    let half = (grid.window as f64 - 1.0) / 2.0;
    let pix = |c: (f64, f64)| (c.0 * grid.stride as f64 + half, c.1 * grid.stride as f64 + half);
    let p0 = pix(centroid(&c0));
    let p1 = pix(centroid(&c1));
    if distance_to(tx_band, p1.0, p1.1) < distance_to(tx_band, p0.0, p0.1) {
        Ok((r1, r0))
    } else {
        Ok((r0, r1))
    }
}

/// Counts of (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn build(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            bail!(Dimension, "{} predictions for {} labels", preds.len(), labels.len());
        }
        let mut counts = alloc::vec![0; classes * classes];
        for (&p, &t) in preds.iter().zip(labels) {
            if p >= classes || t >= classes {
                bail!(Range, "class index outside 0..{}", classes);
            }
            counts[t * classes + p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    /// Samples of class `truth` predicted as `pred`.
    pub fn get(&self, truth: usize, pred: usize) -> usize {
        self.counts[truth * self.classes + pred]
    }

    pub fn row_sum(&self, truth: usize) -> usize {
        self.counts[truth * self.classes..][..self.classes].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hit: usize = (0..self.classes).map(|k| self.get(k, k)).sum();
        if self.total() == 0 {
            0.0
        } else {
            hit as f64 / self.total() as f64
        }
    }

    /// Classes that occur as a true label.
    pub fn present_classes(&self) -> Vec<usize> {
        (0..self.classes).filter(|&k| self.row_sum(k) > 0).collect()
    }
}

/// Exhaustive sweep vs. predicted beam selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    pub predicted_ms: f64,
    pub dwell_ms: f64,
    pub pairs: usize,
    pub sweep_ms: f64,
    pub reduction: f64,
}

pub fn latency_report(predicted_ms: f64, dwell_ms: f64, pairs: usize) -> Result<LatencyReport> {
    if !(predicted_ms > 0.0 && dwell_ms > 0.0 && pairs > 0) || !predicted_ms.is_finite() || !dwell_ms.is_finite() {
        bail!(Range, "latency inputs must be positive");
    }
    let sweep_ms = dwell_ms * pairs as f64;
    Ok(LatencyReport { predicted_ms, dwell_ms, pairs, sweep_ms, reduction: 1.0 - predicted_ms / sweep_ms })
}

/// Summary of repeated timings in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingStats {
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl TimingStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples_ms: Vec<f64>) -> Result<Self> {
        if samples_ms.is_empty() || samples_ms.iter().any(|v| !v.is_finite() || *v < 0.0) {
            bail!(Argument, "timings must be a non-empty list of non-negative values");
        }
        let mut sorted = samples_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = |p: f64| {
            let k = crate::math::ceil(p * sorted.len() as f64) as usize;
            sorted[k.clamp(1, sorted.len()) - 1]
        };
        let mean_ms = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
        Ok(TimingStats { p50_ms: rank(0.5), p95_ms: rank(0.95), mean_ms, samples_ms })
    }
}
