use alloc::vec::Vec;

use super::{Case, Obstacle, SceneConfig};
use crate::codebook::{BeamPair, Codebook, BEAMWIDTH_DEG};
use crate::error::{bail, Result};
use crate::math::{atan2, cos, hypot, log10};
use crate::rng::{streams, Rng};

/// Link budget and measurement model. Powers in dBm, gains in dBi, losses
/// in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub peak_gain_dbi: f64,
    /// Loss at 1 m plus receiver noise floor, folded together.
    pub reference_loss_db: f64,
    pub pathloss_exponent: f64,
    pub reflection_loss_db: f64,
    pub sidelobe_floor_db: f64,
    pub beamwidth_deg: f64,
    pub wood_loss_db: f64,
    pub cardbox_loss_db: f64,
    pub jitter_db: f64,
    /// Samples below this are reported as NaN.
    pub nan_threshold_db: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            tx_power_dbm: 12.0,
            peak_gain_dbi: 10.0,
            reference_loss_db: 21.0,
            pathloss_exponent: 2.0,
            reflection_loss_db: 8.0,
            sidelobe_floor_db: -20.0,
            beamwidth_deg: BEAMWIDTH_DEG,
            wood_loss_db: 30.0,
            cardbox_loss_db: 4.0,
            jitter_db: 0.5,
            nan_threshold_db: -48.0,
        }
    }
}

impl LinkBudget {
    pub fn obstacle_loss_db(&self, obstacle: Obstacle) -> f64 {
        match obstacle {
            Obstacle::None => 0.0,
            Obstacle::Wood => self.wood_loss_db,
            Obstacle::Cardbox => self.cardbox_loss_db,
        }
    }
}

/// Raised-cosine mainlobe over a `-20 dB` floor. Zero offset gives the peak
/// gain, half the 3 dB beamwidth gives peak minus 3 dB.
pub fn beam_gain_db(budget: &LinkBudget, offset_deg: f64) -> f64 {
    // First null one full beamwidth off boresight.
    let null = budget.beamwidth_deg;
    let off = offset_deg.abs();
    let rel = if off >= null {
        budget.sidelobe_floor_db
    } else {
        let c = cos(core::f64::consts::PI * off / (2.0 * null));
        let g = c * c;
        if g <= 0.0 {
            budget.sidelobe_floor_db
        } else {
            (10.0 * log10(g)).max(budget.sidelobe_floor_db)
        }
    };
    budget.peak_gain_dbi + rel
}

/// Top view of the room: x across (0 at the left wall), y from the
/// transmitter side toward the receiver side. Units cm.
#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub width: f64,
    pub tx_y: f64,
    pub rx_y: f64,
    first_stop_x: f64,
    spacing: f64,
    /// (x0, x1, y0, y1)
    pub obstacle: Option<(f64, f64, f64, f64)>,
}

impl Room {
    pub fn new(cfg: &SceneConfig) -> Self {
        let tx_y = (cfg.room_depth_cm - cfg.slider_separation_cm) / 2.0;
        let rx_y = tx_y + cfg.slider_separation_cm;
        let spacing = cfg.stop_spacing_cm();
        let first_stop_x = (cfg.room_width_cm - cfg.slider_length_cm) / 2.0 + spacing / 2.0;
        let obstacle = (cfg.obstacle != Obstacle::None).then(|| {
            let cx = cfg.room_width_cm / 2.0;
            let cy = (tx_y + rx_y) / 2.0;
            let hw = cfg.obstacle_width_cm / 2.0;
            let ht = cfg.obstacle.thickness_cm() / 2.0;
            (cx - hw, cx + hw, cy - ht, cy + ht)
        });
        Room { width: cfg.room_width_cm, tx_y, rx_y, first_stop_x, spacing, obstacle }
    }

    pub fn stop_x(&self, stop: u8) -> f64 {
        self.first_stop_x + self.spacing * (stop as f64 - 1.0)
    }

    /// Whether the straight segment between the two points crosses the
    /// obstacle footprint (Liang-Barsky clip).
    pub fn blocks(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let Some((x0, x1, y0, y1)) = self.obstacle else {
            return false;
        };
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for (p, q) in [(-dx, a.0 - x0), (dx, x1 - a.0), (-dy, a.1 - y0), (dy, y1 - a.1)] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let t = q / p;
                if p < 0.0 {
                    lo = lo.max(t);
                } else {
                    hi = hi.min(t);
                }
            }
        }
        lo <= hi
    }
}

fn deg(rad: f64) -> f64 {
    rad * 180.0 / core::f64::consts::PI
}

struct Path {
    length_cm: f64,
    /// Departure angle at the transmitter, positive toward +x.
    tx_deg: f64,
    /// Arrival angle at the receiver, positive toward +x.
    rx_deg: f64,
    extra_loss_db: f64,
}

fn paths(room: &Room, budget: &LinkBudget, obstacle: Obstacle, case: Case) -> [Path; 3] {
    let tx = (room.stop_x(case.i), room.tx_y);
    let rx = (room.stop_x(case.j), room.rx_y);
    let depth = rx.1 - tx.1;
    let los = Path {
        length_cm: hypot(rx.0 - tx.0, depth),
        tx_deg: deg(atan2(rx.0 - tx.0, depth)),
        rx_deg: deg(atan2(tx.0 - rx.0, depth)),
        extra_loss_db: if room.blocks(tx, rx) { budget.obstacle_loss_db(obstacle) } else { 0.0 },
    };
    // Image-source bounce off the wall at x = w.
    let bounce = |w: f64| {
        let (a, b) = ((tx.0 - w).abs(), (rx.0 - w).abs());
        let hit_y = tx.1 + depth * a / (a + b);
        Path {
            length_cm: hypot(a + b, depth),
            tx_deg: deg(atan2(w - tx.0, hit_y - tx.1)),
            rx_deg: deg(atan2(w - rx.0, rx.1 - hit_y)),
            extra_loss_db: budget.reflection_loss_db,
        }
    };
    [los, bounce(0.0), bounce(room.width)]
}

/// Noise-free SNR: the strongest of the LoS ray and the two wall bounces.
pub fn mean_snr_db(cfg: &SceneConfig, budget: &LinkBudget, case: Case, pair: BeamPair) -> Result<f64> {
    let case = Case::new(case.i, case.j)?;
    let cb = Codebook::azimuth();
    let bt = cb.angle_deg(pair.t)?;
    let br = cb.angle_deg(pair.r)?;
    let room = Room::new(cfg);
    let best = paths(&room, budget, cfg.obstacle, case)
        .iter()
        .map(|p| {
            let d_m = (p.length_cm / 100.0).max(1e-3);
            budget.tx_power_dbm + beam_gain_db(budget, p.tx_deg - bt) + beam_gain_db(budget, p.rx_deg - br)
                - budget.reference_loss_db
                - 10.0 * budget.pathloss_exponent * log10(d_m)
                - p.extra_loss_db
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best)
}

/// `n` noisy SNR readings for one case and beam pair; readings under the
/// threshold come back as NaN.
pub fn snr_oracle(
    cfg: &SceneConfig,
    budget: &LinkBudget,
    case: Case,
    pair: BeamPair,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        bail!(Argument, "sample count must be at least 1");
    }
    let mean = mean_snr_db(cfg, budget, case, pair)?;
    let mut rng = Rng::stream(
        seed,
        &[streams::SNR, case.index() as u64, pair.t as u64, pair.r as u64],
    );
    Ok((0..n)
        .map(|_| {
            let v = mean + budget.jitter_db * rng.normal();
            if v < budget.nan_threshold_db {
                f64::NAN
            } else {
                v
            }
        })
        .collect())
}
