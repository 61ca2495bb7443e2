//! The 13-beam azimuth codebook and transmit/receive beam pairs.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{bail, Result};

/// Beam indices of the full 25-beam azimuth codebook run 0..=24 in 5 degree
/// steps from -60 to +60 degrees; only the even indices are used.
pub const MAX_BEAM: u8 = 24;
pub const BEAM_STEP_DEG: f64 = 5.0;
pub const FIRST_BEAM_DEG: f64 = -60.0;
/// 3 dB beamwidth of every beam.
pub const BEAMWIDTH_DEG: f64 = 25.0;
pub const N_BEAMS: usize = 13;
pub const N_PAIRS: usize = N_BEAMS * N_BEAMS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Codebook;

impl Codebook {
    pub fn azimuth() -> Self {
        Codebook
    }

    pub fn beams(&self) -> impl Iterator<Item = u8> + Clone {
        (0..=MAX_BEAM).step_by(2)
    }

    pub fn contains(&self, beam: u8) -> bool {
        beam <= MAX_BEAM && beam.is_multiple_of(2)
    }

    /// Boresight azimuth in degrees.
    pub fn angle_deg(&self, beam: u8) -> Result<f64> {
        if !self.contains(beam) {
            bail!(Range, "beam {} is not in the even-index azimuth codebook", beam);
        }
        Ok(FIRST_BEAM_DEG + BEAM_STEP_DEG * beam as f64)
    }

    /// All 169 pairs ordered by transmit then receive index.
    pub fn pairs(&self) -> Vec<BeamPair> {
        self.beams()
            .flat_map(|t| self.beams().map(move |r| BeamPair { t, r }))
            .collect()
    }
}

/// Ordered (transmit, receive) beam choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BeamPair {
    pub t: u8,
    pub r: u8,
}

impl BeamPair {
    pub fn new(t: u8, r: u8) -> Result<Self> {
        let cb = Codebook;
        if !cb.contains(t) || !cb.contains(r) {
            bail!(Range, "pair ({}, {}) outside the even-index codebook", t, r);
        }
        Ok(BeamPair { t, r })
    }

    /// The pair seen in a left-right mirrored room.
    pub fn mirrored(self) -> Self {
        BeamPair { t: MAX_BEAM - self.t, r: MAX_BEAM - self.r }
    }
}

impl fmt::Display for BeamPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.t, self.r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_beams_spanning_sixty_degrees() {
        let cb = Codebook::azimuth();
        let angles: Vec<f64> = cb.beams().map(|b| cb.angle_deg(b).unwrap()).collect();
        assert_eq!(angles.len(), N_BEAMS);
        assert_eq!(angles[0], -60.0);
        assert_eq!(angles[6], 0.0);
        assert_eq!(angles[12], 60.0);
        assert!(angles.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(cb.pairs().len(), 169);
    }

    #[test]
    fn odd_and_large_beams_rejected() {
        assert!(BeamPair::new(3, 0).is_err());
        assert!(BeamPair::new(0, 26).is_err());
        assert!(Codebook.angle_deg(13).is_err());
    }
}
