//! Link-quality scores and best-beam-pair labels from raw SNR samples.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::codebook::{BeamPair, Codebook, N_PAIRS};
use crate::error::{bail, Result};
use crate::scene::{snr_oracle, Case, LinkBudget, SceneConfig};

/// Samples per (case, pair) when nothing else is configured.
pub const DEFAULT_SAMPLES: usize = 50;

/// Quality score of one beam pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    /// Mean of the valid samples divided by `nulls + 1`; `-inf` when no
    /// sample is valid.
    pub q: f64,
    pub valid: usize,
    pub nulls: usize,
}

/// Scores a list of SNR readings (NaN = dropout).
pub fn quality(samples: &[f64]) -> Result<Quality> {
    if samples.is_empty() {
        bail!(Argument, "no samples");
    }
    let mut sum = 0.0;
    let mut valid = 0usize;
    for &s in samples {
        if !s.is_nan() {
            sum += s;
            valid += 1;
        }
    }
    let nulls = samples.len() - valid;
    let q = if valid == 0 {
        f64::NEG_INFINITY
    } else {
        (sum / valid as f64) / (nulls + 1) as f64
    };
    Ok(Quality { q, valid, nulls })
}

/// Raw readings for every (case, pair).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnrTable {
    entries: BTreeMap<(Case, BeamPair), Vec<f64>>,
}

impl SnrTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queries the synthetic oracle for all 25 x 169 entries.
    pub fn from_oracle(cfg: &SceneConfig, budget: &LinkBudget, n: usize, seed: u64) -> Result<Self> {
        let mut t = SnrTable::new();
        let pairs = Codebook::azimuth().pairs();
        for case in Case::all() {
            for &p in &pairs {
                t.insert(case, p, snr_oracle(cfg, budget, case, p, n, seed)?)?;
            }
        }
        Ok(t)
    }

    pub fn insert(&mut self, case: Case, pair: BeamPair, samples: Vec<f64>) -> Result<()> {
        let case = Case::new(case.i, case.j)?;
        let pair = BeamPair::new(pair.t, pair.r)?;
        if samples.is_empty() {
            bail!(Argument, "no samples for {} {}", case, pair);
        }
        self.entries.insert((case, pair), samples);
        Ok(())
    }

    pub fn get(&self, case: Case, pair: BeamPair) -> Option<&[f64]> {
        self.entries.get(&(case, pair)).map(Vec::as_slice)
    }

    pub fn get_mut(&mut self, case: Case, pair: BeamPair) -> Option<&mut Vec<f64>> {
        self.entries.get_mut(&(case, pair))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.entries.len() == 25 * N_PAIRS
    }

    /// Entries ordered by case, then pair.
    pub fn iter(&self) -> impl Iterator<Item = (Case, BeamPair, &[f64])> {
        self.entries.iter().map(|(&(c, p), v)| (c, p, v.as_slice()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityTable {
    entries: BTreeMap<(Case, BeamPair), Quality>,
}

impl QualityTable {
    pub fn from_snr(snr: &SnrTable) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (c, p, s) in snr.iter() {
            entries.insert((c, p), quality(s)?);
        }
        Ok(QualityTable { entries })
    }

    pub fn insert(&mut self, case: Case, pair: BeamPair, q: Quality) {
        self.entries.insert((case, pair), q);
    }

    pub fn get(&self, case: Case, pair: BeamPair) -> Option<Quality> {
        self.entries.get(&(case, pair)).copied()
    }
}

/// Highest-Q pair of a case; ties go to the smallest `(t, r)`.
pub fn best_pair(table: &QualityTable, case: Case) -> Result<BeamPair> {
    let mut best: Option<(BeamPair, f64)> = None;
    for p in Codebook::azimuth().pairs() {
        let Some(q) = table.get(case, p) else {
            bail!(IncompleteTable, "no entry for case {} pair {}", case, p);
        };
        if best.is_none_or(|(_, b)| q.q > b) {
            best = Some((p, q.q));
        }
    }
    match best {
        Some((p, q)) if q > f64::NEG_INFINITY => Ok(p),
        _ => bail!(Precondition, "every pair of case {} has only NaN samples", case),
    }
}

/// Best pair per case.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTable {
    labels: BTreeMap<Case, BeamPair>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, case: Case, pair: BeamPair) {
        self.labels.insert(case, pair);
    }

    pub fn get(&self, case: Case) -> Option<BeamPair> {
        self.labels.get(&case).copied()
    }

    /// Like [`get`](Self::get) but missing cases are an error.
    pub fn label(&self, case: Case) -> Result<BeamPair> {
        match self.get(case) {
            Some(p) => Ok(p),
            None => bail!(Encoding, "no label for case {}", case),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Case, BeamPair)> + '_ {
        self.labels.iter().map(|(&c, &p)| (c, p))
    }

    /// Number of distinct pairs used as labels.
    pub fn distinct_pairs(&self) -> usize {
        let mut v: Vec<BeamPair> = self.labels.values().copied().collect();
        v.sort();
        v.dedup();
        v.len()
    }
}

pub fn build_label_table(snr: &SnrTable) -> Result<LabelTable> {
    if !snr.is_complete() {
        bail!(IncompleteTable, "{} of {} entries present", snr.len(), 25 * N_PAIRS);
    }
    let q = QualityTable::from_snr(snr)?;
    let mut t = LabelTable::new();
    for case in Case::all() {
        t.insert(case, best_pair(&q, case)?);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::scene::{Camera, Obstacle};

    #[test]
    fn quality_examples() {
        let q = quality(&[10.0, 10.0, 10.0, 10.0]).unwrap();
        assert_eq!((q.q, q.valid, q.nulls), (10.0, 4, 0));
        assert_eq!(quality(&[10.0, 10.0, f64::NAN, 10.0]).unwrap().q, 5.0);
        let q = quality(&[f64::NAN, f64::NAN]).unwrap();
        assert_eq!((q.q, q.valid, q.nulls), (f64::NEG_INFINITY, 0, 2));
        assert!(quality(&[]).is_err());
    }

    fn filled(f: impl Fn(BeamPair) -> f64) -> QualityTable {
        let mut t = QualityTable::default();
        let c = Case::new(2, 2).unwrap();
        for p in Codebook::azimuth().pairs() {
            t.insert(c, p, Quality { q: f(p), valid: 1, nulls: 0 });
        }
        t
    }

    #[test]
    fn best_pair_rules() {
        let c = Case::new(2, 2).unwrap();
        let star = BeamPair::new(6, 18).unwrap();
        assert_eq!(best_pair(&filled(|p| if p == star { 20.0 } else { 1.0 }), c).unwrap(), star);
        assert_eq!(best_pair(&filled(|_| 3.0), c).unwrap(), BeamPair::new(0, 0).unwrap());
        assert!(matches!(
            best_pair(&filled(|_| f64::NEG_INFINITY), c),
            Err(crate::Error::Precondition(_))
        ));
        assert!(matches!(
            best_pair(&QualityTable::default(), c),
            Err(crate::Error::IncompleteTable(_))
        ));
    }

    #[test]
    fn best_pair_matches_scan() {
        let c = Case::new(2, 2).unwrap();
        let mut rng = Rng::stream(4, &[]);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..N_PAIRS).map(|_| rng.below(40) as f64).collect();
            let t = filled(|p| vals[(p.t / 2) as usize * 13 + (p.r / 2) as usize]);
            let mut k = 0;
            for (idx, v) in vals.iter().enumerate() {
                if *v > vals[k] {
                    k = idx;
                }
            }
            let want = BeamPair::new((k / 13 * 2) as u8, (k % 13 * 2) as u8).unwrap();
            assert_eq!(best_pair(&t, c).unwrap(), want);
        }
    }

    #[test]
    fn incomplete_snr_rejected() {
        let mut s = SnrTable::new();
        s.insert(Case::new(1, 1).unwrap(), BeamPair::new(0, 0).unwrap(), alloc::vec![1.0]).unwrap();
        assert!(matches!(build_label_table(&s), Err(crate::Error::IncompleteTable(_))));
    }

    #[test]
    fn oracle_labels_middle_case_broadside() {
        let cfg = SceneConfig::desk(Camera::One, Obstacle::None);
        let snr = SnrTable::from_oracle(&cfg, &LinkBudget::default(), 20, 5).unwrap();
        let labels = build_label_table(&snr).unwrap();
        assert_eq!(labels.len(), 25);
        assert_eq!(labels.get(Case::new(3, 3).unwrap()), Some(BeamPair::new(12, 12).unwrap()));
    }
}
