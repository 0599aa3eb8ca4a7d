//! The 360-point azimuth likelihood spectrum and its peak primitives.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

pub const AZIMUTH_BINS: usize = 360;

/// Circular distance in degrees between two azimuths, in `[0, 180]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b) - 360.0 * libm::floor((a - b) / 360.0);
    d.min(360.0 - d)
}

/// Integer version of [`angular_distance`] on the degree grid.
pub fn grid_distance(a: i64, b: i64) -> u32 {
    let d = (a - b).rem_euclid(360) as u32;
    d.min(360 - d)
}

/// A set of integer azimuths in `[0, 360)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<u16>", into = "Vec<u16>"))]
pub struct DoaSet(BTreeSet<u16>);

impl DoaSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set, rejecting out-of-range or duplicate azimuths.
    pub fn from_azimuths(azimuths: &[u16]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &a in azimuths {
            if usize::from(a) >= AZIMUTH_BINS {
                return Err(invalid(format!("azimuth {a} outside [0, 360)")));
            }
            if !set.insert(a) {
                return Err(invalid(format!("duplicate azimuth {a}")));
            }
        }
        Ok(Self(set))
    }

    /// Inserts an azimuth, reduced mod 360. Returns false if already present.
    pub fn insert(&mut self, azimuth: u16) -> bool {
        self.0.insert(azimuth % AZIMUTH_BINS as u16)
    }

    pub fn contains(&self, azimuth: u16) -> bool {
        self.0.contains(&azimuth)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = u16> + '_ {
        self.0.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<u16> {
        self.iter().collect()
    }

    /// Smallest pairwise circular distance, `None` for fewer than two entries.
    pub fn min_spacing(&self) -> Option<u32> {
        let v = self.to_vec();
        let mut best: Option<u32> = None;
        for (i, &a) in v.iter().enumerate() {
            for &b in &v[i + 1..] {
                let d = grid_distance(i64::from(a), i64::from(b));
                best = Some(best.map_or(d, |x| x.min(d)));
            }
        }
        best
    }
}

impl TryFrom<Vec<u16>> for DoaSet {
    type Error = crate::Error;

    fn try_from(v: Vec<u16>) -> Result<Self> {
        Self::from_azimuths(&v)
    }
}

impl From<DoaSet> for Vec<u16> {
    fn from(s: DoaSet) -> Self {
        s.to_vec()
    }
}

impl FromIterator<u16> for DoaSet {
    fn from_iter<I: IntoIterator<Item = u16>>(iter: I) -> Self {
        let mut s = DoaSet::new();
        for a in iter {
            s.insert(a);
        }
        s
    }
}

/// Likelihood over azimuths `0..360`; index `j` is azimuth `j` degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    values: Vec<f64>,
}

impl SpatialSpectrum {
    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; AZIMUTH_BINS],
        }
    }

    /// Accepts exactly 360 finite values as-is.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != AZIMUTH_BINS {
            return Err(invalid(format!(
                "spectrum needs {AZIMUTH_BINS} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("spectrum contains non-finite values"));
        }
        Ok(Self { values })
    }

    /// Ingests a predicted spectrum, clamping every value into `[0, 1]`.
    pub fn from_prediction(values: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(values)?;
        for v in &mut s.values {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, azimuth: u16) -> f64 {
        self.values[usize::from(azimuth) % AZIMUTH_BINS]
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Gaussian likelihood coding of a source set: at every azimuth, the largest
/// `exp(-d²/σ²)` over the sources; all zeros for an empty set.
pub fn encode(doas: &DoaSet, sigma: f64) -> SpatialSpectrum {
    assert!(sigma > 0.0, "sigma must be positive");
    let mut values = vec![0.0; AZIMUTH_BINS];
    if doas.is_empty() {
        return SpatialSpectrum { values };
    }
    let s2 = sigma * sigma;
    for (j, v) in values.iter_mut().enumerate() {
        *v = doas
            .iter()
            .map(|src| {
                let d = f64::from(grid_distance(j as i64, i64::from(src)));
                libm::exp(-d * d / s2)
            })
            .fold(0.0, f64::max);
    }
    SpatialSpectrum { values }
}

/// `(azimuth, value)` of the maximum; ties go to the smallest azimuth.
pub fn global_peak(spec: &SpatialSpectrum) -> (u16, f64) {
    let mut best = (0u16, spec.values[0]);
    for (j, &v) in spec.values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (j as u16, v);
        }
    }
    best
}

/// Copy of `spec` with every azimuth within `radius` degrees of `center` set to 0.
pub fn zero_neighborhood(spec: &SpatialSpectrum, center: u16, radius: u32) -> SpatialSpectrum {
    let mut out = spec.clone();
    for (j, v) in out.values.iter_mut().enumerate() {
        if grid_distance(j as i64, i64::from(center)) <= radius {
            *v = 0.0;
        }
    }
    out
}

/// Circular local maxima: strictly above both neighbors, where a plateau of
/// equal values counts once at its lowest index.
pub fn local_maxima(spec: &SpatialSpectrum) -> Vec<u16> {
    let v = &spec.values;
    let n = v.len();
    // start at a run boundary so no run is split by the wrap
    let Some(start) = (0..n).find(|&i| v[i] != v[(i + n - 1) % n]) else {
        return Vec::new();
    };
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let run_start = (start + i) % n;
        let mut len = 1;
        while len < n && v[(run_start + len) % n] == v[run_start] {
            len += 1;
        }
        let before = v[(run_start + n - 1) % n];
        let after = v[(run_start + len) % n];
        if before < v[run_start] && after < v[run_start] {
            let lowest = (0..len)
                .map(|k| (run_start + k) % n)
                .min()
                .unwrap_or(run_start);
            peaks.push(lowest as u16);
        }
        i += len;
    }
    peaks.sort_unstable();
    peaks
}

/// Threshold peak picking with greedy non-maximum suppression.
pub fn pick_peaks_above(spec: &SpatialSpectrum, threshold: f64, nms_radius: u32) -> DoaSet {
    let mut candidates: Vec<u16> = local_maxima(spec)
        .into_iter()
        .filter(|&j| spec.get(j) >= threshold)
        .collect();
    // descending value, ascending azimuth among equals
    candidates.sort_by(|&a, &b| spec.get(b).total_cmp(&spec.get(a)).then(a.cmp(&b)));
    let mut accepted: Vec<u16> = Vec::new();
    for c in candidates {
        if accepted
            .iter()
            .all(|&a| grid_distance(i64::from(a), i64::from(c)) > nms_radius)
        {
            accepted.push(c);
        }
    }
    accepted.into_iter().collect()
}

/// Adds independent uniform noise in `[-amplitude, amplitude]` at every
/// azimuth, then clamps into `[0, 1]`.
pub fn add_uniform_noise(spec: &SpatialSpectrum, amplitude: f64, rng_seed: u64) -> SpatialSpectrum {
    use rand::Rng;
    let mut rng = crate::seed::rng(rng_seed);
    let values = spec
        .values
        .iter()
        .map(|&v| {
            let n = if amplitude > 0.0 {
                rng.gen_range(-amplitude..=amplitude)
            } else {
                0.0
            };
            (v + n).clamp(0.0, 1.0)
        })
        .collect();
    SpatialSpectrum { values }
}

/// A spectrum being peeled one peak at a time.
///
/// Peaks are searched only outside already-zeroed neighborhoods, so an
/// all-zero residual never hands back an azimuth that was already taken.
/// On any residual with a positive value left outside them this is exactly
/// [`global_peak`] followed by [`zero_neighborhood`].
#[derive(Debug, Clone)]
pub struct Peeler {
    residual: SpatialSpectrum,
    taken: Vec<bool>,
    radius: u32,
}

impl Peeler {
    pub fn new(spec: &SpatialSpectrum, radius: u32) -> Self {
        Self {
            residual: spec.clone(),
            taken: vec![false; AZIMUTH_BINS],
            radius,
        }
    }

    pub fn residual(&self) -> &SpatialSpectrum {
        &self.residual
    }

    /// Highest untaken azimuth and its value, smallest azimuth on ties.
    pub fn peak(&self) -> Option<(u16, f64)> {
        let mut best: Option<(u16, f64)> = None;
        for (j, &v) in self.residual.values.iter().enumerate() {
            if !self.taken[j] && best.map_or(true, |(_, b)| v > b) {
                best = Some((j as u16, v));
            }
        }
        best
    }

    /// Zeros the neighborhood of the current peak and returns its azimuth.
    pub fn peel(&mut self) -> Option<u16> {
        let (az, _) = self.peak()?;
        self.residual = zero_neighborhood(&self.residual, az, self.radius);
        for (j, t) in self.taken.iter_mut().enumerate() {
            if grid_distance(j as i64, i64::from(az)) <= self.radius {
                *t = true;
            }
        }
        Some(az)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doas(v: &[u16]) -> DoaSet {
        DoaSet::from_azimuths(v).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(angular_distance(90.0, 90.0), 0.0);
        assert_eq!(angular_distance(350.0, 10.0), 20.0);
        assert_eq!(angular_distance(0.0, 180.0), 180.0);
        assert_eq!(angular_distance(-10.0, 730.0), 20.0);
        assert_eq!(grid_distance(350, 10), 20);
    }

    #[test]
    fn encode_examples() {
        assert!(encode(&DoaSet::new(), 8.0)
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let s = encode(&doas(&[90]), 8.0);
        assert_eq!(s.get(90), 1.0);
        assert!((s.get(98) - 0.367_879_441).abs() < 1e-9);
        assert!((s.get(110) - 0.001_930_454).abs() < 1e-9);
    }

    #[test]
    fn peak_examples() {
        assert_eq!(global_peak(&encode(&doas(&[50]), 8.0)), (50, 1.0));
        assert_eq!(global_peak(&SpatialSpectrum::zeros()), (0, 0.0));
        let mut v = vec![0.0; 360];
        v[200] = 0.7;
        assert_eq!(global_peak(&SpatialSpectrum::new(v).unwrap()), (200, 0.7));
    }

    #[test]
    fn zeroing_examples() {
        let s = encode(&doas(&[90, 130]), 8.0);
        let only = zero_neighborhood(&s, 90, 0);
        assert_eq!(only.get(90), 0.0);
        assert_eq!(only.get(89), s.get(89));
        let z = zero_neighborhood(&s, 90, 16);
        assert_eq!(z.get(90), 0.0);
        assert_eq!(z.get(130), 1.0);

        let flat = SpatialSpectrum::new(vec![1.0; 360]).unwrap();
        let z = zero_neighborhood(&flat, 2, 5);
        let zeroed: Vec<usize> = (0..360).filter(|&j| z.values()[j] == 0.0).collect();
        assert_eq!(zeroed, vec![0, 1, 2, 3, 4, 5, 6, 7, 357, 358, 359]);
    }

    #[test]
    fn threshold_examples() {
        let mut v = vec![0.0; 360];
        v[100] = 0.9;
        v[200] = 0.4;
        let s = SpatialSpectrum::new(v).unwrap();
        assert_eq!(pick_peaks_above(&s, 0.5, 16), doas(&[100]));
        assert_eq!(
            pick_peaks_above(&encode(&doas(&[50, 150]), 8.0), 0.5, 16),
            doas(&[50, 150])
        );
        assert!(pick_peaks_above(&SpatialSpectrum::zeros(), 0.1, 16).is_empty());
        assert!(
            pick_peaks_above(&SpatialSpectrum::new(vec![0.9; 360]).unwrap(), 0.5, 16).is_empty()
        );
    }

    #[test]
    fn plateau_counts_once_at_lowest_index() {
        let mut v = vec![0.0; 360];
        v[10] = 0.5;
        v[11] = 0.5;
        v[12] = 0.5;
        v[359] = 0.8;
        v[0] = 0.8;
        let s = SpatialSpectrum::new(v).unwrap();
        assert_eq!(local_maxima(&s), vec![0, 10]);
    }

    #[test]
    fn nms_suppresses_near_candidates() {
        let mut v = vec![0.0; 360];
        v[100] = 0.9;
        v[110] = 0.8;
        v[140] = 0.7;
        let s = SpatialSpectrum::new(v).unwrap();
        assert_eq!(pick_peaks_above(&s, 0.5, 16), doas(&[100, 140]));
        assert_eq!(pick_peaks_above(&s, 0.5, 0), doas(&[100, 110, 140]));
    }

    #[test]
    fn doa_set_validation() {
        assert!(DoaSet::from_azimuths(&[360]).is_err());
        assert!(DoaSet::from_azimuths(&[3, 3]).is_err());
        assert_eq!(doas(&[10, 350]).min_spacing(), Some(20));
        assert_eq!(doas(&[10]).min_spacing(), None);
    }

    #[test]
    fn prediction_is_clamped() {
        let mut v = vec![0.5; 360];
        v[0] = 1.2;
        v[1] = -0.1;
        let s = SpatialSpectrum::from_prediction(v).unwrap();
        assert_eq!(s.get(0), 1.0);
        assert_eq!(s.get(1), 0.0);
        assert!(SpatialSpectrum::from_prediction(vec![f64::NAN; 360]).is_err());
        assert!(SpatialSpectrum::new(vec![0.0; 359]).is_err());
    }
}
