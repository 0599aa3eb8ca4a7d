//! Source-set estimation from a spatial spectrum: iterative extraction
//! gated by a stop detector, and the fixed-threshold baseline.

use alloc::vec::Vec;

use crate::detect::StopDetector;
use crate::spectrum::{pick_peaks_above, DoaSet, Peeler, SpatialSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct IsslConfig {
    /// Half-width in degrees of the neighborhood zeroed around each accepted peak.
    pub radius: u32,
    /// Upper bound on detector consultations.
    pub max_iterations: usize,
}

impl Default for IsslConfig {
    fn default() -> Self {
        Self {
            radius: 16,
            max_iterations: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocalizationResult {
    pub doas: DoaSet,
    pub count: usize,
    /// Detector consultations (k + 1 when extraction stops on its own after k sources).
    pub iterations_run: usize,
    /// Residual peak value of each accepted azimuth, in extraction order.
    pub peaks: Vec<f64>,
    /// True when the iteration cap ended the loop rather than the detector.
    pub capped: bool,
}

/// Iterative source extraction: while the detector says continue, take the
/// highest residual peak and zero its neighborhood.
pub fn issl_estimate(
    spec: &SpatialSpectrum,
    detector: &dyn StopDetector,
    cfg: &IsslConfig,
) -> LocalizationResult {
    let mut peeler = Peeler::new(spec, cfg.radius);
    let mut doas = DoaSet::new();
    let mut peaks = Vec::new();
    let mut iterations_run = 0;
    let mut capped = true;
    while iterations_run < cfg.max_iterations {
        iterations_run += 1;
        if detector.should_stop(peeler.residual()) {
            capped = false;
            break;
        }
        let Some((az, value)) = peeler.peak() else {
            // everything has been zeroed; nothing further can be extracted
            capped = false;
            break;
        };
        peeler.peel();
        doas.insert(az);
        peaks.push(value);
    }
    LocalizationResult {
        count: doas.len(),
        doas,
        iterations_run,
        peaks,
        capped,
    }
}

/// Baseline: local maxima at or above `threshold`, thinned by greedy NMS.
pub fn threshold_estimate(
    spec: &SpatialSpectrum,
    threshold: f64,
    nms_radius: u32,
) -> LocalizationResult {
    let doas = pick_peaks_above(spec, threshold, nms_radius);
    let mut order = doas.to_vec();
    order.sort_by(|&a, &b| spec.get(b).total_cmp(&spec.get(a)).then(a.cmp(&b)));
    let peaks = order.iter().map(|&a| spec.get(a)).collect();
    LocalizationResult {
        count: doas.len(),
        doas,
        iterations_run: 1,
        peaks,
        capped: false,
    }
}
