use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use super::SpectrumPredictor;
use crate::error::{invalid, Result};
use crate::frontend::FeatureTensor;
use crate::room::Point;
use crate::spectrum::{SpatialSpectrum, AZIMUTH_BINS};
use crate::SPEED_OF_SOUND;

/// Far-field TDOA of every mic pair for every grid azimuth, in samples.
///
/// A plane wave from azimuth θ reaches mic `m` at `-(r_m · u(θ)) / c`
/// relative to the array center; the pair `(i, j)` TDOA is `τ_i - τ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayManifold {
    pub pairs: Vec<(usize, usize)>,
    pub sample_rate: f64,
    tdoa: Vec<f64>,
    aperture: f64,
}

impl ArrayManifold {
    pub fn new(geometry: &[Point], sample_rate: f64) -> Result<Self> {
        if geometry.len() < 2 {
            return Err(invalid("need at least two microphones"));
        }
        let pairs: Vec<(usize, usize)> = (0..geometry.len())
            .flat_map(|i| (i + 1..geometry.len()).map(move |j| (i, j)))
            .collect();
        let mut tdoa = Vec::with_capacity(AZIMUTH_BINS * pairs.len());
        for az in 0..AZIMUTH_BINS {
            let t = (az as f64).to_radians();
            let (ux, uy) = (libm::cos(t), libm::sin(t));
            for &(i, j) in &pairs {
                let dx = geometry[i][0] - geometry[j][0];
                let dy = geometry[i][1] - geometry[j][1];
                tdoa.push(-(dx * ux + dy * uy) / SPEED_OF_SOUND * sample_rate);
            }
        }
        let aperture = pairs
            .iter()
            .map(|&(i, j)| {
                let d: f64 = (0..3)
                    .map(|k| (geometry[i][k] - geometry[j][k]) * (geometry[i][k] - geometry[j][k]))
                    .sum();
                libm::sqrt(d)
            })
            .fold(0.0, f64::max);
        Ok(Self {
            pairs,
            sample_rate,
            tdoa,
            aperture,
        })
    }

    pub fn tdoa(&self, azimuth: usize, pair: usize) -> f64 {
        self.tdoa[azimuth * self.pairs.len() + pair]
    }

    pub fn mic_count(&self) -> usize {
        self.pairs.last().map_or(0, |p| p.1 + 1)
    }

    /// Largest pair separation, in meters.
    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn max_tdoa(&self) -> f64 {
        self.aperture / SPEED_OF_SOUND * self.sample_rate
    }
}

/// Raw steered response power for every azimuth: the PHAT-weighted
/// cross-spectrum of each pair, summed over frames, steered by the pair's
/// TDOA and summed over pairs and bins. `spectra[m][t][f]` holds mic `m`,
/// frame `t`, retained bin `f`, whose FFT index is `bin_offset + f`.
pub fn srp_power(
    frames: usize,
    bins: usize,
    value: impl Fn(usize, usize, usize) -> Complex64,
    bin_offset: usize,
    fft_size: usize,
    manifold: &ArrayManifold,
) -> Vec<f64> {
    let npairs = manifold.pairs.len();
    // frame-summed PHAT cross-spectra, [pair][bin]
    let mut cross = vec![Complex64::new(0.0, 0.0); npairs * bins];
    for (p, &(i, j)) in manifold.pairs.iter().enumerate() {
        for t in 0..frames {
            for f in 0..bins {
                let c = value(i, t, f) * value(j, t, f).conj();
                let mag = c.norm();
                if mag > 1e-20 {
                    cross[p * bins + f] += c / mag;
                }
            }
        }
    }
    let mut power = vec![0.0; AZIMUTH_BINS];
    for (az, out) in power.iter_mut().enumerate() {
        let mut acc = 0.0;
        for p in 0..npairs {
            let delta = manifold.tdoa(az, p);
            let w0 = 2.0 * PI * bin_offset as f64 / fft_size as f64 * delta;
            let dw = 2.0 * PI / fft_size as f64 * delta;
            let mut steer = Complex64::new(libm::cos(w0), libm::sin(w0));
            let rot = Complex64::new(libm::cos(dw), libm::sin(dw));
            for g in &cross[p * bins..(p + 1) * bins] {
                acc += (g * steer).re;
                steer *= rot;
            }
        }
        *out = acc;
    }
    power
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrpOutput {
    pub spectrum: SpatialSpectrum,
    /// Set when the input carried no usable energy or the response was flat;
    /// the spectrum is then all zeros.
    pub degenerate: bool,
}

/// SRP-PHAT spectrum min-max normalized into `[0, 1]`.
pub fn srp_phat_predict(feature: &FeatureTensor, manifold: &ArrayManifold) -> Result<SrpOutput> {
    let mics = feature.mic_count();
    if mics < 2 || mics != manifold.mic_count() {
        return Err(invalid(format!(
            "feature has {mics} microphones, manifold has {}",
            manifold.mic_count()
        )));
    }
    if (f64::from(feature.sample_rate) - manifold.sample_rate).abs() > 1e-9 {
        return Err(invalid("sample rate differs from the manifold's"));
    }
    let power = srp_power(
        feature.frames,
        feature.bins,
        |m, t, f| feature.complex(t, f, m),
        feature.bin_offset,
        feature.fft_size,
        manifold,
    );
    let lo = power.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-9 * hi.abs().max(1.0)) {
        return Ok(SrpOutput {
            spectrum: SpatialSpectrum::zeros(),
            degenerate: true,
        });
    }
    let values = power.iter().map(|v| (v - lo) / span).collect();
    Ok(SrpOutput {
        spectrum: SpatialSpectrum::from_prediction(values)?,
        degenerate: false,
    })
}

#[derive(Debug, Clone)]
pub struct SrpPhat {
    pub manifold: ArrayManifold,
}

impl SrpPhat {
    pub fn new(geometry: &[Point], sample_rate: f64) -> Result<Self> {
        Ok(Self {
            manifold: ArrayManifold::new(geometry, sample_rate)?,
        })
    }
}

impl SpectrumPredictor for SrpPhat {
    fn predict(&self, feature: &FeatureTensor) -> Result<SpatialSpectrum> {
        Ok(srp_phat_predict(feature, &self.manifold)?.spectrum)
    }
}
