use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{spatialize, RoomScene};
use crate::error::{invalid, Result};
use crate::spectrum::DoaSet;

/// Energy VAD: a segment is active when its RMS is within
/// `rel_threshold_db` of the source's loudest `frame_len` frame.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VadConfig {
    pub rel_threshold_db: f64,
    pub frame_len: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            rel_threshold_db: -40.0,
            frame_len: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MixConfig {
    pub sample_rate: f64,
    /// Every source is tiled or truncated to this duration, in seconds.
    pub duration: f64,
    pub segment_len: usize,
    pub max_order: u32,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000.0,
            duration: 5.0,
            segment_len: 8192,
            max_order: 6,
        }
    }
}

impl MixConfig {
    pub fn total_samples(&self) -> usize {
        libm::round(self.duration * self.sample_rate) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegmentLabel {
    pub segment_index: usize,
    pub t_start: usize,
    pub active_doas: DoaSet,
    pub room_id: u64,
}

/// Repeats or truncates `signal` to exactly `len` samples.
pub fn fit_length(signal: &[f64], len: usize) -> Vec<f64> {
    if signal.is_empty() {
        return vec![0.0; len];
    }
    signal.iter().copied().cycle().take(len).collect()
}

/// RMS level in dB; silence maps to negative infinity.
pub fn rms_db(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NEG_INFINITY;
    }
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if ms <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * libm::log10(ms)
    }
}

/// Spatializes and sums every source, then labels each non-overlapping
/// segment with the azimuths of the sources the VAD finds active in their
/// clean signals.
pub fn mix_and_label(
    scene: &RoomScene,
    signals: &[Vec<f64>],
    vad: &VadConfig,
    cfg: &MixConfig,
    room_id: u64,
) -> Result<(Vec<Vec<f64>>, Vec<SegmentLabel>)> {
    if signals.len() != scene.sources.len() {
        return Err(invalid(format!(
            "{} signals for {} sources",
            signals.len(),
            scene.sources.len()
        )));
    }
    if !(vad.rel_threshold_db < 0.0) || vad.frame_len == 0 {
        return Err(invalid(
            "VAD needs a negative relative threshold and a positive frame length",
        ));
    }
    if cfg.segment_len == 0 {
        return Err(invalid("segment length must be positive"));
    }
    let total = cfg.total_samples();
    let channels = scene.array_geometry.len();
    let mut mixture = vec![vec![0.0; total]; channels];
    let clean: Vec<Vec<f64>> = signals.iter().map(|s| fit_length(s, total)).collect();

    for (i, sig) in clean.iter().enumerate() {
        let wet = spatialize(sig, scene, i, cfg.sample_rate, cfg.max_order)?;
        for (m, w) in mixture.iter_mut().zip(&wet) {
            for (a, b) in m.iter_mut().zip(w) {
                *a += b;
            }
        }
    }

    let peaks: Vec<f64> = clean
        .iter()
        .map(|s| {
            s.chunks(vad.frame_len)
                .map(rms_db)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let segments = total / cfg.segment_len;
    let labels = (0..segments)
        .map(|k| {
            let start = k * cfg.segment_len;
            let active_doas = scene
                .sources
                .iter()
                .zip(&clean)
                .zip(&peaks)
                .filter(|((_, sig), &peak)| {
                    peak.is_finite()
                        && rms_db(&sig[start..start + cfg.segment_len]) - peak
                            >= vad.rel_threshold_db
                })
                .map(|((src, _), _)| src.azimuth)
                .collect();
            SegmentLabel {
                segment_index: k,
                t_start: start,
                active_doas,
                room_id,
            }
        })
        .collect();
    Ok((mixture, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::room::{place_sources, sample_room};

    fn cfg() -> MixConfig {
        MixConfig {
            duration: 1.0,
            max_order: 1,
            ..MixConfig::default()
        }
    }

    #[test]
    fn no_sources_no_labels() {
        let scene = sample_room(4);
        let (mix, labels) = mix_and_label(&scene, &[], &VadConfig::default(), &cfg(), 4).unwrap();
        assert_eq!(mix.len(), 4);
        assert!(mix
            .iter()
            .all(|c| c.len() == 48_000 && c.iter().all(|&v| v == 0.0)));
        assert_eq!(labels.len(), 5);
        assert!(labels
            .iter()
            .all(|l| l.active_doas.is_empty() && l.room_id == 4));
    }

    #[test]
    fn constant_source_active_everywhere() {
        let scene = place_sources(&sample_room(5), 1, 20, 1).unwrap();
        let tone: Vec<f64> = (0..48_000)
            .map(|n| 0.3 * libm::sin(n as f64 * 0.05))
            .collect();
        let (_, labels) = mix_and_label(&scene, &[tone], &VadConfig::default(), &cfg(), 0).unwrap();
        let az = scene.sources[0].azimuth;
        assert!(labels.iter().all(|l| l.active_doas.to_vec() == vec![az]));
    }

    #[test]
    fn gated_source_absent_where_silent() {
        let scene = place_sources(&sample_room(6), 2, 20, 2).unwrap();
        let tone: Vec<f64> = (0..48_000)
            .map(|n| 0.3 * libm::sin(n as f64 * 0.05))
            .collect();
        // second source silent during segment 2 only
        let mut gated = tone.clone();
        for v in &mut gated[2 * 8192..3 * 8192] {
            *v = 0.0;
        }
        let (_, labels) =
            mix_and_label(&scene, &[tone, gated], &VadConfig::default(), &cfg(), 0).unwrap();
        let (a, b) = (scene.sources[0].azimuth, scene.sources[1].azimuth);
        for l in &labels {
            assert!(l.active_doas.contains(a));
            assert_eq!(l.active_doas.contains(b), l.segment_index != 2);
        }
    }

    #[test]
    fn fit_length_tiles_and_truncates() {
        assert_eq!(fit_length(&[1.0, 2.0], 5), vec![1.0, 2.0, 1.0, 2.0, 1.0]);
        assert_eq!(fit_length(&[1.0, 2.0, 3.0], 2), vec![1.0, 2.0]);
        assert_eq!(fit_length(&[], 2), vec![0.0, 0.0]);
    }
}
