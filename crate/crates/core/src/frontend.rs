//! Framing, STFT and the stacked real/imaginary feature tensor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::fft;

/// One multichannel analysis segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

impl AudioSegment {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if channels.len() < 2 {
            return Err(invalid(format!(
                "need at least 2 channels, got {}",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(invalid("channels differ in length"));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Window {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)`.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: Window,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 2048,
            hop: 1024,
            window: Window::Hann,
            fmin: 100.0,
            fmax: 8000.0,
        }
    }
}

impl StftConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.fft_size == 0 || self.hop == 0 || self.hop > self.fft_size {
            return Err(invalid(format!(
                "need 0 < hop <= fft_size, got hop {} fft_size {}",
                self.hop, self.fft_size
            )));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(invalid(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got [{}, {}]",
                self.fmin, self.fmax
            )));
        }
        Ok(())
    }

    pub fn frames_for(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }
}

/// One channel's complex STFT, row-major `(frames, bins)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn at(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }
}

/// Complex STFT of every channel; each has `fft_size/2 + 1` bins.
pub fn stft(segment: &AudioSegment, cfg: &StftConfig) -> Result<Vec<Spectrogram>> {
    if cfg.fft_size == 0 || cfg.hop == 0 || cfg.hop > cfg.fft_size {
        return Err(invalid("need 0 < hop <= fft_size"));
    }
    if segment.len() < cfg.fft_size {
        return Err(invalid(format!(
            "segment of {} samples is shorter than the {}-sample window",
            segment.len(),
            cfg.fft_size
        )));
    }
    let frames = cfg.frames_for(segment.len());
    let bins = cfg.fft_size / 2 + 1;
    let window = cfg.window.coefficients(cfg.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];

    let out = segment
        .channels()
        .iter()
        .map(|samples| {
            let mut data = Vec::with_capacity(frames * bins);
            for t in 0..frames {
                let start = t * cfg.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(f64::from(samples[start + i]) * window[i], 0.0);
                }
                fft::fft_in_place(&mut buf, false);
                data.extend_from_slice(&buf[..bins]);
            }
            Spectrogram { frames, bins, data }
        })
        .collect();
    Ok(out)
}

/// Inclusive range of FFT bins whose center frequency lies in `[fmin, fmax]`.
pub fn select_bins(
    sample_rate: u32,
    fft_size: usize,
    fmin: f64,
    fmax: f64,
) -> Result<(usize, usize)> {
    let fs = f64::from(sample_rate);
    if fft_size == 0 || !(fmin >= 0.0 && fmin < fmax && fmax <= fs / 2.0) {
        return Err(invalid(format!(
            "invalid band [{fmin}, {fmax}] for rate {sample_rate}"
        )));
    }
    let n = fft_size as f64;
    // the epsilon keeps exact bin-edge frequencies inside the band
    let first = libm::ceil(fmin * n / fs - 1e-9).max(0.0) as usize;
    let last = (libm::floor(fmax * n / fs + 1e-9) as usize).min(fft_size / 2);
    if first > last {
        return Err(invalid(format!(
            "band [{fmin}, {fmax}] contains no FFT bin"
        )));
    }
    Ok((first, last))
}

/// Stacked `[Re X_1 .. Re X_C, Im X_1 .. Im X_C]` over the retained bins,
/// row-major `(frames, bins, 2C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub frames: usize,
    pub bins: usize,
    pub channels: usize,
    /// FFT index of the first retained bin.
    pub bin_offset: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
    pub data: Vec<f32>,
}

impl FeatureTensor {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.bins, self.channels)
    }

    pub fn mic_count(&self) -> usize {
        self.channels / 2
    }

    pub fn at(&self, frame: usize, bin: usize, channel: usize) -> f32 {
        self.data[(frame * self.bins + bin) * self.channels + channel]
    }

    /// Complex STFT value of microphone `mic` rebuilt from its Re/Im channels.
    pub fn complex(&self, frame: usize, bin: usize, mic: usize) -> Complex64 {
        let base = (frame * self.bins + bin) * self.channels;
        Complex64::new(
            f64::from(self.data[base + mic]),
            f64::from(self.data[base + self.mic_count() + mic]),
        )
    }
}

pub fn build_feature(segment: &AudioSegment, cfg: &StftConfig) -> Result<FeatureTensor> {
    cfg.validate(segment.sample_rate())?;
    let (first, last) = select_bins(segment.sample_rate(), cfg.fft_size, cfg.fmin, cfg.fmax)?;
    let spectra = stft(segment, cfg)?;
    let mics = spectra.len();
    let frames = spectra[0].frames;
    let bins = last - first + 1;
    let channels = 2 * mics;
    let mut data = vec![0.0f32; frames * bins * channels];
    for (m, spec) in spectra.iter().enumerate() {
        for t in 0..frames {
            for f in 0..bins {
                let x = spec.at(t, first + f);
                let base = (t * bins + f) * channels;
                data[base + m] = x.re as f32;
                data[base + mics + m] = x.im as f32;
            }
        }
    }
    Ok(FeatureTensor {
        frames,
        bins,
        channels,
        bin_offset: first,
        fft_size: cfg.fft_size,
        sample_rate: segment.sample_rate(),
        data,
    })
}

/// Cuts multichannel audio into `seg_len` segments starting every `seg_hop`
/// samples. A trailing partial segment is dropped.
pub fn segment_stream(
    audio: &[Vec<f32>],
    sample_rate: u32,
    seg_len: usize,
    seg_hop: usize,
) -> Result<Vec<AudioSegment>> {
    if seg_hop == 0 || seg_len == 0 {
        return Err(invalid("segment length and hop must be positive"));
    }
    let len = audio.first().map_or(0, Vec::len);
    if audio.iter().any(|c| c.len() != len) {
        return Err(invalid("channels differ in length"));
    }
    if len < seg_len {
        return Ok(Vec::new());
    }
    let count = (len - seg_len) / seg_hop + 1;
    (0..count)
        .map(|i| {
            let start = i * seg_hop;
            let chans = audio
                .iter()
                .map(|c| c[start..start + seg_len].to_vec())
                .collect();
            AudioSegment::new(chans, sample_rate)
        })
        .collect()
}
