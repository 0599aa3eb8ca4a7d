use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;

use crate::seed;

const RAMP_SECONDS: f64 = 0.01;
const MIN_SILENCE: f64 = 0.3;

/// Speech-like surrogate: a voiced harmonic series (f0 in 100–300 Hz,
/// harmonics rolling off as 1/h up to 8 kHz) plus a little breath noise,
/// gated on and off at a syllable rate of 2–6 Hz with at least 30% silence,
/// peak-normalized to 0.5.
pub fn synth_source(rng_seed: u64, duration: f64, fs: f64) -> Vec<f64> {
    assert!(duration > 0.0 && fs > 0.0);
    let mut rng = seed::rng(rng_seed);
    let n = libm::round(duration * fs) as usize;
    if n == 0 {
        return Vec::new();
    }
    let f0 = rng.gen_range(100.0..=300.0);
    let rate = rng.gen_range(2.0..=6.0);
    let mut slot = (fs / rate) as usize;
    let mut slots = n.div_ceil(slot.max(1));
    if slots < 2 {
        slot = n.div_ceil(2).max(1);
        slots = n.div_ceil(slot);
    }

    let mut gate: Vec<bool> = (0..slots).map(|_| rng.gen_bool(0.6)).collect();
    let slot_len = |i: usize| (n - i * slot).min(slot);
    if !gate.iter().any(|&g| g) {
        gate[rng.gen_range(0..slots)] = true;
    }
    loop {
        let silent: usize = (0..slots).filter(|&i| !gate[i]).map(slot_len).sum();
        if slots < 2 || silent as f64 >= MIN_SILENCE * n as f64 {
            break;
        }
        let on: Vec<usize> = (0..slots).filter(|&i| gate[i]).collect();
        if on.len() <= 1 {
            break;
        }
        gate[on[rng.gen_range(0..on.len())]] = false;
    }

    let pitch: Vec<f64> = (0..slots)
        .map(|_| f0 * rng.gen_range(0.85..=1.15))
        .collect();
    let ramp = ((RAMP_SECONDS * fs) as usize).clamp(1, slot / 2 + 1);
    let harmonics = libm::floor(8000.0f64.min(0.45 * fs) / (f0 * 1.15)).max(1.0) as usize;

    let mut out = vec![0.0; n];
    let mut phase = 0.0f64;
    for (i, o) in out.iter_mut().enumerate() {
        let s = i / slot;
        if !gate[s] {
            continue;
        }
        let local = i - s * slot;
        let len = slot_len(s);
        // ramps only where the gate actually toggles
        let mut env = 1.0;
        if (s == 0 || !gate[s - 1]) && local < ramp {
            env *= 0.5 - 0.5 * libm::cos(PI * local as f64 / ramp as f64);
        }
        let to_end = len - 1 - local;
        if (s + 1 == slots || !gate[s + 1]) && to_end < ramp {
            env *= 0.5 - 0.5 * libm::cos(PI * to_end as f64 / ramp as f64);
        }
        // glide linearly toward the next slot's pitch
        let next = if s + 1 < slots {
            pitch[s + 1]
        } else {
            pitch[s]
        };
        let f = pitch[s] + (next - pitch[s]) * local as f64 / len as f64;
        phase = (phase + 2.0 * PI * f / fs) % (2.0 * PI);
        let mut v = 0.0;
        for h in 1..=harmonics {
            v += libm::sin(phase * h as f64) / h as f64;
        }
        v += 0.05 * rng.gen_range(-1.0..=1.0);
        *o = env * v;
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut out {
            *v *= 0.5 / peak;
        }
    }
    out
}
