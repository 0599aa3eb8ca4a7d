use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{Point, RoomScene};
use crate::error::{invalid, Result};
use crate::{fft, SPEED_OF_SOUND};

/// Length of the windowed-sinc fractional-delay kernel.
pub const KERNEL_TAPS: usize = 81;
const HALF: i64 = (KERNEL_TAPS as i64 - 1) / 2;

/// Uniform wall absorption from Sabine's formula, clamped to 1.
pub fn sabine_absorption(scene: &RoomScene) -> f64 {
    (0.1611 * scene.volume() / (scene.surface() * scene.rt60)).min(1.0)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        libm::sin(PI * x) / (PI * x)
    }
}

/// Adds `amplitude` delayed by `delay` (fractional) samples into `out`.
fn add_fractional_impulse(out: &mut Vec<f64>, delay: f64, amplitude: f64) {
    let center = libm::round(delay) as i64;
    let width = (HALF + 1) as f64;
    let last = (center + HALF) as usize;
    if out.len() <= last {
        out.resize(last + 1, 0.0);
    }
    for n in (center - HALF)..=(center + HALF) {
        if n < 0 {
            continue;
        }
        let x = n as f64 - delay;
        let w = 0.5 * (1.0 + libm::cos(PI * x / width));
        out[n as usize] += amplitude * sinc(x) * w;
    }
}

/// Image-source impulse response from `source` to `mic` with reflections up
/// to `max_order`, using the scene's Sabine absorption.
pub fn image_source_rir(
    scene: &RoomScene,
    source: &Point,
    mic: &Point,
    max_order: u32,
    fs: f64,
) -> Result<Vec<f64>> {
    image_source_rir_with(scene, sabine_absorption(scene), source, mic, max_order, fs)
}

/// As [`image_source_rir`] with an explicit absorption coefficient. Each
/// image of reflection order `k` at distance `d` contributes
/// `(1-α)^k / (4πd)` at delay `d/c·fs`.
pub fn image_source_rir_with(
    scene: &RoomScene,
    alpha: f64,
    source: &Point,
    mic: &Point,
    max_order: u32,
    fs: f64,
) -> Result<Vec<f64>> {
    if !scene.contains(source) {
        return Err(invalid(format!("source {source:?} outside the room")));
    }
    if !scene.contains(mic) {
        return Err(invalid(format!("microphone {mic:?} outside the room")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("absorption {alpha} outside [0, 1]")));
    }
    let dims = [scene.length, scene.width, scene.height];
    let reflect = 1.0 - alpha;
    let order = i64::from(max_order);
    let mut out = Vec::new();

    // image coordinate along one axis: (1-2u)·s + 2nL, hitting |2n-u| walls
    let axis_images = |axis: usize| -> Vec<(f64, i64)> {
        let mut v = Vec::new();
        for n in -(order + 1)..=(order + 1) {
            for u in 0..2i64 {
                let hits = (2 * n - u).abs();
                if hits <= order {
                    let pos = (1 - 2 * u) as f64 * source[axis] + 2.0 * n as f64 * dims[axis];
                    v.push((pos, hits));
                }
            }
        }
        v
    };
    let (xs, ys, zs) = (axis_images(0), axis_images(1), axis_images(2));

    for &(x, hx) in &xs {
        for &(y, hy) in &ys {
            if hx + hy > order {
                continue;
            }
            for &(z, hz) in &zs {
                let k = hx + hy + hz;
                if k > order {
                    continue;
                }
                let gain = libm::pow(reflect, k as f64);
                if gain == 0.0 && k > 0 {
                    continue;
                }
                let (dx, dy, dz) = (x - mic[0], y - mic[1], z - mic[2]);
                let d = libm::sqrt(dx * dx + dy * dy + dz * dz);
                let d = d.max(1e-3);
                add_fractional_impulse(&mut out, d / SPEED_OF_SOUND * fs, gain / (4.0 * PI * d));
            }
        }
    }
    Ok(out)
}

/// Convolves a mono source with the RIR to every microphone. All channels
/// share one length, `signal.len() + longest_rir - 1`.
pub fn spatialize(
    signal: &[f64],
    scene: &RoomScene,
    source_index: usize,
    fs: f64,
    max_order: u32,
) -> Result<Vec<Vec<f64>>> {
    let src = scene
        .sources
        .get(source_index)
        .ok_or_else(|| invalid(format!("scene has no source {source_index}")))?;
    let mut rirs = scene
        .mic_positions()
        .iter()
        .map(|m| image_source_rir(scene, &src.position, m, max_order, fs))
        .collect::<Result<Vec<_>>>()?;
    let longest = rirs.iter().map(Vec::len).max().unwrap_or(0);
    for r in &mut rirs {
        r.resize(longest, 0.0);
    }
    Ok(rirs.iter().map(|r| fft::convolve(signal, r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::room::Source;

    fn scene() -> RoomScene {
        RoomScene {
            length: 6.0,
            width: 5.0,
            height: 3.0,
            rt60: 0.5,
            array_center: [3.0, 2.5, 1.2],
            array_geometry: crate::room::default_geometry(),
            sources: Vec::new(),
        }
    }

    #[test]
    fn sabine_examples() {
        let s = scene();
        assert!((sabine_absorption(&s) - 0.1611 * 90.0 / (126.0 * 0.5)).abs() < 1e-12);
        assert!((sabine_absorption(&s) - 0.230_14).abs() < 1e-5);
        let short = RoomScene {
            rt60: 1e-6,
            ..s.clone()
        };
        assert_eq!(sabine_absorption(&short), 1.0);
        let long = RoomScene {
            rt60: 1.0,
            ..s.clone()
        };
        assert!((sabine_absorption(&long) * 2.0 - sabine_absorption(&s)).abs() < 1e-12);
    }

    #[test]
    fn direct_path_single_kernel() {
        let s = scene();
        let src = [1.0, 2.0, 1.5];
        let mic = [1.0 + 1.715, 2.0, 1.5];
        let rir = image_source_rir(&s, &src, &mic, 0, 48_000.0).unwrap();
        let amp = 1.0 / (4.0 * PI * 1.715);
        assert!((rir[240] - amp).abs() < 1e-12);
        // integer delay: every other tap sits on a sinc zero
        for (n, v) in rir.iter().enumerate() {
            if n != 240 {
                assert!(v.abs() < 1e-12 * amp.max(1.0), "tap {n} = {v}");
            }
        }
        assert_eq!(rir.len(), 240 + 40 + 1);
    }

    #[test]
    fn full_absorption_kills_reflections() {
        let s = scene();
        let src = [1.0, 2.0, 1.5];
        let mic = [3.3, 2.7, 1.2];
        let direct = image_source_rir_with(&s, 1.0, &src, &mic, 0, 48_000.0).unwrap();
        let all = image_source_rir_with(&s, 1.0, &src, &mic, 5, 48_000.0).unwrap();
        assert_eq!(direct, all);
    }

    #[test]
    fn amplitude_falls_with_distance() {
        let s = scene();
        let src = [1.0, 2.0, 1.5];
        // 240 and 480 samples of delay, so each peak lands exactly on a tap
        let near = image_source_rir(&s, &src, &[1.0 + 1.715, 2.0, 1.5], 0, 48_000.0).unwrap();
        let far = image_source_rir(&s, &src, &[1.0 + 3.43, 2.0, 1.5], 0, 48_000.0).unwrap();
        let peak = |r: &[f64]| r.iter().copied().fold(0.0, f64::max);
        assert!((peak(&near) / peak(&far) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn outside_positions_are_rejected() {
        let s = scene();
        assert!(image_source_rir(&s, &[7.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 0, 48_000.0).is_err());
        assert!(image_source_rir(&s, &[1.0, 1.0, 1.0], &[1.0, -0.1, 1.0], 0, 48_000.0).is_err());
    }

    #[test]
    fn spatialize_impulse_and_symmetry() {
        let mut s = scene();
        // on the array's diagonal axis: mics 1 and 3 are equidistant
        s.sources.push(Source {
            position: [4.5, 4.0, 1.2],
            azimuth: 45,
        });
        let imp = [1.0];
        let out = spatialize(&imp, &s, 0, 48_000.0, 0).unwrap();
        let mics = s.mic_positions();
        let r1 = image_source_rir(&s, &s.sources[0].position, &mics[1], 0, 48_000.0).unwrap();
        assert_eq!(&out[1][..r1.len()], &r1[..]);
        for (a, b) in out[1].iter().zip(&out[3]) {
            assert!((a - b).abs() < 1e-12);
        }
        let lens: Vec<usize> = out.iter().map(Vec::len).collect();
        assert!(lens.iter().all(|&l| l == lens[0]));

        let sig: Vec<f64> = (0..500).map(|n| libm::sin(n as f64 * 0.1)).collect();
        let a = spatialize(&sig, &s, 0, 48_000.0, 1).unwrap();
        let scaled: Vec<f64> = sig.iter().map(|x| 3.0 * x).collect();
        let b = spatialize(&scaled, &s, 0, 48_000.0, 1).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            for (x, y) in ca.iter().zip(cb) {
                assert!((3.0 * x - y).abs() < 1e-10);
            }
        }
    }
}
