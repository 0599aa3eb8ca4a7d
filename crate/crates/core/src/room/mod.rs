//! Shoebox room simulation: scene sampling, image-source impulse responses,
//! speech-like surrogate sources and VAD-based segment labeling.

mod mix;
mod rir;
mod source;

pub use mix::{fit_length, mix_and_label, rms_db, MixConfig, SegmentLabel, VadConfig};
pub use rir::{image_source_rir, sabine_absorption, spatialize, KERNEL_TAPS};
pub use source::synth_source;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::spectrum::{grid_distance, DoaSet};

pub type Point = [f64; 3];

/// Sources must keep at least this distance from every wall.
pub const WALL_MARGIN: f64 = 0.5;
/// Placement gives up after this many rejected draws.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Default array: four mics on a horizontal 6 cm square, counter-clockwise
/// from the (+x, +y) corner.
pub fn default_geometry() -> Vec<Point> {
    let h = 0.03;
    vec![[h, h, 0.0], [-h, h, 0.0], [-h, -h, 0.0], [h, -h, 0.0]]
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Source {
    pub position: Point,
    /// Integer azimuth in degrees, counter-clockwise from the array's +x axis.
    pub azimuth: u16,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoomScene {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub rt60: f64,
    pub array_center: Point,
    /// Mic offsets relative to `array_center`.
    pub array_geometry: Vec<Point>,
    pub sources: Vec<Source>,
}

/// RT60 band for a room of the given length: 4–6 m, 6–10 m, 10–15 m.
pub fn rt60_band(length: f64) -> (f64, f64) {
    if length < 6.0 {
        (0.2, 0.5)
    } else if length < 10.0 {
        (0.3, 0.6)
    } else {
        (0.4, 0.7)
    }
}

impl RoomScene {
    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn surface(&self) -> f64 {
        2.0 * (self.length * self.width + self.length * self.height + self.width * self.height)
    }

    pub fn mic_positions(&self) -> Vec<Point> {
        self.array_geometry
            .iter()
            .map(|o| {
                [
                    self.array_center[0] + o[0],
                    self.array_center[1] + o[1],
                    self.array_center[2] + o[2],
                ]
            })
            .collect()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.iter().all(|v| v.is_finite())
            && (0.0..=self.length).contains(&p[0])
            && (0.0..=self.width).contains(&p[1])
            && (0.0..=self.height).contains(&p[2])
    }

    pub fn wall_clearance(&self, p: &Point) -> f64 {
        [
            p[0],
            self.length - p[0],
            p[1],
            self.width - p[1],
            p[2],
            self.height - p[2],
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    /// Azimuth of `p` seen from the array center, projected onto the
    /// horizontal plane, in degrees `[0, 360)`.
    pub fn azimuth_of(&self, p: &Point) -> f64 {
        let dy = p[1] - self.array_center[1];
        let dx = p[0] - self.array_center[0];
        let deg = libm::atan2(dy, dx).to_degrees();
        if deg < 0.0 {
            deg + 360.0
        } else {
            deg
        }
    }

    pub fn doas(&self) -> DoaSet {
        self.sources.iter().map(|s| s.azimuth).collect()
    }

    /// Checks every scene invariant: Table-1 dimension and RT60 bands,
    /// source wall margins and azimuth spacing.
    pub fn validate(&self, min_spacing: u32) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("scene: {m}")));
        if !(4.0..=15.0).contains(&self.length) {
            return bad("length outside [4, 15]");
        }
        if !(3.0 <= self.width && self.width <= self.length) {
            return bad("width outside [3, length]");
        }
        if !(2.7..=3.5).contains(&self.height) {
            return bad("height outside [2.7, 3.5]");
        }
        let (lo, hi) = rt60_band(self.length);
        if !(lo..=hi).contains(&self.rt60) {
            return bad("rt60 outside the band for this length");
        }
        for m in self.mic_positions() {
            if !self.contains(&m) {
                return bad("microphone outside the room");
            }
        }
        for s in &self.sources {
            if self.wall_clearance(&s.position) < WALL_MARGIN - 1e-12 {
                return bad("source closer than 0.5 m to a wall");
            }
        }
        for (i, a) in self.sources.iter().enumerate() {
            for b in &self.sources[i + 1..] {
                if grid_distance(i64::from(a.azimuth), i64::from(b.azimuth)) < min_spacing {
                    return bad("source azimuths closer than the minimum spacing");
                }
            }
        }
        Ok(())
    }
}

/// Array placement when sampling rooms.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ArraySpec {
    pub geometry: Vec<Point>,
    pub height: f64,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            geometry: default_geometry(),
            height: 1.2,
        }
    }
}

/// Draws a room (no sources yet). The array center lands uniformly in the
/// floor area at least 0.5 m from the walls, at `array.height`.
pub fn sample_room_with(rng_seed: u64, array: &ArraySpec) -> RoomScene {
    let mut rng = seed::rng(rng_seed);
    let length = rng.gen_range(4.0..15.0);
    let width = rng.gen_range(3.0..=length);
    let height = rng.gen_range(2.7..=3.5);
    let (lo, hi) = rt60_band(length);
    let rt60 = rng.gen_range(lo..=hi);
    let cx = rng.gen_range(WALL_MARGIN..=length - WALL_MARGIN);
    let cy = rng.gen_range(WALL_MARGIN..=width - WALL_MARGIN);
    RoomScene {
        length,
        width,
        height,
        rt60,
        array_center: [cx, cy, array.height.clamp(0.0, height)],
        array_geometry: array.geometry.clone(),
        sources: Vec::new(),
    }
}

pub fn sample_room(rng_seed: u64) -> RoomScene {
    sample_room_with(rng_seed, &ArraySpec::default())
}

/// Source placement constraints beyond the wall margin.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PlacementConfig {
    /// Minimum horizontal distance between a source and the array center.
    pub min_array_distance: f64,
    /// Source heights are drawn from this range (clipped to the wall margin).
    pub height_range: (f64, f64),
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            min_array_distance: 0.5,
            height_range: (1.2, 1.8),
        }
    }
}

/// Rejection-samples `n` sources whose integer azimuths are pairwise at least
/// `min_spacing` degrees apart.
pub fn place_sources(
    scene: &RoomScene,
    n: usize,
    min_spacing: u32,
    rng_seed: u64,
) -> Result<RoomScene> {
    place_sources_with(scene, n, min_spacing, rng_seed, &PlacementConfig::default())
}

pub fn place_sources_with(
    scene: &RoomScene,
    n: usize,
    min_spacing: u32,
    rng_seed: u64,
    placement: &PlacementConfig,
) -> Result<RoomScene> {
    if n > 4 {
        return Err(Error::InvalidInput(format!(
            "at most 4 sources supported, got {n}"
        )));
    }
    let mut out = scene.clone();
    out.sources.clear();
    if n == 0 {
        return Ok(out);
    }
    let (zlo, zhi) = (
        placement.height_range.0.max(WALL_MARGIN),
        placement.height_range.1.min(scene.height - WALL_MARGIN),
    );
    if scene.length < 2.0 * WALL_MARGIN || scene.width < 2.0 * WALL_MARGIN || zlo > zhi {
        return Err(Error::Capacity("room too small for the wall margin".into()));
    }
    let mut rng = seed::rng(rng_seed);
    let center = scene.array_center;
    'attempt: for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut sources: Vec<Source> = Vec::with_capacity(n);
        for _ in 0..n {
            let p = [
                rng.gen_range(WALL_MARGIN..=scene.length - WALL_MARGIN),
                rng.gen_range(WALL_MARGIN..=scene.width - WALL_MARGIN),
                rng.gen_range(zlo..=zhi),
            ];
            let horiz = libm::hypot(p[0] - center[0], p[1] - center[1]);
            if horiz < placement.min_array_distance {
                continue 'attempt;
            }
            let azimuth = (libm::round(out.azimuth_of(&p)) as u16) % 360;
            if sources
                .iter()
                .any(|s| grid_distance(i64::from(s.azimuth), i64::from(azimuth)) < min_spacing)
            {
                continue 'attempt;
            }
            sources.push(Source {
                position: p,
                azimuth,
            });
        }
        out.sources = sources;
        return Ok(out);
    }
    Err(Error::Capacity(format!(
        "could not place {n} sources {min_spacing} degrees apart in {MAX_PLACEMENT_ATTEMPTS} attempts"
    )))
}

/// Everything needed to synthesize one labeled multichannel mixture.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    pub mix: MixConfig,
    pub vad: VadConfig,
    pub min_spacing: u32,
    pub placement: PlacementConfig,
    pub array: ArraySpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mix: MixConfig::default(),
            vad: VadConfig::default(),
            min_spacing: 20,
            placement: PlacementConfig::default(),
            array: ArraySpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMix {
    pub scene: RoomScene,
    pub audio: Vec<Vec<f64>>,
    pub labels: Vec<SegmentLabel>,
}

/// Room `room_id` is shared by all of its mixes; placement and source
/// signals are drawn per `(room_id, mix_index)`.
pub fn simulate_mix(
    root_seed: u64,
    room_id: u64,
    mix_index: u64,
    n_sources: usize,
    cfg: &SimConfig,
) -> Result<SimulatedMix> {
    let room = sample_room_with(seed::derive(root_seed, "room", room_id), &cfg.array);
    let key = room_id.wrapping_mul(1 << 20).wrapping_add(mix_index);
    let scene = place_sources_with(
        &room,
        n_sources,
        cfg.min_spacing,
        seed::derive(root_seed, "placement", key),
        &cfg.placement,
    )?;
    let signals: Vec<Vec<f64>> = (0..n_sources as u64)
        .map(|i| {
            synth_source(
                seed::derive(root_seed, "source", key.wrapping_mul(8).wrapping_add(i)),
                cfg.mix.duration,
                cfg.mix.sample_rate,
            )
        })
        .collect();
    let (audio, labels) = mix_and_label(&scene, &signals, &cfg.vad, &cfg.mix, room_id)?;
    Ok(SimulatedMix {
        scene,
        audio,
        labels,
    })
}
