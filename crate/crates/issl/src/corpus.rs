//! On-disk corpus: one WAV, one label file and one scene file per mix, plus
//! a manifest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use issl_core::room::{simulate_mix, RoomScene, SegmentLabel};
use issl_core::{build_feature, seed, AudioSegment, DoaSet, FeatureTensor, StftConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::wav;

pub const MANIFEST: &str = "manifest.json";
pub const AZIMUTH_CONVENTION: &str =
    "integer degrees counter-clockwise from the array's +x axis, projected onto the horizontal plane";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub index: usize,
    pub room_id: u64,
    pub wav: String,
    pub labels: String,
    pub scene: String,
    pub sources: usize,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub rooms: usize,
    pub mixes_per_room: usize,
    pub mixes: usize,
    pub segments: usize,
    pub sample_rate: u32,
    pub channels: usize,
    pub segment_len: usize,
    pub entries: Vec<MixEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub azimuth_convention: String,
    pub room_id: u64,
    pub mix_index: usize,
    pub scene: RoomScene,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Sub-seed root for everything the simulator draws.
pub fn simulation_seed(root: u64) -> u64 {
    seed::derive(root, "simulate", 0)
}

/// Source count of mix `index`, uniform over `min..=max`.
fn source_count(root: u64, index: usize, min: usize, max: usize) -> usize {
    let span = (max - min + 1) as u64;
    min + (seed::derive(root, "count", index as u64) % span) as usize
}

/// Simulates the configured corpus into `out`. Mixes are generated in
/// parallel but every file depends only on `(config, seed, index)`.
pub fn simulate_corpus(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let s = &cfg.simulation;
    let fs_hz = s.sample_rate()?;
    fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let root = simulation_seed(cfg.seed);
    let sim = s.sim_config();
    let total = s.rooms * s.mixes_per_room;

    let entries = (0..total)
        .into_par_iter()
        .map(|index| -> Result<MixEntry> {
            let room_id = (index / s.mixes_per_room) as u64;
            let mix_index = (index % s.mixes_per_room) as u64;
            let n = source_count(root, index, s.min_sources, s.max_sources);
            let mix = simulate_mix(root, room_id, mix_index, n, &sim)?;

            let entry = MixEntry {
                index,
                room_id,
                wav: format!("mix_{index:04}.wav"),
                labels: format!("mix_{index:04}.labels.jsonl"),
                scene: format!("scene_{index:04}.json"),
                sources: n,
                segments: mix.labels.len(),
            };
            let audio: Vec<Vec<f32>> = mix
                .audio
                .iter()
                .map(|c| c.iter().map(|&v| v as f32).collect())
                .collect();
            let mut wav_bytes = Vec::new();
            wav::write_f32(&mut wav_bytes, &audio, fs_hz)
                .map_err(|e| CliError::io("encoding WAV", e))?;
            write_file(&out.join(&entry.wav), &wav_bytes)?;

            let mut labels = String::new();
            for l in &mix.labels {
                labels.push_str(&serde_json::to_string(l)?);
                labels.push('\n');
            }
            write_file(&out.join(&entry.labels), labels.as_bytes())?;

            let scene = SceneFile {
                azimuth_convention: AZIMUTH_CONVENTION.into(),
                room_id,
                mix_index: index,
                scene: mix.scene,
            };
            write_file(
                &out.join(&entry.scene),
                serde_json::to_string_pretty(&scene)?.as_bytes(),
            )?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        seed: cfg.seed,
        rooms: s.rooms,
        mixes_per_room: s.mixes_per_room,
        mixes: total,
        segments: entries.iter().map(|e| e.segments).sum(),
        sample_rate: fs_hz,
        channels: s.array.geometry.len(),
        segment_len: s.mix.segment_len,
        entries,
    };
    write_file(
        &out.join(MANIFEST),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

/// A corpus opened for reading.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// One labeled segment, identified by its mix and its index within the mix.
#[derive(Debug, Clone)]
pub struct LabeledSegment {
    pub mix: usize,
    pub room_id: u64,
    pub segment_index: usize,
    pub feature: FeatureTensor,
    pub doas: DoaSet,
}

fn missing_or_io(path: &Path, e: std::io::Error) -> CliError {
    match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Missing(path.to_path_buf()),
        _ => CliError::io(format!("reading {}", path.display()), e),
    }
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| missing_or_io(&path, e))?;
        let manifest = serde_json::from_str(&text)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn labels(&self, entry: &MixEntry) -> Result<Vec<SegmentLabel>> {
        let path = self.dir.join(&entry.labels);
        let file = File::open(&path).map_err(|e| missing_or_io(&path, e))?;
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }

    pub fn audio(&self, entry: &MixEntry) -> Result<(Vec<Vec<f32>>, u32)> {
        let path = self.dir.join(&entry.wav);
        let file = File::open(&path).map_err(|e| missing_or_io(&path, e))?;
        wav::read_f32(BufReader::new(file))
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Features and labels of every segment of the mixes selected by `keep`,
    /// in (mix, segment) order.
    pub fn segments(
        &self,
        stft: &StftConfig,
        keep: impl Fn(&MixEntry) -> bool + Sync,
    ) -> Result<Vec<LabeledSegment>> {
        let per_mix = self
            .manifest
            .entries
            .par_iter()
            .filter(|e| keep(e))
            .map(|entry| -> Result<Vec<LabeledSegment>> {
                let (audio, fs_hz) = self.audio(entry)?;
                let labels = self.labels(entry)?;
                let seg_len = self.manifest.segment_len;
                labels
                    .into_iter()
                    .map(|l| {
                        let end = l.t_start + seg_len;
                        if audio.iter().any(|c| c.len() < end) {
                            return Err(CliError::Invalid(format!(
                                "{}: segment {} runs past the audio",
                                entry.labels, l.segment_index
                            )));
                        }
                        let chans = audio.iter().map(|c| c[l.t_start..end].to_vec()).collect();
                        let feature = build_feature(&AudioSegment::new(chans, fs_hz)?, stft)?;
                        Ok(LabeledSegment {
                            mix: entry.index,
                            room_id: entry.room_id,
                            segment_index: l.segment_index,
                            feature,
                            doas: l.active_doas,
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(per_mix.into_iter().flatten().collect())
    }
}

/// Writes serializable records, one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file =
        File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")
            .map_err(|e| CliError::io("writing records", e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| missing_or_io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(CliError::from))
        .collect()
}
