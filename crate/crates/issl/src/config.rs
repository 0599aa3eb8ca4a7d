//! The single JSON run configuration shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use issl_core::detect::DetectorNetConfig;
use issl_core::predict::SpectrumNetConfig;
use issl_core::room::{ArraySpec, MixConfig, PlacementConfig, SimConfig, VadConfig};
use issl_core::{IsslConfig, StftConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "ISSL_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for simulation and inference; 0 picks one per core.
    pub workers: usize,
    pub paths: Paths,
    pub simulation: Simulation,
    pub stft: StftConfig,
    pub coding: Coding,
    pub spectrum_net: SpectrumNetConfig,
    pub detector_net: DetectorNetConfig,
    pub training: Training,
    pub eval: EvalParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus".into(),
            checkpoints: "checkpoints".into(),
            reports: "reports".into(),
        }
    }
}

impl Paths {
    pub fn spectrum_checkpoint(&self) -> PathBuf {
        self.checkpoints.join("spectrum.ckpt")
    }

    pub fn detector_checkpoint(&self) -> PathBuf {
        self.checkpoints.join("detector.ckpt")
    }

    pub fn residuals(&self) -> PathBuf {
        self.checkpoints.join("residuals.bin")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulation {
    pub rooms: usize,
    pub mixes_per_room: usize,
    /// Each mix draws its source count uniformly from `min_sources..=max_sources`.
    pub min_sources: usize,
    pub max_sources: usize,
    pub min_spacing: u32,
    pub mix: MixConfig,
    pub vad: VadConfig,
    pub placement: PlacementConfig,
    pub array: ArraySpec,
}

impl Default for Simulation {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            rooms: 10,
            mixes_per_room: 4,
            min_sources: 0,
            max_sources: 3,
            min_spacing: sim.min_spacing,
            mix: sim.mix,
            vad: sim.vad,
            placement: sim.placement,
            array: sim.array,
        }
    }
}

impl Simulation {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            mix: self.mix,
            vad: self.vad,
            min_spacing: self.min_spacing,
            placement: self.placement,
            array: self.array.clone(),
        }
    }

    /// Sample rate as an integer, as WAV headers and features need.
    pub fn sample_rate(&self) -> Result<u32> {
        let fs = self.mix.sample_rate;
        if fs >= 1.0 && fs <= f64::from(u32::MAX) && fs.fract() == 0.0 {
            Ok(fs as u32)
        } else {
            Err(CliError::Invalid(format!(
                "sample rate {fs} is not a positive integer"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Coding {
    pub sigma: f64,
    pub radius: u32,
    pub max_iterations: usize,
}

impl Default for Coding {
    fn default() -> Self {
        let issl = IsslConfig::default();
        Self {
            sigma: 8.0,
            radius: issl.radius,
            max_iterations: issl.max_iterations,
        }
    }
}

impl Coding {
    pub fn issl(&self) -> IsslConfig {
        IsslConfig {
            radius: self.radius,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    /// The last this-many rooms of a training corpus are held out for validation.
    pub validation_rooms: usize,
}

impl Default for Training {
    fn default() -> Self {
        Self {
            validation_rooms: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Matching tolerance in degrees.
    pub tolerance: u32,
    pub thresholds: Vec<f64>,
    pub nms_radius: u32,
    /// Peak floor of the rule-based stop detector.
    pub rule_floor: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            tolerance: issl_core::eval::DEFAULT_TOLERANCE,
            thresholds: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            nms_radius: 16,
            rule_floor: 0.5,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads `path`, or the defaults when none is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => CliError::Missing(p.to_path_buf()),
                    _ => CliError::io(format!("reading {}", p.display()), e),
                })?;
                Self::from_json(&text)
            }
        }
    }

    /// Applies `ISSL_SEED` when set; command-line flags are applied after this.
    pub fn apply_env(&mut self, value: Option<String>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v.trim().parse().map_err(|_| {
                CliError::Invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulation;
        let bad = |m: String| Err(CliError::Invalid(m));
        if !(self.coding.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.coding.sigma));
        }
        if self.coding.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if s.min_sources > s.max_sources || s.max_sources > 4 {
            return bad(format!(
                "need min_sources <= max_sources <= 4, got {}..={}",
                s.min_sources, s.max_sources
            ));
        }
        if s.array.geometry.len() < 2 {
            return bad("array needs at least two microphones".into());
        }
        if !(s.mix.duration > 0.0) || s.mix.segment_len == 0 {
            return bad("mix duration and segment length must be positive".into());
        }
        if !(s.vad.rel_threshold_db < 0.0) {
            return bad("VAD threshold must be negative dB".into());
        }
        let fs = s.sample_rate()?;
        self.stft.validate(fs)?;
        if s.mix.segment_len < self.stft.fft_size {
            return bad("segment shorter than the STFT window".into());
        }
        if self.eval.thresholds.is_empty() {
            return bad("at least one sweep threshold is required".into());
        }
        if !(self.eval.rule_floor > 0.0 && self.eval.rule_floor < 1.0) {
            return bad("rule_floor must lie in (0, 1)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig {
            seed: 17,
            ..RunConfig::default()
        };
        cfg.simulation.rooms = 3;
        cfg.eval.thresholds = vec![0.15, 0.45];
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 5, "simulation": {"rooms": 2}}"#).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.simulation.rooms, 2);
        assert_eq!(
            cfg.simulation.mixes_per_room,
            Simulation::default().mixes_per_room
        );
        assert_eq!(cfg.coding.sigma, 8.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            RunConfig::from_json(r#"{"coding": {"sigma": 0}}"#),
            Err(CliError::Invalid(_))
        ));
        assert!(RunConfig::from_json(r#"{"simulation": {"max_sources": 5}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"eval": {"thresholds": []}}"#).is_err());
    }

    #[test]
    fn env_seed_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_env(Some("42".into())).unwrap();
        assert_eq!(cfg.seed, 42);
        cfg.apply_env(None).unwrap();
        assert_eq!(cfg.seed, 42);
        assert!(cfg.apply_env(Some("x".into())).is_err());
    }
}
