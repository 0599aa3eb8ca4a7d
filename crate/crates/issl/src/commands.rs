//! One function per subcommand. Each takes the resolved configuration and
//! explicit paths, and returns what it wrote.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use issl_core::detect::{
    build_residual_dataset, train_detector, NetDetector, ResidualSample, RuleDetector,
};
use issl_core::eval::{evaluate, sweep_thresholds, EvalReport, SweepConfig, SweepRow};
use issl_core::model::ModelParams;
use issl_core::nn::{CurvePoint, TrainOutcome};
use issl_core::predict::{train_spectrum_net, SpectrumNetPredictor, SrpPhat};
use issl_core::spectrum::{add_uniform_noise, encode};
use issl_core::{issl_estimate, seed, DoaSet, SpatialSpectrum, SpectrumPredictor, StopDetector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{read_jsonl, simulate_corpus, write_jsonl, Corpus, LabeledSegment, Manifest};
use crate::error::{CliError, Result};
use crate::formats;

/// Where spatial spectra come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumSource {
    Srp,
    Net(PathBuf),
    /// Gaussian codings of the labels, optionally with uniform noise added.
    Oracle {
        noise: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorChoice {
    Rule,
    Net(PathBuf),
}

/// One localization result per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeRecord {
    pub mix: usize,
    pub segment_index: usize,
    pub doas: Vec<u16>,
    pub count: usize,
    pub iterations_run: usize,
    pub peaks: Vec<f64>,
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("creating {}", dir.display()), e)),
        _ => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    ensure_parent(path)?;
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Missing(path.to_path_buf()),
            _ => CliError::io(format!("opening {}", path.display()), e),
        })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    formats::read_checkpoint(open(path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    formats::write_checkpoint(create(path)?, params)
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Training curve next to a checkpoint: `spectrum.ckpt` -> `spectrum.curve.csv`.
pub fn curve_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("curve.csv")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut csv = String::from("step,loss,val_loss\n");
    for c in curve {
        let _ = writeln!(csv, "{},{},{}", c.step, c.loss, c.val_loss);
    }
    write_text(path, &csv)
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    simulate_corpus(cfg, out)
}

/// Splits segments into training and validation by room: the last
/// `validation_rooms` rooms are held out when enough rooms exist.
fn split_by_room<T: Clone>(
    cfg: &RunConfig,
    corpus: &Corpus,
    items: &[T],
    room: impl Fn(&T) -> u64,
) -> (Vec<T>, Vec<T>) {
    let rooms = corpus.manifest.rooms as u64;
    let held = cfg.training.validation_rooms as u64;
    if held == 0 || held >= rooms {
        return (items.to_vec(), Vec::new());
    }
    items.iter().cloned().partition(|t| room(t) < rooms - held)
}

pub fn cmd_train_spectrum(cfg: &RunConfig, corpus_dir: &Path, out: &Path) -> Result<TrainOutcome> {
    let corpus = Corpus::open(corpus_dir)?;
    let segments = corpus.segments(&cfg.stft, |_| true)?;
    if segments.is_empty() {
        return Err(CliError::Invalid(format!(
            "corpus {} has no segments",
            corpus_dir.display()
        )));
    }
    let (train, val) = split_by_room(cfg, &corpus, &segments, |s| s.room_id);
    let pairs = |v: &[LabeledSegment]| -> Vec<_> {
        v.iter()
            .map(|s| (s.feature.clone(), encode(&s.doas, cfg.coding.sigma)))
            .collect()
    };
    let mut net_cfg = cfg.spectrum_net.clone();
    net_cfg.train.seed = seed::derive(cfg.seed, "train-spectrum", net_cfg.train.seed);
    let (params, outcome) = train_spectrum_net(&net_cfg, &pairs(&train), &pairs(&val))?;
    save_checkpoint(out, &params)?;
    write_curve(&curve_path(out), &outcome.curve)?;
    Ok(outcome)
}

/// Spectra for `segments` from the chosen source, in order.
pub fn predict_spectra(
    cfg: &RunConfig,
    segments: &[LabeledSegment],
    source: &SpectrumSource,
) -> Result<Vec<SpatialSpectrum>> {
    let run = |p: &(dyn SpectrumPredictor + Sync)| -> Result<Vec<SpatialSpectrum>> {
        segments
            .par_iter()
            .map(|s| p.predict(&s.feature).map_err(CliError::from))
            .collect()
    };
    match source {
        SpectrumSource::Srp => {
            let fs_hz = cfg.simulation.sample_rate()?;
            run(&SrpPhat::new(
                &cfg.simulation.array.geometry,
                f64::from(fs_hz),
            )?)
        }
        SpectrumSource::Net(path) => run(&SpectrumNetPredictor::new(load_checkpoint(path)?)?),
        SpectrumSource::Oracle { noise } => {
            let root = seed::derive(cfg.seed, "eval", 0);
            Ok(segments
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let clean = encode(&s.doas, cfg.coding.sigma);
                    add_uniform_noise(&clean, *noise, seed::derive(root, "noise", i as u64))
                })
                .collect())
        }
    }
}

fn residuals_for(
    cfg: &RunConfig,
    segments: &[LabeledSegment],
    source: &SpectrumSource,
) -> Result<Vec<ResidualSample>> {
    let spectra = predict_spectra(cfg, segments, source)?;
    let pairs: Vec<(SpatialSpectrum, DoaSet)> = spectra
        .into_iter()
        .zip(segments.iter().map(|s| s.doas.clone()))
        .collect();
    Ok(build_residual_dataset(&pairs, cfg.coding.radius))
}

pub fn cmd_build_residuals(
    cfg: &RunConfig,
    corpus_dir: &Path,
    source: &SpectrumSource,
    out: &Path,
) -> Result<Vec<ResidualSample>> {
    let corpus = Corpus::open(corpus_dir)?;
    let segments = corpus.segments(&cfg.stft, |_| true)?;
    let samples = residuals_for(cfg, &segments, source)?;
    formats::write_residuals(create(out)?, &samples)
        .map_err(|e| CliError::io(format!("writing {}", out.display()), e))?;
    Ok(samples)
}

/// Trains the detector on a residual file when one is given, otherwise on
/// residuals built from the corpus with `source` (room-held-out validation).
pub fn cmd_train_detector(
    cfg: &RunConfig,
    residuals: Option<&Path>,
    corpus_dir: &Path,
    source: &SpectrumSource,
    out: &Path,
) -> Result<TrainOutcome> {
    let (train, val) = match residuals {
        Some(path) => {
            let samples = formats::read_residuals(open(path)?)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
            (samples, Vec::new())
        }
        None => {
            let corpus = Corpus::open(corpus_dir)?;
            let segments = corpus.segments(&cfg.stft, |_| true)?;
            let (train, val) = split_by_room(cfg, &corpus, &segments, |s| s.room_id);
            (
                residuals_for(cfg, &train, source)?,
                residuals_for(cfg, &val, source)?,
            )
        }
    };
    let mut det_cfg = cfg.detector_net.clone();
    det_cfg.train.seed = seed::derive(cfg.seed, "train-detector", det_cfg.train.seed);
    let (params, outcome) = train_detector(&det_cfg, &train, &val)?;
    save_checkpoint(out, &params)?;
    write_curve(&curve_path(out), &outcome.curve)?;
    Ok(outcome)
}

fn detector(cfg: &RunConfig, choice: &DetectorChoice) -> Result<Box<dyn StopDetector + Sync>> {
    Ok(match choice {
        DetectorChoice::Rule => Box::new(RuleDetector::new(cfg.eval.rule_floor)?),
        DetectorChoice::Net(path) => Box::new(NetDetector::new(load_checkpoint(path)?)?),
    })
}

pub fn cmd_localize(
    cfg: &RunConfig,
    corpus_dir: &Path,
    source: &SpectrumSource,
    choice: &DetectorChoice,
    out: &Path,
) -> Result<Vec<LocalizeRecord>> {
    // fail on a missing detector before doing any inference
    let det = detector(cfg, choice)?;
    let corpus = Corpus::open(corpus_dir)?;
    let segments = corpus.segments(&cfg.stft, |_| true)?;
    let spectra = predict_spectra(cfg, &segments, source)?;
    let issl = cfg.coding.issl();
    let records: Vec<LocalizeRecord> = segments
        .par_iter()
        .zip(&spectra)
        .map(|(seg, spec)| {
            let r = issl_estimate(spec, det.as_ref(), &issl);
            LocalizeRecord {
                mix: seg.mix,
                segment_index: seg.segment_index,
                doas: r.doas.to_vec(),
                count: r.count,
                iterations_run: r.iterations_run,
                peaks: r.peaks,
            }
        })
        .collect();
    ensure_parent(out)?;
    write_jsonl(out, &records)?;
    Ok(records)
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    results: &Path,
    corpus_dir: &Path,
    out: &Path,
) -> Result<EvalReport> {
    let records: Vec<LocalizeRecord> = read_jsonl(results)?;
    let corpus = Corpus::open(corpus_dir)?;
    let mut truth = Vec::new();
    for entry in &corpus.manifest.entries {
        for l in corpus.labels(entry)? {
            truth.push(((entry.index, l.segment_index), l.active_doas));
        }
    }
    if records.len() != truth.len() {
        return Err(CliError::Invalid(format!(
            "{} results for {} labeled segments",
            records.len(),
            truth.len()
        )));
    }
    let mut predicted = Vec::with_capacity(records.len());
    for (r, (key, _)) in records.iter().zip(&truth) {
        if (r.mix, r.segment_index) != *key {
            return Err(CliError::Invalid(format!(
                "result for mix {} segment {} does not line up with label mix {} segment {}",
                r.mix, r.segment_index, key.0, key.1
            )));
        }
        predicted.push(DoaSet::from_azimuths(&r.doas)?);
    }
    let labels: Vec<DoaSet> = truth.into_iter().map(|(_, d)| d).collect();
    let report = evaluate(&predicted, &labels, cfg.eval.tolerance)?;
    write_text(out, &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// CSV with one row per threshold and a final iterative row marked `none`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut csv = String::from("threshold,precision,recall,f1,detection_accuracy\n");
    for r in rows {
        let t = r
            .threshold
            .map_or_else(|| "none".to_string(), |t| t.to_string());
        let _ = writeln!(
            csv,
            "{t},{},{},{},{}",
            r.precision, r.recall, r.f1, r.detection_accuracy
        );
    }
    csv
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    corpus_dir: &Path,
    source: &SpectrumSource,
    choice: &DetectorChoice,
    out: &Path,
) -> Result<Vec<SweepRow>> {
    let det = detector(cfg, choice)?;
    let corpus = Corpus::open(corpus_dir)?;
    let segments = corpus.segments(&cfg.stft, |_| true)?;
    let spectra = predict_spectra(cfg, &segments, source)?;
    let data: Vec<(SpatialSpectrum, DoaSet)> = spectra
        .into_iter()
        .zip(segments.into_iter().map(|s| s.doas))
        .collect();
    let sweep = SweepConfig {
        tolerance: cfg.eval.tolerance,
        nms_radius: cfg.eval.nms_radius,
        issl: cfg.coding.issl(),
    };
    let rows = sweep_thresholds(&data, &cfg.eval.thresholds, det.as_ref(), &sweep)?;
    write_text(out, &sweep_csv(&rows))?;
    Ok(rows)
}
