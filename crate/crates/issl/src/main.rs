use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use issl::commands::{self, DetectorChoice, SpectrumSource};
use issl::config::SEED_ENV;
use issl::{CliError, Result, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "issl",
    version,
    about = "Iterative multi-source sound localization"
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config file and ISSL_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulation and inference (0: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate rooms, mixtures and per-segment labels.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the spectrum network on a corpus.
    TrainSpectrum {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the residual dataset the detector is trained on.
    BuildResiduals {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        spectra: SpectraArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the stop detector.
    TrainDetector {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Residual file from build-residuals; otherwise residuals are built from the corpus.
        #[arg(long)]
        spectra_from: Option<PathBuf>,
        #[command(flatten)]
        spectra: SpectraArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run iterative extraction on every segment of a corpus.
    Localize {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Predictor::Net)]
        predictor: Predictor,
        #[arg(long, value_enum, default_value_t = Detector::Net)]
        detector: Detector,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score localization results against the corpus labels.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Threshold sweep of the baseline plus one iterative row.
    Sweep {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Predictor::Net)]
        predictor: Predictor,
        #[arg(long, value_enum, default_value_t = Detector::Net)]
        detector: Detector,
        #[command(flatten)]
        models: ModelArgs,
        /// Uniform noise amplitude added to oracle spectra.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SpectraArgs {
    /// Use the Gaussian codings of the labels instead of network predictions.
    #[arg(long)]
    oracle_spectra: bool,
    /// Spectrum network checkpoint used when not in oracle mode.
    #[arg(long)]
    spectrum_checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    spectrum_checkpoint: Option<PathBuf>,
    #[arg(long)]
    detector_checkpoint: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Predictor {
    Srp,
    Net,
    Oracle,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Detector {
    Rule,
    Net,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_env(std::env::var(SEED_ENV).ok())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn spectrum_source(
    cfg: &RunConfig,
    predictor: Predictor,
    checkpoint: Option<PathBuf>,
    noise: f64,
) -> SpectrumSource {
    match predictor {
        Predictor::Srp => SpectrumSource::Srp,
        Predictor::Net => {
            SpectrumSource::Net(checkpoint.unwrap_or_else(|| cfg.paths.spectrum_checkpoint()))
        }
        Predictor::Oracle => SpectrumSource::Oracle { noise },
    }
}

fn detector_choice(
    cfg: &RunConfig,
    detector: Detector,
    checkpoint: Option<PathBuf>,
) -> DetectorChoice {
    match detector {
        Detector::Rule => DetectorChoice::Rule,
        Detector::Net => {
            DetectorChoice::Net(checkpoint.unwrap_or_else(|| cfg.paths.detector_checkpoint()))
        }
    }
}

fn training_spectra(cfg: &RunConfig, args: SpectraArgs) -> SpectrumSource {
    let predictor = if args.oracle_spectra {
        Predictor::Oracle
    } else {
        Predictor::Net
    };
    spectrum_source(cfg, predictor, args.spectrum_checkpoint, 0.0)
}

/// Fails early on a checkpoint the chosen mode needs but cannot find.
fn require(path: &std::path::Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

fn require_models(source: &SpectrumSource, detector: &DetectorChoice) -> Result<()> {
    if let SpectrumSource::Net(p) = source {
        require(p)?;
    }
    if let DetectorChoice::Net(p) = detector {
        require(p)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
    let corpus_or = |c: Option<PathBuf>| c.unwrap_or_else(|| cfg.paths.corpus.clone());
    let report = |name: &str| cfg.paths.reports.join(name);

    match cli.command {
        Command::Simulate { out } => {
            let out = corpus_or(out);
            let m = commands::cmd_simulate(&cfg, &out)?;
            println!(
                "wrote {} mixes, {} segments to {}",
                m.mixes,
                m.segments,
                out.display()
            );
        }
        Command::TrainSpectrum { corpus, out } => {
            let out = out.unwrap_or_else(|| cfg.paths.spectrum_checkpoint());
            let o = commands::cmd_train_spectrum(&cfg, &corpus_or(corpus), &out)?;
            println!(
                "best loss {:.6} at epoch {}, {} steps, wrote {}",
                o.best_val_loss,
                o.best_epoch,
                o.steps,
                out.display()
            );
        }
        Command::BuildResiduals {
            corpus,
            spectra,
            out,
        } => {
            let source = training_spectra(&cfg, spectra);
            require_models(&source, &DetectorChoice::Rule)?;
            let out = out.unwrap_or_else(|| cfg.paths.residuals());
            let samples = commands::cmd_build_residuals(&cfg, &corpus_or(corpus), &source, &out)?;
            println!(
                "wrote {} residual samples to {}",
                samples.len(),
                out.display()
            );
        }
        Command::TrainDetector {
            corpus,
            spectra_from,
            spectra,
            out,
        } => {
            let source = training_spectra(&cfg, spectra);
            match &spectra_from {
                Some(p) => require(p)?,
                None => require_models(&source, &DetectorChoice::Rule)?,
            }
            let out = out.unwrap_or_else(|| cfg.paths.detector_checkpoint());
            let o = commands::cmd_train_detector(
                &cfg,
                spectra_from.as_deref(),
                &corpus_or(corpus),
                &source,
                &out,
            )?;
            println!(
                "best loss {:.6} at epoch {}, {} steps, wrote {}",
                o.best_val_loss,
                o.best_epoch,
                o.steps,
                out.display()
            );
        }
        Command::Localize {
            corpus,
            predictor,
            detector,
            models,
            out,
        } => {
            let source = spectrum_source(&cfg, predictor, models.spectrum_checkpoint, 0.0);
            let choice = detector_choice(&cfg, detector, models.detector_checkpoint);
            require_models(&source, &choice)?;
            let out = out.unwrap_or_else(|| report("localize.jsonl"));
            let records = commands::cmd_localize(&cfg, &corpus_or(corpus), &source, &choice, &out)?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Evaluate {
            results,
            corpus,
            out,
        } => {
            let out = out.unwrap_or_else(|| report("eval.json"));
            let r = commands::cmd_evaluate(&cfg, &results, &corpus_or(corpus), &out)?;
            println!(
                "precision {:.4} recall {:.4} f1 {:.4} detection accuracy {:.4}, wrote {}",
                r.precision,
                r.recall,
                r.f1,
                r.detection_accuracy,
                out.display()
            );
        }
        Command::Sweep {
            corpus,
            predictor,
            detector,
            models,
            noise,
            out,
        } => {
            if !(noise >= 0.0) {
                return Err(CliError::Invalid(format!(
                    "noise amplitude must be non-negative, got {noise}"
                )));
            }
            let source = spectrum_source(&cfg, predictor, models.spectrum_checkpoint, noise);
            let choice = detector_choice(&cfg, detector, models.detector_checkpoint);
            require_models(&source, &choice)?;
            let out = out.unwrap_or_else(|| report("sweep.csv"));
            let rows = commands::cmd_sweep(&cfg, &corpus_or(corpus), &source, &choice, &out)?;
            print!("{}", commands::sweep_csv(&rows));
        }
    }
    Ok(())
}
