//! Command-line front end: `separate`, `synth`, `evaluate` and `bench`.
//!
//! Exit codes: 0 success (including `--help`/`--version`), 1 usage error,
//! 2 runtime failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{read_wav, write_wav, AudioBuffer, AudioError, Encoding};
use crate::harness::{run_grid, separate_buffer, synth_scene_with, write_grid_csv, HarnessError, SceneSpec};
use crate::metrics::{input_si_sdr, permutation_si_sdr, MetricError, MetricReport};
use crate::model::{SeparationConfig, DEFAULT_EPS_INIT, DEFAULT_FLOOR};
use crate::optimizer::RunOptions;
use crate::priors::GsmVariant;
use crate::stft::{StftConfig, StftError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stft(#[from] StftError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gsmnmf", version, about = "Heavy-tailed multichannel NMF source separation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Separate a multichannel WAV into source images.
    Separate(SeparateArgs),
    /// Write a synthetic multichannel scene.
    Synth(SynthArgs),
    /// Score estimated sources against references (permutation-resolved SI-SDR).
    Evaluate(EvaluateArgs),
    /// Run a JSON grid of configurations on a synthetic scene, writing CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Gaussian,
    T,
    Gg,
    Gh,
    Nig,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a finite value > 0, got {v}"))
    }
}

fn leptokurtic_beta(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 2.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 2], got {v}"))
    }
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

/// Model and optimizer flags shared by `separate`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Nig)]
    pub model: ModelKind,
    /// Student-t degrees of freedom.
    #[arg(long, default_value_t = 40.0, value_parser = positive)]
    pub nu: f64,
    /// Generalized-Gaussian shape, in (0, 2].
    #[arg(long, default_value_t = 1.6, value_parser = leptokurtic_beta)]
    pub beta: f64,
    /// GH order (the NIG variant fixes it at -1/2).
    #[arg(long, default_value_t = -0.5, value_parser = finite, allow_hyphen_values = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = 15.0, value_parser = positive)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub eta: f64,
    /// Number of NMF bases per source.
    #[arg(short = 'K', long = "bases", default_value_t = 8)]
    pub bases: usize,
    /// Number of sources (defaults to the channel count).
    #[arg(short = 'N', long = "sources")]
    pub sources: Option<usize>,
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    /// Tie each source to one channel (requires N = M).
    #[arg(long)]
    pub rank1: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower bound on the model variances.
    #[arg(long, default_value_t = DEFAULT_FLOOR, value_parser = positive)]
    pub floor: f64,
}

impl ModelArgs {
    pub fn variant(&self) -> GsmVariant {
        match self.model {
            ModelKind::Gaussian => GsmVariant::Gaussian,
            ModelKind::T => GsmVariant::StudentT { nu: self.nu },
            ModelKind::Gg => GsmVariant::LeptokurticGg { beta: self.beta },
            ModelKind::Gh => GsmVariant::Gh {
                gamma: self.gamma,
                rho: self.rho,
                eta: self.eta,
            },
            ModelKind::Nig => GsmVariant::Nig {
                rho: self.rho,
                eta: self.eta,
            },
        }
    }

    /// Effective configuration for a mixture with `n_channels` channels.
    pub fn config(&self, n_channels: usize) -> Result<SeparationConfig, CliError> {
        let cfg = SeparationConfig {
            n_sources: self.sources.unwrap_or(n_channels),
            n_bases: self.bases,
            iterations: self.iters,
            rank1: self.rank1,
            eps_init: DEFAULT_EPS_INIT,
            floor: self.floor,
            seed: self.seed,
            variant: self.variant(),
        };
        cfg.validate_for(n_channels)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct StftArgs {
    #[arg(long, default_value_t = 1024)]
    pub n_fft: usize,
    #[arg(long, default_value_t = 256)]
    pub hop: usize,
}

impl StftArgs {
    pub fn config(&self) -> Result<StftConfig, CliError> {
        StftConfig::new(self.n_fft, self.hop).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SeparateArgs {
    /// Multichannel mixture WAV.
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub stft: StftArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// JSON report path (default: `<out-dir>/report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the multichannel image of every source.
    #[arg(long)]
    pub images: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    #[arg(long = "scene-sources", default_value_t = 2)]
    pub n_sources: usize,
    #[arg(long, default_value_t = 2)]
    pub mics: usize,
    /// Scene length in seconds.
    #[arg(long, default_value_t = 3.0)]
    pub duration: f64,
    #[arg(long = "scene-seed", default_value_t = 1)]
    pub scene_seed: u64,
    /// Add white noise at this SNR (dB).
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<f64>,
}

impl SceneArgs {
    pub fn spec(&self) -> SceneSpec {
        SceneSpec {
            n_sources: self.n_sources,
            n_mics: self.mics,
            duration_s: self.duration,
            seed: self.scene_seed,
            noise_snr_db: self.snr,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub stft: StftArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Estimated sources (channel 1 of each file is scored).
    #[arg(long, num_args = 1.., required = true)]
    pub estimates: Vec<PathBuf>,
    /// Reference sources, same count as the estimates.
    #[arg(long, num_args = 1.., required = true)]
    pub references: Vec<PathBuf>,
    /// Mixture, for the input SI-SDR baseline.
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// JSON list of separation configurations.
    pub grid: PathBuf,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Per-source output files written by `separate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparateOutputs {
    pub sources: Vec<PathBuf>,
    pub images: Vec<PathBuf>,
    pub report: PathBuf,
}

pub fn cmd_separate(args: &SeparateArgs) -> Result<SeparateOutputs, CliError> {
    let stft = args.stft.config()?;
    let mixture = read_wav(&args.input)?;
    let cfg = args.model.config(mixture.channels())?;
    log::info!(
        "separating {} ({} ch, {} frames) with {} model, N = {}, K = {}",
        args.input.display(),
        mixture.channels(),
        mixture.frames(),
        cfg.variant.name(),
        cfg.n_sources,
        cfg.n_bases
    );
    let sep = separate_buffer(&mixture, &cfg, &stft, RunOptions::default())?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let mut out = SeparateOutputs {
        sources: Vec::new(),
        images: Vec::new(),
        report: args
            .report
            .clone()
            .unwrap_or_else(|| args.out_dir.join("report.json")),
    };
    for (i, img) in sep.images.iter().enumerate() {
        let path = args.out_dir.join(format!("source_{i}.wav"));
        let mono = AudioBuffer::mono(img.channel(0), img.sample_rate())?;
        write_wav(&path, &mono, Encoding::Float32)?;
        out.sources.push(path);
        if args.images {
            let path = args.out_dir.join(format!("image_{i}.wav"));
            write_wav(&path, img, Encoding::Float32)?;
            out.images.push(path);
        }
    }
    let json = sep.report.to_json()?;
    std::fs::write(&out.report, json).map_err(|e| CliError::io(&out.report, e))?;
    Ok(out)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = args.scene.spec();
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let scene = synth_scene_with(spec, args.stft.config()?)?;
    scene.save(&args.out_dir)?;
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<MetricReport, CliError> {
    if args.estimates.len() != args.references.len() {
        return Err(CliError::Usage(format!(
            "{} estimates for {} references",
            args.estimates.len(),
            args.references.len()
        )));
    }
    let load = |paths: &[PathBuf]| -> Result<Vec<AudioBuffer>, CliError> {
        paths.iter().map(|p| Ok(read_wav(p)?)).collect()
    };
    let ests = load(&args.estimates)?;
    let refs = load(&args.references)?;
    let rate = refs[0].sample_rate();
    for b in ests.iter().chain(&refs) {
        b.require_rate(rate)?;
    }
    let est: Vec<Vec<f64>> = ests.iter().map(|b| b.channel(0)).collect();
    let reference: Vec<Vec<f64>> = refs.iter().map(|b| b.channel(0)).collect();
    let mut report = permutation_si_sdr(&est, &reference)?;
    if let Some(path) = &args.mixture {
        let mix = read_wav(path)?;
        mix.require_rate(rate)?;
        report.input_si_sdr = Some(input_si_sdr(&mix.channel(0), &reference)?);
    }
    let json = serde_json::to_string_pretty(&report).expect("metric reports serialize");
    match &args.report {
        Some(path) => std::fs::write(path, json).map_err(|e| CliError::io(path, e))?,
        None => println!("{json}"),
    }
    Ok(report)
}

/// Reads a grid file: a JSON array of [`SeparationConfig`].
pub fn read_grid(path: &Path) -> Result<Vec<SeparationConfig>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfgs: Vec<SeparationConfig> = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    for (i, c) in cfgs.iter().enumerate() {
        c.validate()
            .map_err(|e| CliError::Usage(format!("{}: entry {i}: {e}", path.display())))?;
    }
    Ok(cfgs)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<usize, CliError> {
    let cfgs = read_grid(&args.grid)?;
    let spec = args.scene.spec();
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let stft = args.stft.config()?;
    let scene = synth_scene_with(spec, stft)?;
    let rows = run_grid(&scene, cfgs, &stft, args.jobs)?;
    match &args.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| CliError::io(path, e))?;
            write_grid_csv(&rows, BufWriter::new(f))?;
        }
        None => write_grid_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(rows.len())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Separate(a) => {
            let out = cmd_separate(a)?;
            log::info!("wrote {} sources, report {}", out.sources.len(), out.report.display());
        }
        Command::Synth(a) => cmd_synth(a)?,
        Command::Evaluate(a) => {
            cmd_evaluate(a)?;
        }
        Command::Bench(a) => {
            let n = cmd_bench(a)?;
            log::info!("{n} grid rows");
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
