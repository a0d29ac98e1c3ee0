//! Synthetic scenes and end-to-end experiments.
//!
//! A scene is a sum of rank-1 source images: every source is amplitude-
//! modulated noise whose energy is concentrated in its own band, and is
//! propagated to the microphones through a frequency-dependent steering
//! vector (random per-mic gain and delay, normalized to unit norm per bin).

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio_io::{write_wav, AudioBuffer, AudioError, Encoding};
use crate::linalg::MAX_DIM;
use crate::metrics::{input_si_sdr, permutation_si_sdr, MetricError, MetricReport};
use crate::model::SeparationConfig;
use crate::optimizer::{run_with, LikelihoodTrace, OptimError, RunOptions, MONOTONE_SLACK};
use crate::stft::{stft_forward, stft_inverse, MixtureSpectrogram, StftConfig, StftError};
use crate::wiener::{rank_sources_by_energy, separate};

pub const SCENE_SAMPLE_RATE: u32 = 16_000;
/// Largest inter-microphone delay drawn for steering vectors, in seconds.
const MAX_DELAY_S: f64 = 1e-3;
/// Amplitude of a source outside its dominant band (about -9 dB). Every bin
/// then carries all sources, so the spatial cues are never rank-deficient.
const OUT_OF_BAND_GAIN: f64 = 0.35;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Stft(#[from] StftError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("report i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_sources: usize,
    pub n_mics: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub noise_snr_db: Option<f64>,
}

impl SceneSpec {
    pub fn new(n_sources: usize, n_mics: usize, duration_s: f64, seed: u64) -> Self {
        Self {
            n_sources,
            n_mics,
            duration_s,
            seed,
            noise_snr_db: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_sources == 0 || self.n_sources > self.n_mics || self.n_mics > MAX_DIM {
            return Err(HarnessError::InvalidScene(format!(
                "need 1 <= n_sources <= n_mics <= {MAX_DIM}, got {} sources and {} mics",
                self.n_sources, self.n_mics
            )));
        }
        if !(self.duration_s >= 1.0 && self.duration_s.is_finite()) {
            return Err(HarnessError::InvalidScene(format!(
                "duration must be at least 1 s, got {}",
                self.duration_s
            )));
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return Err(HarnessError::InvalidScene("noise SNR must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub stft: StftConfig,
    pub mixture: AudioBuffer,
    /// Multichannel image of each source.
    pub images: Vec<AudioBuffer>,
    /// Channel-0 image of each source.
    pub references: Vec<AudioBuffer>,
    pub noise: Option<AudioBuffer>,
    /// `steering[n]` is `(F, M)`.
    pub steering: Vec<Array2<Complex64>>,
    /// Dominant band `[lo, hi)` of each source, in frequency bins.
    pub bands: Vec<(usize, usize)>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Noise concentrated in `band` (over a weaker broadband floor) under a
/// slow random amplitude envelope.
fn modulated_band_noise(
    rng: &mut ChaCha8Rng,
    len: usize,
    band: (usize, usize),
    cfg: &StftConfig,
) -> Result<Vec<f64>, HarnessError> {
    let white = AudioBuffer::mono((0..len).map(|_| gaussian(rng)).collect(), SCENE_SAMPLE_RATE)?;
    let spec = stft_forward(&white, cfg)?;
    let mut data = spec.into_data();
    for ((f, _, _), v) in data.indexed_iter_mut() {
        if f < band.0 || f >= band.1 {
            *v *= OUT_OF_BAND_GAIN;
        }
    }
    let band_only = stft_inverse(&MixtureSpectrogram::new(data)?, cfg, len, SCENE_SAMPLE_RATE)?;
    // a few slow sinusoidal components keep the envelope positive and smooth
    let comps: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.random_range(0.3..3.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let sr = SCENE_SAMPLE_RATE as f64;
    let mut out: Vec<f64> = band_only
        .channel(0)
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let t = i as f64 / sr;
            let env: f64 = comps.iter().map(|(fr, ph)| (2.0 * PI * fr * t + ph).sin()).sum::<f64>() / 3.0;
            v * (0.15 + (1.0 + env).powi(2))
        })
        .collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let scale = 0.1 / rms;
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// Unit-norm steering vectors `a_nf` from per-mic gains and delays.
fn steering_vectors(rng: &mut ChaCha8Rng, n_freq: usize, n_mics: usize, n_fft: usize) -> Array2<Complex64> {
    let gains: Vec<f64> = (0..n_mics).map(|_| rng.random_range(0.5..1.0)).collect();
    let delays: Vec<f64> = (0..n_mics)
        .map(|m| if m == 0 { 0.0 } else { rng.random_range(-MAX_DELAY_S..MAX_DELAY_S) })
        .collect();
    let sr = SCENE_SAMPLE_RATE as f64;
    let mut a = Array2::<Complex64>::zeros((n_freq, n_mics));
    for f in 0..n_freq {
        let hz = f as f64 * sr / n_fft as f64;
        for m in 0..n_mics {
            a[[f, m]] = Complex64::from_polar(gains[m], -2.0 * PI * hz * delays[m]);
        }
        let norm = a.row(f).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        a.row_mut(f).mapv_inplace(|c| c / norm);
    }
    a
}

/// Splits `[lo_bin, hi_bin)` into `n` contiguous, disjoint bands.
fn disjoint_bands(n: usize, n_freq: usize) -> Vec<(usize, usize)> {
    // leave out DC and the top eighth of the spectrum
    let lo = 4.max(n_freq / 64);
    let hi = n_freq - n_freq / 8;
    let width = (hi - lo) / n;
    (0..n).map(|i| (lo + i * width, lo + (i + 1) * width)).collect()
}

pub fn synth_scene(spec: SceneSpec) -> Result<SyntheticScene, HarnessError> {
    synth_scene_with(spec, StftConfig::default())
}

/// Rank-1 scene synthesis under an explicit STFT configuration.
pub fn synth_scene_with(spec: SceneSpec, cfg: StftConfig) -> Result<SyntheticScene, HarnessError> {
    spec.validate()?;
    cfg.validate()?;
    let len = (spec.duration_s * SCENE_SAMPLE_RATE as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bands = disjoint_bands(spec.n_sources, cfg.n_freq());
    let mut images = Vec::with_capacity(spec.n_sources);
    let mut steering = Vec::with_capacity(spec.n_sources);
    for band in &bands {
        let src = modulated_band_noise(&mut rng, len, *band, &cfg)?;
        let a = steering_vectors(&mut rng, cfg.n_freq(), spec.n_mics, cfg.n_fft);
        let s = stft_forward(&AudioBuffer::mono(src, SCENE_SAMPLE_RATE)?, &cfg)?;
        let (nf, nt, _) = s.data().dim();
        let img = Array3::from_shape_fn((nf, nt, spec.n_mics), |(f, t, m)| s.data()[[f, t, 0]] * a[[f, m]]);
        images.push(stft_inverse(&MixtureSpectrogram::new(img)?, &cfg, len, SCENE_SAMPLE_RATE)?);
        steering.push(a);
    }
    let mut mix = Array2::<f64>::zeros((spec.n_mics, len));
    for img in &images {
        mix += img.samples();
    }
    let noise = match spec.noise_snr_db {
        None => None,
        Some(snr) => {
            let signal_power = mix.iter().map(|v| v * v).sum::<f64>();
            let raw = Array2::from_shape_simple_fn((spec.n_mics, len), || gaussian(&mut rng));
            let raw_power = raw.iter().map(|v| v * v).sum::<f64>();
            let target = signal_power / 10f64.powf(snr / 10.0);
            let n = raw * (target / raw_power).sqrt();
            mix += &n;
            Some(AudioBuffer::new(n, SCENE_SAMPLE_RATE)?)
        }
    };
    let references = images
        .iter()
        .map(|img| AudioBuffer::mono(img.channel(0), SCENE_SAMPLE_RATE))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SyntheticScene {
        spec,
        stft: cfg,
        mixture: AudioBuffer::new(mix, SCENE_SAMPLE_RATE)?,
        images,
        references,
        noise,
        steering,
        bands,
    })
}

impl SyntheticScene {
    /// Writes `mixture.wav`, `ref_<n>.wav` and `scene.json` (float-32 audio).
    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        write_wav(dir.join("mixture.wav"), &self.mixture, Encoding::Float32)?;
        for (n, r) in self.references.iter().enumerate() {
            write_wav(dir.join(format!("ref_{n}.wav")), r, Encoding::Float32)?;
        }
        let meta = SceneMeta {
            spec: self.spec,
            stft: self.stft,
            bands: self.bands.clone(),
            steering: self
                .steering
                .iter()
                .map(|a| a.rows().into_iter().map(|r| r.iter().map(|c| [c.re, c.im]).collect()).collect())
                .collect(),
        };
        std::fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// Scene description stored next to the audio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMeta {
    pub spec: SceneSpec,
    pub stft: StftConfig,
    pub bands: Vec<(usize, usize)>,
    /// `steering[n][f][m] = [re, im]`.
    pub steering: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Everything an experiment produces, in a JSON-friendly form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub config: SeparationConfig,
    pub stft: StftConfig,
    pub scene: Option<SceneSpec>,
    pub seed: u64,
    pub ll_trace: LikelihoodTrace,
    pub per_source_metrics: Option<MetricReport>,
    pub runtime_ms: f64,
    /// Largest IP post-condition residual seen during the run.
    pub max_q_residual: f64,
    /// Relative error of `Σ_n x̂_n` against the mixture spectrogram.
    pub partition_error: f64,
    pub monotone: bool,
    /// Channel-0 rendering order: most energetic source first.
    pub source_order: Vec<usize>,
}

impl SeparationReport {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Separation output: report plus rendered images.
#[derive(Debug, Clone)]
pub struct Separation {
    pub report: SeparationReport,
    /// Multichannel images, in `report.source_order`.
    pub images: Vec<AudioBuffer>,
}

/// STFT, optimization, Wiener filtering and iSTFT on one multichannel buffer.
pub fn separate_buffer(
    mixture: &AudioBuffer,
    cfg: &SeparationConfig,
    stft_cfg: &StftConfig,
    opts: RunOptions,
) -> Result<Separation, HarnessError> {
    let clock = Instant::now();
    let x = stft_forward(mixture, stft_cfg)?;
    let out = run_with(&x, cfg, opts, |s| {
        log::debug!("iteration {} log-likelihood {:.6e}", s.iteration, s.log_likelihood);
    })?;
    let imgs = separate(&x, &out.params)?;
    let err: f64 = (&imgs.sum() - x.data()).iter().map(|c| c.norm_sqr()).sum();
    let norm: f64 = x.data().iter().map(|c| c.norm_sqr()).sum();
    let partition_error = if norm > 0.0 { (err / norm).sqrt() } else { err.sqrt() };
    let order = rank_sources_by_energy(&imgs);
    let rendered = imgs.render(stft_cfg, mixture.frames(), mixture.sample_rate())?;
    let images = order.iter().map(|&n| rendered[n].clone()).collect();
    let report = SeparationReport {
        config: *cfg,
        stft: *stft_cfg,
        scene: None,
        seed: cfg.seed,
        monotone: out.trace.is_monotone(MONOTONE_SLACK),
        ll_trace: out.trace,
        per_source_metrics: None,
        runtime_ms: clock.elapsed().as_secs_f64() * 1e3,
        max_q_residual: out.q_residuals.iter().copied().fold(0.0, f64::max),
        partition_error,
        source_order: order,
    };
    Ok(Separation { report, images })
}

/// Separates a scene and scores the channel-0 estimates against its references.
pub fn run_experiment(
    scene: &SyntheticScene,
    cfg: &SeparationConfig,
    stft_cfg: &StftConfig,
) -> Result<SeparationReport, HarnessError> {
    let sep = separate_buffer(&scene.mixture, cfg, stft_cfg, RunOptions::default())?;
    let mut report = sep.report;
    report.scene = Some(scene.spec);
    let refs: Vec<Vec<f64>> = scene.references.iter().map(|r| r.channel(0)).collect();
    let ests: Vec<Vec<f64>> = sep.images.iter().take(refs.len()).map(|b| b.channel(0)).collect();
    if ests.len() == refs.len() {
        let mut metrics = permutation_si_sdr(&ests, &refs)?;
        metrics.input_si_sdr = Some(input_si_sdr(&scene.mixture.channel(0), &refs)?);
        report.per_source_metrics = Some(metrics);
    } else {
        log::warn!(
            "{} estimates for {} references; metrics skipped",
            ests.len(),
            refs.len()
        );
    }
    Ok(report)
}

/// SHA-256 of the canonical JSON of a configuration, as hex.
pub fn config_hash(cfg: &SeparationConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("configs serialize");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Drops repeated configurations, keeping the first occurrence.
pub fn dedup_configs(cfgs: Vec<SeparationConfig>) -> Vec<SeparationConfig> {
    let mut seen = std::collections::HashSet::new();
    cfgs.into_iter().filter(|c| seen.insert(config_hash(c))).collect()
}

/// One line of the grid summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config_hash: String,
    pub model: String,
    pub n_sources: usize,
    pub n_bases: usize,
    pub iterations: usize,
    pub rank1: bool,
    pub seed: u64,
    pub mean_si_sdr: Option<f64>,
    pub input_si_sdr: Option<f64>,
    pub improvement_db: Option<f64>,
    pub runtime_ms: f64,
    pub final_log_likelihood: Option<f64>,
}

impl GridRow {
    pub fn from_report(r: &SeparationReport) -> Self {
        let m = r.per_source_metrics.as_ref();
        Self {
            config_hash: config_hash(&r.config),
            model: r.config.variant.name().to_string(),
            n_sources: r.config.n_sources,
            n_bases: r.config.n_bases,
            iterations: r.config.iterations,
            rank1: r.config.rank1,
            seed: r.seed,
            mean_si_sdr: m.map(|m| m.mean_si_sdr),
            input_si_sdr: m.and_then(|m| m.input_si_sdr),
            improvement_db: m.and_then(|m| m.improvement()),
            runtime_ms: r.runtime_ms,
            final_log_likelihood: r.ll_trace.last(),
        }
    }
}

const GRID_HEADER: [&str; 12] = [
    "config_hash",
    "model",
    "n_sources",
    "n_bases",
    "iterations",
    "rank1",
    "seed",
    "mean_si_sdr",
    "input_si_sdr",
    "improvement_db",
    "runtime_ms",
    "final_log_likelihood",
];

/// CSV with a fixed header; an empty grid yields the header alone.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(GRID_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every (deduplicated) configuration on the scene with `jobs` workers.
/// Rows come back in input order regardless of scheduling.
pub fn run_grid(
    scene: &SyntheticScene,
    cfgs: Vec<SeparationConfig>,
    stft_cfg: &StftConfig,
    jobs: usize,
) -> Result<Vec<GridRow>, HarnessError> {
    let cfgs = dedup_configs(cfgs);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<GridRow, HarnessError>>>> =
        cfgs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(cfgs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= cfgs.len() {
                    break;
                }
                let r = run_experiment(scene, &cfgs[i], stft_cfg).map(|rep| GridRow::from_report(&rep));
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every config was run"))
        .collect()
}
