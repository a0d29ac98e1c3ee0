//! Multichannel WAV input/output.
//!
//! Samples live channel-major in memory (`channels × frames`) and are
//! interleaved on disk. Integer PCM is scaled by `2^(bits-1)`.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported encoding: {0}")]
    UnsupportedCodec(String),
    #[error("data chunk truncated after {frames_read} of {frames_expected} frames")]
    Truncated {
        frames_read: usize,
        frames_expected: usize,
    },
    #[error("malformed WAV: {0}")]
    Format(String),
    #[error("invalid audio buffer: {0}")]
    InvalidBuffer(String),
    #[error("sample-rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// On-disk sample encoding accepted by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
    Float32,
}

/// Finite real samples, `channels × frames`, with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Array2<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        let (c, n) = samples.dim();
        if c == 0 {
            return Err(AudioError::InvalidBuffer("zero channels".into()));
        }
        if n == 0 {
            return Err(AudioError::InvalidBuffer("zero frames".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidBuffer("sample rate must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(AudioError::InvalidBuffer(format!(
                "non-finite sample at flat index {pos}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// A single-channel buffer.
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        let n = samples.len();
        let arr = Array2::from_shape_vec((1, n), samples)
            .map_err(|e| AudioError::InvalidBuffer(e.to_string()))?;
        Self::new(arr, sample_rate)
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn frames(&self) -> usize {
        self.samples.ncols()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.row(c).to_vec()
    }

    /// Errors unless the buffer runs at `expected` Hz; never resamples.
    pub fn require_rate(&self, expected: u32) -> Result<(), AudioError> {
        if self.sample_rate != expected {
            return Err(AudioError::SampleRateMismatch {
                expected,
                got: self.sample_rate,
            });
        }
        Ok(())
    }
}

fn map_hound(path: &Path, e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) if io.kind() == ErrorKind::NotFound => {
            AudioError::NotFound(path.to_path_buf())
        }
        hound::Error::IoError(io) if io.kind() == ErrorKind::UnexpectedEof => {
            AudioError::Format("file ends inside the header".into())
        }
        hound::Error::IoError(io) => AudioError::Io {
            path: path.to_path_buf(),
            source: io,
        },
        hound::Error::Unsupported => AudioError::UnsupportedCodec("unsupported WAV format".into()),
        hound::Error::FormatError(msg) => AudioError::Format(msg.to_string()),
        hound::Error::TooWide => AudioError::UnsupportedCodec("sample width too large".into()),
        hound::Error::UnfinishedSample => AudioError::Format("unfinished sample".into()),
        hound::Error::InvalidSampleFormat => {
            AudioError::UnsupportedCodec("sample format mismatch".into())
        }
    }
}

/// Reads PCM-16, PCM-24 or IEEE float-32 RIFF/WAVE files.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::NotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::Format("zero channels".into()));
    }
    let total = reader.len() as usize;
    let frames_expected = total / channels;

    let flat: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f64;
            collect(path, reader.into_samples::<i32>(), total, channels, |v| {
                v as f64 * scale
            })?
        }
        (hound::SampleFormat::Float, 32) => {
            collect(path, reader.into_samples::<f32>(), total, channels, |v| v as f64)?
        }
        (fmt, bits) => {
            return Err(AudioError::UnsupportedCodec(format!("{fmt:?} with {bits} bits")));
        }
    };
    if flat.len() < frames_expected * channels {
        return Err(AudioError::Truncated {
            frames_read: flat.len() / channels,
            frames_expected,
        });
    }
    let frames = flat.len() / channels;
    if frames == 0 {
        return Err(AudioError::InvalidBuffer("zero frames".into()));
    }
    let mut samples = Array2::zeros((channels, frames));
    for (i, v) in flat.into_iter().enumerate() {
        samples[[i % channels, i / channels]] = v;
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

fn collect<S, I, F>(
    path: &Path,
    iter: I,
    total: usize,
    channels: usize,
    convert: F,
) -> Result<Vec<f64>, AudioError>
where
    I: Iterator<Item = Result<S, hound::Error>>,
    F: Fn(S) -> f64,
{
    let mut out = Vec::with_capacity(total);
    for item in iter {
        match item {
            Ok(v) => out.push(convert(v)),
            // hound reports a short data chunk as a generic read failure
            Err(hound::Error::IoError(_)) => {
                return Err(AudioError::Truncated {
                    frames_read: out.len() / channels,
                    frames_expected: total / channels,
                });
            }
            Err(e) => return Err(map_hound(path, e)),
        }
    }
    Ok(out)
}

/// Largest PCM-16 code as a float: `1 - 2^-15`.
pub const PCM16_MAX: f64 = 1.0 - 1.0 / 32768.0;

/// Writes the buffer interleaved; PCM-16 clamps to `[-1, 1 - 2^-15]` first.
pub fn write_wav(
    path: impl AsRef<Path>,
    buffer: &AudioBuffer,
    encoding: Encoding,
) -> Result<(), AudioError> {
    let path = path.as_ref();
    if buffer.samples.iter().any(|v| v.is_nan()) {
        return Err(AudioError::InvalidBuffer("NaN sample".into()));
    }
    let (bits, fmt) = match encoding {
        Encoding::Pcm16 => (16, hound::SampleFormat::Int),
        Encoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: buffer.channels() as u16,
        sample_rate: buffer.sample_rate,
        bits_per_sample: bits,
        sample_format: fmt,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for t in 0..buffer.frames() {
        for c in 0..buffer.channels() {
            let v = buffer.samples[[c, t]];
            let r = match encoding {
                Encoding::Pcm16 => {
                    let q = (v.clamp(-1.0, PCM16_MAX) * 32768.0).round() as i16;
                    w.write_sample(q)
                }
                Encoding::Float32 => w.write_sample(v as f32),
            };
            r.map_err(|e| map_hound(path, e))?;
        }
    }
    w.finalize().map_err(|e| map_hound(path, e))
}
