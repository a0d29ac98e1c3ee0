//! Short-time Fourier transform with a periodic Hann window.
//!
//! Both ends of the signal are padded with `n_fft - hop` zeros (plus up to
//! `hop - 1` extra on the right) so every input sample is covered by the
//! full stack of overlapping windows. The inverse is a weighted overlap-add
//! divided by the summed squared-window envelope.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView3};
use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio_io::{AudioBuffer, AudioError};

#[derive(Debug, Error)]
pub enum StftError {
    #[error("signal of {len} samples is shorter than one {n_fft}-point window")]
    SignalTooShort { len: usize, n_fft: usize },
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("spectrogram shape mismatch: {0}")]
    Shape(String),
    #[error("spectrogram contains non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self, StftError> {
        let cfg = Self {
            n_fft,
            hop,
            window: Window::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), StftError> {
        if self.n_fft < 2 || !self.n_fft.is_multiple_of(2) {
            return Err(StftError::InvalidConfig(format!(
                "n_fft must be even and >= 2, got {}",
                self.n_fft
            )));
        }
        if self.hop == 0 || !self.n_fft.is_multiple_of(self.hop) || self.hop == self.n_fft {
            return Err(StftError::InvalidConfig(format!(
                "hop {} must be a proper divisor of n_fft {}",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_freq(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn pad(&self) -> usize {
        self.n_fft - self.hop
    }

    /// Frame count produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        let extra = (self.hop - len % self.hop) % self.hop;
        (len + extra + 2 * self.pad() - self.n_fft) / self.hop + 1
    }

    pub fn window(&self) -> Vec<f64> {
        hann(self.n_fft)
    }
}

/// Periodic (DFT-even) Hann window `0.5 (1 - cos(2πi/n))`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Complex STFT coefficients indexed `(f, t, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpectrogram {
    data: Array3<Complex64>,
}

impl MixtureSpectrogram {
    pub fn new(data: Array3<Complex64>) -> Result<Self, StftError> {
        let (f, t, m) = data.dim();
        if f == 0 || t == 0 || m == 0 {
            return Err(StftError::Shape(format!("empty spectrogram ({f}, {t}, {m})")));
        }
        if data.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(StftError::NonFinite);
        }
        // keep (f, t, m) contiguous so a bin is one slice
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        Ok(Self { data })
    }

    pub fn n_freq(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_frames(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView3<'_, Complex64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    /// The `M` channel coefficients of bin `(f, t)`.
    pub fn bin(&self, f: usize, t: usize) -> &[Complex64] {
        let m = self.n_channels();
        let off = (f * self.n_frames() + t) * m;
        &self.data.as_slice().unwrap()[off..off + m]
    }
}

/// Forward STFT of every channel.
pub fn stft_forward(buffer: &AudioBuffer, cfg: &StftConfig) -> Result<MixtureSpectrogram, StftError> {
    cfg.validate()?;
    let len = buffer.frames();
    if len < cfg.n_fft {
        return Err(StftError::SignalTooShort {
            len,
            n_fft: cfg.n_fft,
        });
    }
    let n_freq = cfg.n_freq();
    let n_frames = cfg.n_frames(len);
    let n_ch = buffer.channels();
    let pad = cfg.pad();
    let win = cfg.window();
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);

    let mut out = Array3::<Complex64>::zeros((n_freq, n_frames, n_ch));
    let mut frame = vec![Complex64::default(); cfg.n_fft];
    for c in 0..n_ch {
        let x = buffer.samples().row(c);
        for t in 0..n_frames {
            let start = (t * cfg.hop) as isize - pad as isize;
            for (i, slot) in frame.iter_mut().enumerate() {
                let idx = start + i as isize;
                let v = if idx >= 0 && (idx as usize) < len {
                    x[idx as usize]
                } else {
                    0.0
                };
                *slot = Complex64::new(v * win[i], 0.0);
            }
            fft.process(&mut frame);
            for f in 0..n_freq {
                out[[f, t, c]] = frame[f];
            }
        }
    }
    MixtureSpectrogram::new(out)
}

/// Inverse STFT to `length` samples per channel.
///
/// Samples whose synthesis envelope underflows (only possible when `length`
/// exceeds what the frames cover) are set to zero and reported via `log`.
pub fn stft_inverse(
    spec: &MixtureSpectrogram,
    cfg: &StftConfig,
    length: usize,
    sample_rate: u32,
) -> Result<AudioBuffer, StftError> {
    cfg.validate()?;
    if spec.n_freq() != cfg.n_freq() {
        return Err(StftError::Shape(format!(
            "{} frequency bins do not match n_fft {}",
            spec.n_freq(),
            cfg.n_fft
        )));
    }
    if length == 0 {
        return Err(StftError::Shape("output length must be positive".into()));
    }
    let n = cfg.n_fft;
    let n_frames = spec.n_frames();
    let pad = cfg.pad();
    let win = cfg.window();
    let ifft = FftPlanner::new().plan_fft_inverse(n);

    let mut envelope = vec![0.0; length];
    for t in 0..n_frames {
        for (i, w) in win.iter().enumerate() {
            let idx = (t * cfg.hop + i) as isize - pad as isize;
            if idx >= 0 && (idx as usize) < length {
                envelope[idx as usize] += w * w;
            }
        }
    }
    let underflow = envelope.iter().filter(|&&e| e < 1e-10).count();
    if underflow > 0 {
        log::warn!("synthesis envelope underflows on {underflow} samples; zeroing them");
    }

    let mut out = Array2::<f64>::zeros((spec.n_channels(), length));
    let mut frame = vec![Complex64::default(); n];
    let scale = 1.0 / n as f64;
    for c in 0..spec.n_channels() {
        for t in 0..n_frames {
            for (f, v) in frame.iter_mut().take(cfg.n_freq()).enumerate() {
                *v = spec.data[[f, t, c]];
            }
            // Hermitian completion of the one-sided spectrum
            for f in cfg.n_freq()..n {
                frame[f] = frame[n - f].conj();
            }
            ifft.process(&mut frame);
            for (i, w) in win.iter().enumerate() {
                let idx = (t * cfg.hop + i) as isize - pad as isize;
                if idx >= 0 && (idx as usize) < length {
                    out[[c, idx as usize]] += w * frame[i].re * scale;
                }
            }
        }
        for (v, &e) in out.row_mut(c).iter_mut().zip(&envelope) {
            *v = if e < 1e-10 { 0.0 } else { *v / e };
        }
    }
    Ok(AudioBuffer::new(out, sample_rate)?)
}
