//! Forward and inverse STFT of a multichannel signal, showing the frame
//! layout and the reconstruction error.
//!
//! `cargo run --example stft_roundtrip`

use gsmnmf::audio_io::AudioBuffer;
use gsmnmf::stft::{stft_forward, stft_inverse, StftConfig};
use ndarray::Array2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sr = 16_000;
    let len = sr as usize / 2;
    let samples = Array2::from_shape_fn((2, len), |(c, i)| {
        let t = i as f64 / sr as f64;
        (2.0 * std::f64::consts::PI * (440.0 + 220.0 * c as f64) * t).sin() * (1.0 - t)
    });
    let buf = AudioBuffer::new(samples, sr)?;
    for (n_fft, hop) in [(1024, 256), (512, 128), (256, 64)] {
        let cfg = StftConfig::new(n_fft, hop)?;
        let spec = stft_forward(&buf, &cfg)?;
        let back = stft_inverse(&spec, &cfg, len, sr)?;
        let err = (back.samples() - buf.samples()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        println!(
            "n_fft {n_fft:>4} hop {hop:>3}: {} bins x {} frames x {} channels, max error {err:.2e}",
            spec.n_freq(),
            spec.n_frames(),
            spec.n_channels()
        );
    }
    Ok(())
}
