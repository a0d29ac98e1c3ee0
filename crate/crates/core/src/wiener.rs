//! Multichannel Wiener reconstruction of source images.
//!
//! In the projected domain the model covariance is diagonal, so the
//! posterior mean of each source image is a per-channel gain followed by
//! back-projection through `Q_f^{-1}`. The impulse variables cancel out,
//! which makes the filter identical for every prior variant.

use ndarray::{Array3, Array4, Axis};
use num_complex::Complex64;

use crate::audio_io::AudioBuffer;
use crate::model::{source_psd, ModelParams};
use crate::optimizer::OptimError;
use crate::stft::{stft_inverse, MixtureSpectrogram, StftConfig, StftError};

/// Estimated multichannel images indexed `(n, f, t, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceImages {
    pub data: Array4<Complex64>,
}

impl SourceImages {
    pub fn n_sources(&self) -> usize {
        self.data.dim().0
    }

    /// Image of source `n` as a spectrogram.
    pub fn image(&self, n: usize) -> MixtureSpectrogram {
        MixtureSpectrogram::new(self.data.index_axis(Axis(0), n).to_owned())
            .expect("source images are finite")
    }

    /// `Σ_n x̂_n`.
    pub fn sum(&self) -> Array3<Complex64> {
        self.data.sum_axis(Axis(0))
    }

    /// Time-domain rendering of every channel of every source.
    pub fn render(
        &self,
        cfg: &StftConfig,
        length: usize,
        sample_rate: u32,
    ) -> Result<Vec<AudioBuffer>, StftError> {
        (0..self.n_sources())
            .map(|n| stft_inverse(&self.image(n), cfg, length, sample_rate))
            .collect()
    }
}

/// `x̂_n = Q_f^{-1} (gain_n ⊙ Q_f x)` with `gain_nm = λ_n g̃_nm / Σ_n' λ_n' g̃_n'm`.
///
/// Bins where every source has zero variance in a channel split that
/// channel evenly.
pub fn separate(x: &MixtureSpectrogram, params: &ModelParams) -> Result<SourceImages, OptimError> {
    let d = params.dims();
    if (x.n_freq(), x.n_frames(), x.n_channels()) != (d.n_freq, d.n_frames, d.n_channels) {
        return Err(OptimError::Shape("spectrogram and parameters disagree".into()));
    }
    let (n_src, nf, nt, m) = (d.n_sources, d.n_freq, d.n_frames, d.n_channels);
    let lam = source_psd(params);
    let mut out = Array4::<Complex64>::zeros((n_src, nf, nt, m));
    let mut gains = vec![0.0; n_src * m];
    for f in 0..nf {
        let q = &params.q[f];
        let q_inv = q.invert().map_err(|source| OptimError::Singular { f, source })?;
        for t in 0..nt {
            let z = q.mul_vec(x.bin(f, t));
            for j in 0..m {
                let den: f64 = (0..n_src).map(|n| lam[[n, f, t]] * params.g[[n, j]]).sum();
                for n in 0..n_src {
                    gains[n * m + j] = if den > 0.0 {
                        lam[[n, f, t]] * params.g[[n, j]] / den
                    } else {
                        1.0 / n_src as f64
                    };
                }
            }
            for n in 0..n_src {
                let masked: Vec<Complex64> = (0..m).map(|j| z[j] * gains[n * m + j]).collect();
                let img = q_inv.mul_vec(&masked);
                for (j, v) in img.into_iter().enumerate() {
                    out[[n, f, t, j]] = v;
                }
            }
        }
    }
    Ok(SourceImages { data: out })
}

/// Source indices by decreasing mean energy; ties keep the lower index first.
pub fn rank_sources_by_energy(images: &SourceImages) -> Vec<usize> {
    let energy: Vec<f64> = images
        .data
        .outer_iter()
        .map(|img| img.iter().map(|c| c.norm_sqr()).sum::<f64>() / img.len() as f64)
        .collect();
    let mut order: Vec<usize> = (0..energy.len()).collect();
    // stable sort keeps index order on ties
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SmallComplexMatrix;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_case(n: usize, seed: u64) -> (MixtureSpectrogram, ModelParams) {
        let (f, t, m, k) = (4, 5, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = MixtureSpectrogram::new(Array3::from_shape_simple_fn((f, t, m), || {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }))
        .unwrap();
        let mut q = Vec::new();
        for _ in 0..f {
            let mut a = SmallComplexMatrix::identity(m);
            for i in 0..m {
                for j in 0..m {
                    a[(i, j)] += Complex64::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
                }
            }
            q.push(a);
        }
        let p = ModelParams {
            w: Array3::from_shape_simple_fn((n, k, f), || rng.random_range(0.0..1.0)),
            h: Array3::from_shape_simple_fn((n, k, t), || rng.random_range(0.0..1.0)),
            q,
            g: Array2::from_shape_simple_fn((n, m), || rng.random_range(0.01..1.0)),
        };
        (x, p)
    }

    #[test]
    fn single_source_gets_everything() {
        let (x, p) = random_case(1, 1);
        let s = separate(&x, &p).unwrap();
        let diff = (&s.data.index_axis(Axis(0), 0) - x.data())
            .iter()
            .fold(0.0f64, |a, c| a.max(c.norm()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn partition_of_unity() {
        let (x, p) = random_case(3, 2);
        let s = separate(&x, &p).unwrap();
        let err: f64 = (&s.sum() - x.data()).iter().map(|c| c.norm_sqr()).sum();
        let norm: f64 = x.data().iter().map(|c| c.norm_sqr()).sum();
        assert!((err / norm).sqrt() < 1e-12);
    }

    #[test]
    fn identical_sources_split_evenly() {
        let (x, mut p) = random_case(2, 3);
        let w0 = p.w.index_axis(Axis(0), 0).to_owned();
        let h0 = p.h.index_axis(Axis(0), 0).to_owned();
        let g0 = p.g.row(0).to_owned();
        p.w.index_axis_mut(Axis(0), 1).assign(&w0);
        p.h.index_axis_mut(Axis(0), 1).assign(&h0);
        p.g.row_mut(1).assign(&g0);
        let s = separate(&x, &p).unwrap();
        for n in 0..2 {
            let diff = (&s.data.index_axis(Axis(0), n) - &x.data().mapv(|c| c * 0.5))
                .iter()
                .fold(0.0f64, |a, c| a.max(c.norm()));
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn zero_variance_bins_split_evenly() {
        let (x, mut p) = random_case(2, 4);
        p.h.fill(0.0);
        let s = separate(&x, &p).unwrap();
        let half = x.data().mapv(|c| c * 0.5);
        let diff = (&s.data.index_axis(Axis(0), 1) - &half)
            .iter()
            .fold(0.0f64, |a, c| a.max(c.norm()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn ranking_by_energy() {
        let mut data = Array4::<Complex64>::zeros((3, 2, 2, 1));
        data[[1, 0, 0, 0]] = Complex64::new(3.0, 0.0);
        data[[2, 1, 1, 0]] = Complex64::new(0.0, 1.0);
        let imgs = SourceImages { data };
        assert_eq!(rank_sources_by_energy(&imgs), vec![1, 2, 0]);
        let tie = SourceImages {
            data: Array4::from_elem((2, 1, 1, 1), Complex64::new(1.0, 0.0)),
        };
        assert_eq!(rank_sources_by_energy(&tie), vec![0, 1]);
    }

    #[test]
    fn ranking_matches_naive_sums() {
        let (x, p) = random_case(4, 5);
        let s = separate(&x, &p).unwrap();
        let order = rank_sources_by_energy(&s);
        let mut e = Vec::new();
        for n in 0..4 {
            let mut acc = 0.0;
            for f in 0..4 {
                for t in 0..5 {
                    for m in 0..3 {
                        acc += s.data[[n, f, t, m]].norm_sqr();
                    }
                }
            }
            e.push(acc);
        }
        for w in order.windows(2) {
            assert!(e[w[0]] >= e[w[1]]);
        }
    }
}
