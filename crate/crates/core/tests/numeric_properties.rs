//! Property tests for the small dense kernels, audio I/O, STFT and model
//! normalization, each against an independent oracle.

use gsmnmf::audio_io::{read_wav, write_wav, AudioBuffer, Encoding, PCM16_MAX};
use gsmnmf::linalg::SmallComplexMatrix;
use gsmnmf::model::ModelParams;
use gsmnmf::optimizer::log_likelihood;
use gsmnmf::priors::GsmVariant;
use gsmnmf::stft::{stft_forward, stft_inverse, MixtureSpectrogram, StftConfig};
use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(m: usize, seed: u64) -> SmallComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<Complex64> = (0..m * m)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    SmallComplexMatrix::from_row_major(m, &entries).unwrap()
}

fn to_nalgebra(a: &SmallComplexMatrix) -> DMatrix<Complex64> {
    let m = a.dim();
    DMatrix::from_row_slice(m, m, &a.to_row_major())
}

fn max_abs_diff(a: &SmallComplexMatrix, b: &SmallComplexMatrix) -> f64 {
    (a - b).max_abs()
}

fn random_params(seed: u64, n: usize, m: usize, k: usize, nf: usize, nt: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = (0..nf)
        .map(|f| {
            let mut a = random_matrix(m, seed * 100 + f as u64);
            for i in 0..m {
                a[(i, i)] += Complex64::new(2.0, 0.0);
            }
            a
        })
        .collect();
    ModelParams {
        w: Array3::from_shape_simple_fn((n, k, nf), || rng.random_range(0.01..4.0)),
        h: Array3::from_shape_simple_fn((n, k, nt), || rng.random_range(0.01..4.0)),
        q,
        g: Array2::from_shape_simple_fn((n, m), || rng.random_range(0.01..2.0)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn double_inverse_is_identity(m in 1usize..=8, seed in 0u64..10_000) {
        let a = random_matrix(m, seed);
        let cond = {
            let svd = to_nalgebra(&a).singular_values();
            svd.max() / svd.min()
        };
        prop_assume!(cond <= 1e6);
        let back = a.invert().unwrap().invert().unwrap();
        prop_assert!(max_abs_diff(&back, &a) <= 1e-8 * a.max_abs());
    }

    #[test]
    fn log_det_gram_matches_eigenvalues(m in 1usize..=8, seed in 0u64..10_000, scale in -3.0..3.0f64) {
        let a = random_matrix(m, seed).scale(10f64.powf(scale));
        let na = to_nalgebra(&a);
        prop_assume!({ let s = na.singular_values(); s.max() / s.min() <= 1e6 });
        let gram = &na * na.adjoint();
        let oracle: f64 = gram.symmetric_eigen().eigenvalues.iter().map(|l| l.ln()).sum();
        let got = a.log_abs_det_gram().unwrap();
        prop_assert!((got - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{} vs {}", got, oracle);
    }

    #[test]
    fn float32_wav_round_trip(channels in 1usize..4, frames in 1usize..300, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // values representable in f32 survive exactly
        let data = Array2::from_shape_simple_fn((channels, frames), || rng.random_range(-4.0f32..4.0) as f64);
        let buf = AudioBuffer::new(data, 16_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        write_wav(&path, &buf, Encoding::Float32).unwrap();
        prop_assert_eq!(read_wav(&path).unwrap(), buf);
    }

    #[test]
    fn pcm16_round_trip_error_bounded(frames in 1usize..300, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_simple_fn((2, frames), || rng.random_range(-1.0..PCM16_MAX));
        let buf = AudioBuffer::new(data, 8_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        write_wav(&path, &buf, Encoding::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        let err = (back.samples() - buf.samples()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(err <= 2f64.powi(-15));
    }

    #[test]
    fn stft_perfect_reconstruction(log_n in 5u32..9, extra in 0usize..500, seed in 0u64..1000) {
        let n_fft = 1usize << log_n;
        let cfg = StftConfig::new(n_fft, n_fft / 4).unwrap();
        let len = n_fft + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_simple_fn((2, len), || rng.random_range(-1.0..1.0));
        let buf = AudioBuffer::new(data, 16_000).unwrap();
        let spec = stft_forward(&buf, &cfg).unwrap();
        let back = stft_inverse(&spec, &cfg, len, 16_000).unwrap();
        let err = (back.samples() - buf.samples()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(err <= 1e-10, "n_fft {} len {}: {:e}", n_fft, len, err);
    }

    #[test]
    fn normalize_idempotent_and_likelihood_preserving(seed in 0u64..10_000, m in 1usize..4, n in 1usize..4) {
        let (nf, nt) = (5, 7);
        let p = random_params(seed, n, m, 3, nf, nt);
        let once = p.clone().normalized().unwrap();
        let twice = once.clone().normalized().unwrap();
        let d = (&once.w - &twice.w).iter().chain((&once.h - &twice.h).iter()).chain((&once.g - &twice.g).iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(d <= 1e-12);
        for f in 0..nf {
            prop_assert!(max_abs_diff(&once.q[f], &twice.q[f]) <= 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x = MixtureSpectrogram::new(Array3::from_shape_simple_fn((nf, nt, m), || {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })).unwrap();
        let v = GsmVariant::Nig { rho: 15.0, eta: 1.0 };
        let a = log_likelihood(&x, &p, v, 1e-10).unwrap();
        let b = log_likelihood(&x, &once, v, 1e-10).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn source_covariances_hermitian_psd(seed in 0u64..10_000, m in 1usize..5) {
        let p = random_params(seed, 2, m, 2, 3, 4);
        for n in 0..2 {
            for f in 0..3 {
                let scm = to_nalgebra(&p.reconstruct_scm(n, f).unwrap());
                prop_assert!((&scm - scm.adjoint()).iter().all(|c| c.norm() <= 1e-12 * scm.norm()));
                let eig = scm.clone().symmetric_eigen().eigenvalues;
                prop_assert!(eig.iter().all(|&l| l >= -1e-12 * scm.norm()));
            }
        }
    }
}
