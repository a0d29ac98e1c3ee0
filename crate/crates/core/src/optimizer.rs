//! Variational-EM loop with multiplicative and iterative-projection updates.
//!
//! One iteration is: E-step (posterior `E[1/phi]` per bin), then `W`, `H`,
//! `G̃` multiplicative updates with `ỹ` refreshed after each, then one
//! iterative-projection sweep over the rows of every `Q_f`, then
//! normalization. The marginal log-likelihood is recorded after each
//! iteration; it can only go up, so any decrease beyond a small relative
//! slack is logged as a warning.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, SmallComplexMatrix};
use crate::model::{init_params, source_psd, ytilde_from_psd, ModelError, ModelParams, SeparationConfig};
use crate::priors::{posterior_inv_phi, BinStatistic, GsmVariant, MarginalDensity, PriorError};
use crate::stft::MixtureSpectrogram;

/// Relative per-step slack tolerated before a likelihood decrease is flagged.
pub const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("singular diagonalizer at frequency {f}: {source}")]
    Singular {
        f: usize,
        #[source]
        source: LinalgError,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

/// Per-bin statistics shared by the M-step updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepCache {
    /// `|q_fm^H x_ft|²`, shape `(f, t, m)`.
    pub z_tilde: Array3<f64>,
    /// Floored model variances, shape `(f, t, m)`.
    pub y_tilde: Array3<f64>,
    /// `s_ft = Σ_m z̃/ỹ`, shape `(f, t)`.
    pub stat: Array2<f64>,
    /// `E[1/phi | z_ft]`, shape `(f, t)`.
    pub inv_phi: Array2<f64>,
    /// `inv_phi ⊙ z̃`, shape `(f, t, m)`.
    pub z_hat: Array3<f64>,
    floor: f64,
}

impl EStepCache {
    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Recomputes `ỹ` from the current parameters; `ẑ` and `inv_phi` are kept.
    pub fn refresh_y(&mut self, params: &ModelParams) {
        self.y_tilde = ytilde_from_psd(&source_psd(params), &params.g, self.floor);
    }
}

fn check_shapes(x: &MixtureSpectrogram, params: &ModelParams) -> Result<(), OptimError> {
    let d = params.dims();
    if (x.n_freq(), x.n_frames(), x.n_channels()) != (d.n_freq, d.n_frames, d.n_channels) {
        return Err(OptimError::Shape(format!(
            "spectrogram ({}, {}, {}) vs parameters ({}, {}, {})",
            x.n_freq(),
            x.n_frames(),
            x.n_channels(),
            d.n_freq,
            d.n_frames,
            d.n_channels
        )));
    }
    Ok(())
}

/// `|Q_f x_ft|²` for every bin.
pub fn project(x: &MixtureSpectrogram, params: &ModelParams) -> Result<Array3<f64>, OptimError> {
    check_shapes(x, params)?;
    let (nf, nt, m) = (x.n_freq(), x.n_frames(), x.n_channels());
    let mut z = Array3::<f64>::zeros((nf, nt, m));
    let zs = z.as_slice_mut().unwrap();
    for f in 0..nf {
        let rows: Vec<Vec<Complex64>> = (0..m).map(|i| params.q[f].row(i)).collect();
        for t in 0..nt {
            let xb = x.bin(f, t);
            let base = (f * nt + t) * m;
            for (i, row) in rows.iter().enumerate() {
                let v: Complex64 = row.iter().zip(xb).map(|(a, b)| a * b).sum();
                zs[base + i] = v.norm_sqr();
            }
        }
    }
    Ok(z)
}

/// Computes `z̃`, `ỹ`, `s`, `E[1/phi]` and `ẑ` for the current parameters.
pub fn e_step(
    x: &MixtureSpectrogram,
    params: &ModelParams,
    variant: GsmVariant,
    floor: f64,
) -> Result<EStepCache, OptimError> {
    let z_tilde = project(x, params)?;
    let y_tilde = ytilde_from_psd(&source_psd(params), &params.g, floor);
    let (nf, nt, m) = z_tilde.dim();
    let mut stat = Array2::<f64>::zeros((nf, nt));
    let mut inv_phi = Array2::<f64>::zeros((nf, nt));
    let mut z_hat = Array3::<f64>::zeros((nf, nt, m));
    let zs = z_tilde.as_slice().unwrap();
    let ys = y_tilde.as_slice().unwrap();
    let zh = z_hat.as_slice_mut().unwrap();
    for b in 0..nf * nt {
        let r = b * m..(b + 1) * m;
        let s: f64 = zs[r.clone()].iter().zip(&ys[r.clone()]).map(|(z, y)| z / y).sum();
        let e = posterior_inv_phi(BinStatistic::new(s, m)?, variant)?;
        stat[[b / nt, b % nt]] = s;
        inv_phi[[b / nt, b % nt]] = e;
        for i in r {
            zh[i] = e * zs[i];
        }
    }
    Ok(EStepCache {
        z_tilde,
        y_tilde,
        stat,
        inv_phi,
        z_hat,
        floor,
    })
}

/// `(ẑ/ỹ², 1/ỹ)` reshaped to `(F·T, M)`.
fn ratios(cache: &EStepCache) -> (Array2<f64>, Array2<f64>) {
    let (nf, nt, m) = cache.y_tilde.dim();
    let inv_y = cache.y_tilde.mapv(f64::recip);
    let r1 = &cache.z_hat * &inv_y * &inv_y;
    (
        r1.into_shape_with_order((nf * nt, m)).unwrap(),
        inv_y.into_shape_with_order((nf * nt, m)).unwrap(),
    )
}

/// `Σ_m g̃_nm r_ftm`, shape `(n, f, t)`.
fn mix_over_channels(g: &Array2<f64>, r: &Array2<f64>, nf: usize, nt: usize) -> Array3<f64> {
    g.dot(&r.t())
        .into_shape_with_order((g.nrows(), nf, nt))
        .unwrap()
}

fn sqrt_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 && num.is_finite() {
        (num / den).sqrt()
    } else {
        1.0
    }
}

/// Multiplicative update of the bases.
pub fn update_w(params: &mut ModelParams, cache: &EStepCache) {
    let (nf, nt, _) = cache.y_tilde.dim();
    let (r1, r0) = ratios(cache);
    let a = mix_over_channels(&params.g, &r1, nf, nt);
    let b = mix_over_channels(&params.g, &r0, nf, nt);
    for n in 0..params.g.nrows() {
        let h = params.h.index_axis(Axis(0), n);
        let num = h.dot(&a.index_axis(Axis(0), n).t());
        let den = h.dot(&b.index_axis(Axis(0), n).t());
        let mut w = params.w.index_axis_mut(Axis(0), n);
        ndarray::Zip::from(&mut w)
            .and(&num)
            .and(&den)
            .for_each(|w, &nu, &de| *w *= sqrt_ratio(nu, de));
    }
}

/// Multiplicative update of the activations.
pub fn update_h(params: &mut ModelParams, cache: &EStepCache) {
    let (nf, nt, _) = cache.y_tilde.dim();
    let (r1, r0) = ratios(cache);
    let a = mix_over_channels(&params.g, &r1, nf, nt);
    let b = mix_over_channels(&params.g, &r0, nf, nt);
    for n in 0..params.g.nrows() {
        let w = params.w.index_axis(Axis(0), n);
        let num = w.dot(&a.index_axis(Axis(0), n));
        let den = w.dot(&b.index_axis(Axis(0), n));
        let mut h = params.h.index_axis_mut(Axis(0), n);
        ndarray::Zip::from(&mut h)
            .and(&num)
            .and(&den)
            .for_each(|h, &nu, &de| *h *= sqrt_ratio(nu, de));
    }
}

/// Multiplicative update of the direction weights.
pub fn update_g(params: &mut ModelParams, cache: &EStepCache) {
    let (nf, nt, _) = cache.y_tilde.dim();
    let (r1, r0) = ratios(cache);
    let n_src = params.g.nrows();
    let lam = source_psd(params).into_shape_with_order((n_src, nf * nt)).unwrap();
    let num = lam.dot(&r1);
    let den = lam.dot(&r0);
    ndarray::Zip::from(&mut params.g)
        .and(&num)
        .and(&den)
        .for_each(|g, &nu, &de| *g *= sqrt_ratio(nu, de));
}

/// Outcome of one iterative-projection sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QUpdateReport {
    /// `max |q_fm^H V_fm q_fm - 1|` over updated rows.
    pub max_residual: f64,
    /// `(f, m)` pairs skipped because `Q_f V_fm` was singular.
    pub skipped: Vec<(usize, usize)>,
}

/// `V_fm = (1/T) Σ_t (E[1/phi_ft] / ỹ_ftm) x_ft x_ft^H` for all `m`.
pub fn weighted_covariances(
    x: &MixtureSpectrogram,
    cache: &EStepCache,
    f: usize,
) -> Vec<SmallComplexMatrix> {
    let (nt, m) = (x.n_frames(), x.n_channels());
    let mut v = vec![SmallComplexMatrix::zeros(m); m];
    for t in 0..nt {
        let xb = x.bin(f, t);
        let phi = cache.inv_phi[[f, t]];
        let mut outer = SmallComplexMatrix::zeros(m);
        for i in 0..m {
            for j in i..m {
                outer[(i, j)] = xb[i] * xb[j].conj();
            }
        }
        for (mi, vm) in v.iter_mut().enumerate() {
            let c = phi / cache.y_tilde[[f, t, mi]];
            for i in 0..m {
                for j in i..m {
                    vm[(i, j)] += outer[(i, j)] * c;
                }
            }
        }
    }
    let scale = 1.0 / nt as f64;
    for vm in v.iter_mut() {
        for i in 0..m {
            for j in i..m {
                vm[(i, j)] *= scale;
                vm[(j, i)] = vm[(i, j)].conj();
            }
            vm[(i, i)].im = 0.0;
        }
    }
    v
}

/// `q^H V_fm q` evaluated as `(1/T) Σ_t w_t |q^H x_ft|²`.
///
/// Summing non-negative terms avoids the cancellation of the assembled
/// quadratic form, which loses about `log10 cond(V)` digits when floored
/// variances give a few frames overwhelming weight.
fn weighted_energy(x: &MixtureSpectrogram, cache: &EStepCache, f: usize, m: usize, q: &[Complex64]) -> f64 {
    let nt = x.n_frames();
    let mut acc = 0.0;
    for t in 0..nt {
        let proj: Complex64 = q.iter().zip(x.bin(f, t)).map(|(a, b)| a.conj() * b).sum();
        acc += cache.inv_phi[[f, t]] / cache.y_tilde[[f, t, m]] * proj.norm_sqr();
    }
    acc / nt as f64
}

/// One sweep of row-wise iterative projection over every `Q_f`.
pub fn update_q(
    params: &mut ModelParams,
    x: &MixtureSpectrogram,
    cache: &EStepCache,
) -> Result<QUpdateReport, OptimError> {
    check_shapes(x, params)?;
    let m = x.n_channels();
    let mut report = QUpdateReport::default();
    for f in 0..x.n_freq() {
        let v = weighted_covariances(x, cache, f);
        for (mi, vm) in v.iter().enumerate() {
            let qv = &params.q[f] * vm;
            let q = match qv.solve_column(mi) {
                Ok(q) => q,
                Err(e) => {
                    log::warn!("skipping row {mi} of Q at frequency {f}: {e}");
                    report.skipped.push((f, mi));
                    continue;
                }
            };
            let norm = weighted_energy(x, cache, f, mi, &q);
            if !(norm > 0.0 && norm.is_finite()) {
                log::warn!("skipping row {mi} of Q at frequency {f}: q^H V q = {norm}");
                report.skipped.push((f, mi));
                continue;
            }
            let q: Vec<Complex64> = q.iter().map(|c| c / norm.sqrt()).collect();
            let residual = (weighted_energy(x, cache, f, mi, &q) - 1.0).abs();
            report.max_residual = report.max_residual.max(residual);
            let row: Vec<Complex64> = q.iter().map(|c| c.conj()).collect();
            params.q[f].set_row(mi, &row);
        }
        debug_assert_eq!(params.q[f].dim(), m);
    }
    Ok(report)
}

/// `T Σ_f log |Q_f Q_f^H|`.
fn log_det_term(params: &ModelParams, n_frames: usize) -> Result<f64, OptimError> {
    let mut acc = 0.0;
    for (f, q) in params.q.iter().enumerate() {
        acc += q
            .log_abs_det_gram()
            .map_err(|source| OptimError::Singular { f, source })?;
    }
    Ok(n_frames as f64 * acc)
}

/// Marginal log-likelihood from an E-step computed at the same parameters.
pub fn log_likelihood_from_cache(
    cache: &EStepCache,
    params: &ModelParams,
    variant: GsmVariant,
) -> Result<f64, OptimError> {
    let (nf, nt, m) = cache.y_tilde.dim();
    let density = MarginalDensity::new(variant, m)?;
    let ys = cache.y_tilde.as_slice().unwrap();
    let mut acc = 0.0;
    for b in 0..nf * nt {
        let log_det: f64 = ys[b * m..(b + 1) * m].iter().map(|y| y.ln()).sum();
        acc += density.log_density(cache.stat[[b / nt, b % nt]], log_det)?;
    }
    Ok(acc + log_det_term(params, nt)?)
}

/// `Σ_ft log p(z_ft) + T Σ_f log |Q_f Q_f^H|` with normalized densities.
pub fn log_likelihood(
    x: &MixtureSpectrogram,
    params: &ModelParams,
    variant: GsmVariant,
    floor: f64,
) -> Result<f64, OptimError> {
    let z = project(x, params)?;
    let y = ytilde_from_psd(&source_psd(params), &params.g, floor);
    let (nf, nt, m) = z.dim();
    let density = MarginalDensity::new(variant, m)?;
    let (zs, ys) = (z.as_slice().unwrap(), y.as_slice().unwrap());
    let mut acc = 0.0;
    for b in 0..nf * nt {
        let r = b * m..(b + 1) * m;
        let s: f64 = zs[r.clone()].iter().zip(&ys[r.clone()]).map(|(z, y)| z / y).sum();
        let log_det: f64 = ys[r].iter().map(|y| y.ln()).sum();
        acc += density.log_density(s, log_det)?;
    }
    Ok(acc + log_det_term(params, nt)?)
}

/// Log-likelihood values, one per completed iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTrace {
    pub values: Vec<f64>,
}

impl LikelihoodTrace {
    /// Indices `i` where `values[i] < values[i-1] - slack·|values[i-1]|`.
    pub fn violations(&self, slack: f64) -> Vec<usize> {
        self.values
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] < w[0] - slack * w[0].abs())
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.violations(slack).is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// What the progress callback sees after each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    /// 1-based iteration index.
    pub iteration: usize,
    pub log_likelihood: f64,
    pub q_residual: f64,
    pub elapsed_s: f64,
}

/// Resumable optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub config: SeparationConfig,
    pub trace: LikelihoodTrace,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), OptimError> {
        let err = |message: String| OptimError::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        let text = serde_json::to_string(self).map_err(|e| err(e.to_string()))?;
        // write-then-rename so an interrupted save never leaves a torn file
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| err(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, OptimError> {
        let err = |message: String| OptimError::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

/// Optional behaviour of [`run_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write a checkpoint here every `checkpoint_every` iterations.
    pub checkpoint_path: Option<PathBuf>,
    pub checkpoint_every: usize,
    /// Continue from this state instead of initializing.
    pub resume: Option<Checkpoint>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: ModelParams,
    pub trace: LikelihoodTrace,
    /// Largest IP post-condition residual of each iteration.
    pub q_residuals: Vec<f64>,
    /// Iterations at which the likelihood fell by more than the slack.
    pub monotonicity_warnings: Vec<usize>,
}

/// Runs `cfg.iterations` iterations from a seeded initialization.
pub fn run(x: &MixtureSpectrogram, cfg: &SeparationConfig) -> Result<RunOutput, OptimError> {
    run_with(x, cfg, RunOptions::default(), |_| {})
}

/// One full iteration; returns the IP report and the fresh E-step cache.
pub fn iterate(
    x: &MixtureSpectrogram,
    params: &mut ModelParams,
    cfg: &SeparationConfig,
    mut cache: EStepCache,
) -> Result<(QUpdateReport, EStepCache), OptimError> {
    update_w(params, &cache);
    cache.refresh_y(params);
    update_h(params, &cache);
    cache.refresh_y(params);
    if !cfg.rank1 {
        update_g(params, &cache);
        cache.refresh_y(params);
    }
    let report = update_q(params, x, &cache)?;
    params.normalize()?;
    let next = e_step(x, params, cfg.variant, cfg.floor)?;
    Ok((report, next))
}

/// [`run`] with checkpointing, resumption and a per-iteration callback.
pub fn run_with<P: FnMut(&IterationStats)>(
    x: &MixtureSpectrogram,
    cfg: &SeparationConfig,
    opts: RunOptions,
    mut progress: P,
) -> Result<RunOutput, OptimError> {
    cfg.validate_for(x.n_channels())?;
    let dims = cfg.dims(x.n_freq(), x.n_frames(), x.n_channels());
    let (mut params, mut trace, start) = match opts.resume {
        Some(cp) => {
            if cp.params.dims() != dims {
                return Err(OptimError::Shape(format!(
                    "checkpoint dims {:?} do not match {:?}",
                    cp.params.dims(),
                    dims
                )));
            }
            if cp.config.variant != cfg.variant || cp.config.rank1 != cfg.rank1 {
                return Err(OptimError::Shape("checkpoint was written for a different model".into()));
            }
            (cp.params, cp.trace, cp.iteration)
        }
        None => (init_params(dims, cfg)?, LikelihoodTrace::default(), 0),
    };
    let mut q_residuals = Vec::new();
    let mut warnings = Vec::new();
    if start >= cfg.iterations {
        return Ok(RunOutput {
            params,
            trace,
            q_residuals,
            monotonicity_warnings: warnings,
        });
    }
    let clock = Instant::now();
    let mut cache = e_step(x, &params, cfg.variant, cfg.floor)?;
    for it in start..cfg.iterations {
        let (report, next) = iterate(x, &mut params, cfg, cache)?;
        cache = next;
        let ll = log_likelihood_from_cache(&cache, &params, cfg.variant)?;
        if let Some(prev) = trace.last() {
            if ll < prev - MONOTONE_SLACK * prev.abs() {
                log::warn!(
                    "log-likelihood decreased at iteration {}: {prev:.12e} -> {ll:.12e}",
                    it + 1
                );
                warnings.push(it + 1);
            }
        }
        trace.values.push(ll);
        q_residuals.push(report.max_residual);
        progress(&IterationStats {
            iteration: it + 1,
            log_likelihood: ll,
            q_residual: report.max_residual,
            elapsed_s: clock.elapsed().as_secs_f64(),
        });
        if let Some(path) = &opts.checkpoint_path {
            let every = opts.checkpoint_every.max(1);
            if (it + 1) % every == 0 || it + 1 == cfg.iterations {
                Checkpoint {
                    iteration: it + 1,
                    config: *cfg,
                    trace: trace.clone(),
                    params: params.clone(),
                }
                .save(path)?;
            }
        }
    }
    Ok(RunOutput {
        params,
        trace,
        q_residuals,
        monotonicity_warnings: warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(f: usize, t: usize, m: usize, seed: u64) -> MixtureSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array3::from_shape_simple_fn((f, t, m), || {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        MixtureSpectrogram::new(data).unwrap()
    }

    fn config(n: usize, k: usize, variant: GsmVariant) -> SeparationConfig {
        SeparationConfig {
            n_sources: n,
            n_bases: k,
            iterations: 10,
            variant,
            seed: 3,
            ..Default::default()
        }
    }

    fn scalar_params(w: f64, h: f64, g: f64) -> ModelParams {
        ModelParams {
            w: Array3::from_elem((1, 1, 1), w),
            h: Array3::from_elem((1, 1, 1), h),
            q: vec![SmallComplexMatrix::identity(1)],
            g: Array2::from_elem((1, 1), g),
        }
    }

    #[test]
    fn gaussian_e_step_is_identity_weighting() {
        let x = random_spec(4, 5, 2, 1);
        let cfg = config(2, 2, GsmVariant::Gaussian);
        let p = init_params(cfg.dims(4, 5, 2), &cfg).unwrap();
        let c = e_step(&x, &p, cfg.variant, cfg.floor).unwrap();
        assert!(c.inv_phi.iter().all(|&v| v == 1.0));
        assert_eq!(c.z_hat, c.z_tilde);
        // Q = I
        for ((f, t, m), z) in c.z_tilde.indexed_iter() {
            assert_eq!(*z, x.data()[[f, t, m]].norm_sqr());
        }
    }

    #[test]
    fn stat_matches_naive_loop() {
        let x = random_spec(3, 4, 3, 2);
        let cfg = config(2, 2, GsmVariant::StudentT { nu: 5.0 });
        let mut p = init_params(cfg.dims(3, 4, 3), &cfg).unwrap();
        p.q[1][(0, 2)] = Complex64::new(0.3, -0.4);
        let c = e_step(&x, &p, cfg.variant, cfg.floor).unwrap();
        for f in 0..3 {
            for t in 0..4 {
                let mut s = 0.0;
                for m in 0..3 {
                    let mut z = Complex64::default();
                    for j in 0..3 {
                        z += p.q[f][(m, j)] * x.data()[[f, t, j]];
                    }
                    s += z.norm_sqr() / c.y_tilde[[f, t, m]];
                }
                assert!((c.stat[[f, t]] - s).abs() < 1e-12 * s.max(1.0));
            }
        }
    }

    #[test]
    fn fixed_point_when_model_matches() {
        let mut p = scalar_params(2.0, 3.0, 1.0);
        let cache = EStepCache {
            z_tilde: Array3::from_elem((1, 1, 1), 6.0),
            y_tilde: Array3::from_elem((1, 1, 1), 6.0),
            stat: Array2::from_elem((1, 1), 1.0),
            inv_phi: Array2::from_elem((1, 1), 1.0),
            z_hat: Array3::from_elem((1, 1, 1), 6.0),
            floor: 1e-10,
        };
        update_w(&mut p, &cache);
        update_h(&mut p, &cache);
        update_g(&mut p, &cache);
        assert_eq!((p.w[[0, 0, 0]], p.h[[0, 0, 0]], p.g[[0, 0]]), (2.0, 3.0, 1.0));
    }

    #[test]
    fn scalar_update_and_doubling() {
        let mut p = scalar_params(2.0, 3.0, 1.0);
        let mut cache = EStepCache {
            z_tilde: Array3::from_elem((1, 1, 1), 24.0),
            y_tilde: Array3::from_elem((1, 1, 1), 6.0),
            stat: Array2::from_elem((1, 1), 4.0),
            inv_phi: Array2::from_elem((1, 1), 1.0),
            z_hat: Array3::from_elem((1, 1, 1), 24.0),
            floor: 1e-10,
        };
        update_w(&mut p, &cache);
        // w √(ẑ/ỹ) = 2 · 2
        assert!((p.w[[0, 0, 0]] - 4.0).abs() < 1e-15);
        let mut q = scalar_params(2.0, 3.0, 1.0);
        cache.z_hat.mapv_inplace(|v| v * 2.0);
        update_w(&mut q, &cache);
        assert!((q.w[[0, 0, 0]] / p.w[[0, 0, 0]] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn scalar_ip_update() {
        let x = MixtureSpectrogram::new(Array3::from_shape_vec(
            (1, 2, 1),
            vec![Complex64::new(1.0, 1.0), Complex64::new(0.0, 2.0)],
        )
        .unwrap())
        .unwrap();
        let mut p = scalar_params(1.0, 1.0, 1.0);
        p.h = Array3::from_elem((1, 1, 2), 1.0);
        p.q[0][(0, 0)] = Complex64::new(0.5, 0.5);
        let c = e_step(&x, &p, GsmVariant::Gaussian, 1e-10).unwrap();
        let r = update_q(&mut p, &x, &c).unwrap();
        // V = (2 + 4) / 2 = 3, so |q|² V = 1
        assert!((p.q[0][(0, 0)].norm_sqr() * 3.0 - 1.0).abs() < 1e-14);
        assert!(r.max_residual < 1e-14);
    }

    #[test]
    fn identity_is_ip_fixed_point() {
        // V_fm = I for every m when x spans the axes evenly and ỹ = 1
        let m = 2;
        let mut data = Array3::zeros((1, 2, m));
        data[[0, 0, 0]] = Complex64::new(2f64.sqrt(), 0.0);
        data[[0, 1, 1]] = Complex64::new(0.0, 2f64.sqrt());
        let x = MixtureSpectrogram::new(data).unwrap();
        let mut p = ModelParams {
            w: Array3::from_elem((1, 1, 1), 1.0),
            h: Array3::from_elem((1, 1, 2), 1.0),
            q: vec![SmallComplexMatrix::identity(m)],
            g: Array2::from_elem((1, m), 1.0),
        };
        let c = e_step(&x, &p, GsmVariant::Gaussian, 1e-10).unwrap();
        update_q(&mut p, &x, &c).unwrap();
        assert!((&p.q[0] - &SmallComplexMatrix::identity(m)).max_abs() < 1e-15);
    }

    #[test]
    fn zero_iterations_returns_init() {
        let x = random_spec(5, 6, 2, 4);
        let mut cfg = config(2, 2, GsmVariant::Gaussian);
        cfg.iterations = 0;
        let out = run(&x, &cfg).unwrap();
        assert!(out.trace.values.is_empty());
        assert_eq!(out.params, init_params(cfg.dims(5, 6, 2), &cfg).unwrap());
    }

    #[test]
    fn runs_are_deterministic_and_monotone() {
        let x = random_spec(9, 12, 2, 5);
        for variant in [
            GsmVariant::Gaussian,
            GsmVariant::StudentT { nu: 4.0 },
            GsmVariant::LeptokurticGg { beta: 1.2 },
            GsmVariant::Nig { rho: 2.0, eta: 1.0 },
            GsmVariant::Gh {
                gamma: 1.5,
                rho: 3.0,
                eta: 0.7,
            },
        ] {
            let cfg = config(2, 2, variant);
            let a = run(&x, &cfg).unwrap();
            let b = run(&x, &cfg).unwrap();
            assert_eq!(a.trace, b.trace);
            assert!(a.trace.is_monotone(MONOTONE_SLACK), "{variant:?}: {:?}", a.trace);
            assert!(a.q_residuals.iter().all(|&r| r < 1e-10));
        }
    }

    #[test]
    fn rank1_keeps_identity_weights() {
        let x = random_spec(6, 8, 2, 6);
        let mut cfg = config(2, 2, GsmVariant::Gaussian);
        cfg.rank1 = true;
        let out = run(&x, &cfg).unwrap();
        assert_eq!(out.params.g, ndarray::array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn individual_updates_do_not_decrease() {
        let x = random_spec(7, 9, 2, 8);
        let cfg = config(2, 3, GsmVariant::StudentT { nu: 3.0 });
        let mut p = init_params(cfg.dims(7, 9, 2), &cfg).unwrap();
        let ll = |p: &ModelParams| log_likelihood(&x, p, cfg.variant, cfg.floor).unwrap();
        type Update = fn(&mut ModelParams, &EStepCache);
        let updates: [Update; 3] = [update_w, update_h, update_g];
        for round in 0..3 {
            for upd in updates {
                let before = ll(&p);
                let c = e_step(&x, &p, cfg.variant, cfg.floor).unwrap();
                upd(&mut p, &c);
                let after = ll(&p);
                assert!(after >= before - 1e-10 * before.abs(), "round {round}: {before} -> {after}");
            }
        }
    }

    #[test]
    fn cache_likelihood_matches_direct() {
        let x = random_spec(5, 7, 3, 9);
        let cfg = config(3, 2, GsmVariant::Nig { rho: 15.0, eta: 1.0 });
        let mut p = init_params(cfg.dims(5, 7, 3), &cfg).unwrap();
        p.q[2][(1, 0)] = Complex64::new(0.2, 0.1);
        let c = e_step(&x, &p, cfg.variant, cfg.floor).unwrap();
        let a = log_likelihood_from_cache(&c, &p, cfg.variant).unwrap();
        let b = log_likelihood(&x, &p, cfg.variant, cfg.floor).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        let x = random_spec(6, 10, 2, 10);
        let mut cfg = config(2, 2, GsmVariant::Nig { rho: 15.0, eta: 1.0 });
        cfg.iterations = 8;
        let full = run(&x, &cfg).unwrap();

        let mut first = cfg;
        first.iterations = 5;
        let opts = RunOptions {
            checkpoint_path: Some(path.clone()),
            checkpoint_every: 5,
            resume: None,
        };
        run_with(&x, &first, opts, |_| {}).unwrap();
        let cp = Checkpoint::load(&path).unwrap();
        assert_eq!(cp.iteration, 5);
        let resumed = run_with(
            &x,
            &cfg,
            RunOptions {
                resume: Some(cp),
                ..Default::default()
            },
            |_| {},
        )
        .unwrap();
        assert_eq!(resumed.trace, full.trace);
        assert_eq!(resumed.params, full.params);
    }

    #[test]
    fn progress_reports_every_iteration() {
        let x = random_spec(4, 6, 2, 11);
        let cfg = config(2, 2, GsmVariant::Gaussian);
        let mut seen = Vec::new();
        let out = run_with(&x, &cfg, RunOptions::default(), |s| seen.push((s.iteration, s.log_likelihood)))
            .unwrap();
        assert_eq!(seen.len(), 10);
        assert_eq!(seen.iter().map(|s| s.1).collect::<Vec<_>>(), out.trace.values);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = random_spec(4, 6, 2, 12);
        let cfg = config(2, 2, GsmVariant::Gaussian);
        let p = init_params(Dims::new(2, 2, 5, 6, 2), &cfg).unwrap();
        assert!(matches!(
            e_step(&x, &p, cfg.variant, cfg.floor),
            Err(OptimError::Shape(_))
        ));
    }
}
