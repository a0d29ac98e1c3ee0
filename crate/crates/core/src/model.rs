//! Source and spatial model parameters.
//!
//! * `w[[n, k, f]]` — nonnegative NMF bases
//! * `h[[n, k, t]]` — nonnegative NMF activations
//! * `q[f]` — per-frequency diagonalizer; row `m` is `q_fm^H`, so `z = Q_f x`
//! * `g[[n, m]]` — frequency-shared direction weights
//!
//! The source PSD is `λ_nft = Σ_k w_nkf h_nkt` and the projected-mixture
//! variance is `ỹ_ftm = Σ_n λ_nft g_nm`.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, SmallComplexMatrix, MAX_DIM};
use crate::priors::{GsmVariant, PriorError};

/// Lower bound on `ỹ` before any division.
pub const DEFAULT_FLOOR: f64 = 1e-10;
/// Off-pattern value of the circulant initialization of `G̃`.
pub const DEFAULT_EPS_INIT: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate parameters during normalization: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular diagonalizer at frequency {f}: {source}")]
    Singular {
        f: usize,
        #[source]
        source: LinalgError,
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// `(N, K, F, T, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_sources: usize,
    pub n_bases: usize,
    pub n_freq: usize,
    pub n_frames: usize,
    pub n_channels: usize,
}

impl Dims {
    pub fn new(n: usize, k: usize, f: usize, t: usize, m: usize) -> Self {
        Self {
            n_sources: n,
            n_bases: k,
            n_freq: f,
            n_frames: t,
            n_channels: m,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let Dims {
            n_sources,
            n_bases,
            n_freq,
            n_frames,
            n_channels,
        } = *self;
        if [n_sources, n_bases, n_freq, n_frames, n_channels].contains(&0) {
            return Err(ModelError::InvalidConfig(format!("all dimensions must be >= 1: {self:?}")));
        }
        if n_channels > MAX_DIM {
            return Err(ModelError::InvalidConfig(format!(
                "at most {MAX_DIM} channels supported, got {n_channels}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub n_sources: usize,
    pub n_bases: usize,
    pub iterations: usize,
    pub rank1: bool,
    pub eps_init: f64,
    pub floor: f64,
    pub seed: u64,
    pub variant: GsmVariant,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            n_sources: 2,
            n_bases: 8,
            iterations: 300,
            rank1: false,
            eps_init: DEFAULT_EPS_INIT,
            floor: DEFAULT_FLOOR,
            seed: 0,
            variant: GsmVariant::Nig { rho: 15.0, eta: 1.0 },
        }
    }
}

impl SeparationConfig {
    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_sources == 0 || self.n_bases == 0 {
            return Err(ModelError::InvalidConfig("n_sources and n_bases must be >= 1".into()));
        }
        if !(self.floor > 0.0) {
            return Err(ModelError::InvalidConfig(format!("floor must be > 0, got {}", self.floor)));
        }
        if !(self.eps_init >= 0.0 && self.eps_init.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "eps_init must be >= 0, got {}",
                self.eps_init
            )));
        }
        self.variant.validate()?;
        Ok(())
    }

    /// Checks the configuration against a channel count.
    pub fn validate_for(&self, n_channels: usize) -> Result<(), ModelError> {
        self.validate()?;
        if self.rank1 && self.n_sources != n_channels {
            return Err(ModelError::InvalidConfig(format!(
                "rank-1 model needs N = M, got N = {} and M = {n_channels}",
                self.n_sources
            )));
        }
        Ok(())
    }

    pub fn dims(&self, n_freq: usize, n_frames: usize, n_channels: usize) -> Dims {
        Dims::new(self.n_sources, self.n_bases, n_freq, n_frames, n_channels)
    }
}

/// The parameter set `{W, H, Q, G̃}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsFile", try_from = "ParamsFile")]
pub struct ModelParams {
    pub w: Array3<f64>,
    pub h: Array3<f64>,
    pub q: Vec<SmallComplexMatrix>,
    pub g: Array2<f64>,
}

impl ModelParams {
    pub fn dims(&self) -> Dims {
        let (n, k, f) = self.w.dim();
        Dims::new(n, k, f, self.h.dim().2, self.g.dim().1)
    }

    /// Shape consistency, nonnegativity and finiteness.
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.dims();
        d.validate()?;
        if self.h.dim() != (d.n_sources, d.n_bases, d.n_frames) {
            return Err(ModelError::Shape(format!("H has shape {:?}", self.h.dim())));
        }
        if self.g.dim().0 != d.n_sources {
            return Err(ModelError::Shape(format!("G̃ has shape {:?}", self.g.dim())));
        }
        if self.q.len() != d.n_freq || self.q.iter().any(|q| q.dim() != d.n_channels) {
            return Err(ModelError::Shape("Q must hold F matrices of size M × M".into()));
        }
        let nonneg = |v: &f64| *v >= 0.0 && v.is_finite();
        if !self.w.iter().all(nonneg) || !self.h.iter().all(nonneg) || !self.g.iter().all(nonneg) {
            return Err(ModelError::InvalidConfig(
                "W, H and G̃ must be finite and nonnegative".into(),
            ));
        }
        if self.q.iter().any(|q| !q.is_finite()) {
            return Err(ModelError::InvalidConfig("Q has non-finite entries".into()));
        }
        Ok(())
    }

    /// Rescales `Q`, `G̃` and `W`/`H` so that `M Tr(Q_f Q_f^H) = 1`,
    /// `Σ_m g̃_nm = 1` and `Σ_f w_nkf = 1`, leaving the model unchanged.
    pub fn normalize(&mut self) -> Result<(), ModelError> {
        let d = self.dims();
        let m = d.n_channels as f64;
        for (f, q) in self.q.iter_mut().enumerate() {
            let r = m * q.frobenius_sq();
            if !(r > 0.0 && r.is_finite()) {
                return Err(ModelError::Degenerate(format!("Tr(Q Q^H) = {r} at f = {f}")));
            }
            *q = q.scale(r.sqrt().recip());
            let inv = r.recip();
            self.w.slice_mut(ndarray::s![.., .., f]).mapv_inplace(|v| v * inv);
        }
        for n in 0..d.n_sources {
            let u: f64 = self.g.row(n).sum();
            if !(u > 0.0 && u.is_finite()) {
                return Err(ModelError::Degenerate(format!("Σ_m g̃ = {u} for source {n}")));
            }
            self.g.row_mut(n).mapv_inplace(|v| v / u);
            self.w.slice_mut(ndarray::s![n, .., ..]).mapv_inplace(|v| v * u);
        }
        for n in 0..d.n_sources {
            for k in 0..d.n_bases {
                let v: f64 = self.w.slice(ndarray::s![n, k, ..]).sum();
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ModelError::Degenerate(format!(
                        "Σ_f w = {v} for source {n}, basis {k}"
                    )));
                }
                self.w.slice_mut(ndarray::s![n, k, ..]).mapv_inplace(|x| x / v);
                self.h.slice_mut(ndarray::s![n, k, ..]).mapv_inplace(|x| x * v);
            }
        }
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self, ModelError> {
        self.normalize()?;
        Ok(self)
    }

    /// `G_nf = Q_f^{-1} Diag(g̃_n) Q_f^{-H}`.
    pub fn reconstruct_scm(&self, n: usize, f: usize) -> Result<SmallComplexMatrix, ModelError> {
        let inv = self.q[f].invert().map_err(|source| ModelError::Singular { f, source })?;
        let diag = SmallComplexMatrix::from_diag(&self.g.row(n).to_vec());
        Ok((inv * diag) * inv.adjoint())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string(self).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

/// `W, H` from `|N(0, 1)|` (W drawn first), `Q_f = I`, circulant `G̃`.
///
/// The generator is ChaCha8 seeded through `seed_from_u64`, so runs are
/// reproducible across platforms and builds.
pub fn init_params(dims: Dims, cfg: &SeparationConfig) -> Result<ModelParams, ModelError> {
    dims.validate()?;
    cfg.validate_for(dims.n_channels)?;
    if dims.n_sources != cfg.n_sources || dims.n_bases != cfg.n_bases {
        return Err(ModelError::Shape("dims disagree with the configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = || -> f64 {
        let v: f64 = StandardNormal.sample(&mut rng);
        v.abs()
    };
    let Dims {
        n_sources: n,
        n_bases: k,
        n_freq: f,
        n_frames: t,
        n_channels: m,
    } = dims;
    let w = Array3::from_shape_simple_fn((n, k, f), &mut draw);
    let h = Array3::from_shape_simple_fn((n, k, t), &mut draw);
    let eps = if cfg.rank1 { 0.0 } else { cfg.eps_init };
    let g = circulant(n, m, eps);
    Ok(ModelParams {
        w,
        h,
        q: vec![SmallComplexMatrix::identity(m); f],
        g,
    })
}

/// Row `n` has 1 at columns `m ≡ n (mod N)` and `eps` elsewhere.
pub fn circulant(n: usize, m: usize, eps: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |(i, j)| if j % n == i { 1.0 } else { eps })
}

/// `λ[[n, f, t]] = Σ_k w_nkf h_nkt`.
pub fn source_psd(params: &ModelParams) -> Array3<f64> {
    let d = params.dims();
    let mut lam = Array3::zeros((d.n_sources, d.n_freq, d.n_frames));
    for n in 0..d.n_sources {
        let w = params.w.slice(ndarray::s![n, .., ..]);
        let h = params.h.slice(ndarray::s![n, .., ..]);
        // (F × K) · (K × T)
        lam.slice_mut(ndarray::s![n, .., ..]).assign(&w.t().dot(&h));
    }
    lam
}

/// `ỹ[[f, t, m]] = max(Σ_n λ_nft g̃_nm, floor)`.
pub fn compute_ytilde(params: &ModelParams, floor: f64) -> Array3<f64> {
    ytilde_from_psd(&source_psd(params), &params.g, floor)
}

pub(crate) fn ytilde_from_psd(lam: &Array3<f64>, g: &Array2<f64>, floor: f64) -> Array3<f64> {
    let (n_src, n_freq, n_frames) = lam.dim();
    let m = g.dim().1;
    let mut y = Array3::<f64>::zeros((n_freq, n_frames, m));
    let ys = y.as_slice_mut().unwrap();
    for n in 0..n_src {
        let gn = g.row(n);
        let ln = lam.slice(ndarray::s![n, .., ..]);
        for ((f, t), &l) in ln.indexed_iter() {
            let base = (f * n_frames + t) * m;
            for (j, gv) in gn.iter().enumerate() {
                ys[base + j] += l * gv;
            }
        }
    }
    ys.iter_mut().for_each(|v| *v = v.max(floor));
    y
}

/// On-disk form: a shape header followed by row-major arrays; complex
/// entries are `[re, im]` pairs and `q` is ordered `(f, row, col)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub shape: Dims,
    pub w: Vec<f64>,
    pub h: Vec<f64>,
    pub q: Vec<[f64; 2]>,
    pub g: Vec<f64>,
}

impl From<ModelParams> for ParamsFile {
    fn from(p: ModelParams) -> Self {
        let shape = p.dims();
        let q = p
            .q
            .iter()
            .flat_map(|qf| qf.to_row_major())
            .map(|c| [c.re, c.im])
            .collect();
        Self {
            shape,
            w: p.w.iter().copied().collect(),
            h: p.h.iter().copied().collect(),
            q,
            g: p.g.iter().copied().collect(),
        }
    }
}

impl TryFrom<ParamsFile> for ModelParams {
    type Error = ModelError;

    fn try_from(file: ParamsFile) -> Result<Self, ModelError> {
        let d = file.shape;
        d.validate()?;
        let bad = |what: &str, e: ndarray::ShapeError| ModelError::Checkpoint(format!("{what}: {e}"));
        let w = Array3::from_shape_vec((d.n_sources, d.n_bases, d.n_freq), file.w)
            .map_err(|e| bad("w", e))?;
        let h = Array3::from_shape_vec((d.n_sources, d.n_bases, d.n_frames), file.h)
            .map_err(|e| bad("h", e))?;
        let g = Array2::from_shape_vec((d.n_sources, d.n_channels), file.g)
            .map_err(|e| bad("g", e))?;
        let mm = d.n_channels * d.n_channels;
        if file.q.len() != d.n_freq * mm {
            return Err(ModelError::Checkpoint(format!(
                "q holds {} entries, expected {}",
                file.q.len(),
                d.n_freq * mm
            )));
        }
        let entries: Vec<Complex64> = file.q.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        let q = entries
            .chunks(mm)
            .map(|c| SmallComplexMatrix::from_row_major(d.n_channels, c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let params = ModelParams { w, h, q, g };
        params.validate()?;
        Ok(params)
    }
}
