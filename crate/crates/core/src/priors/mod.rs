//! Impulse-variable priors of the Gaussian-scale-mixture family.
//!
//! Every variant models the projected mixture of one time-frequency bin as
//! `z | phi ~ N_C(0, phi * Diag(y))` with a positive impulse variable `phi`.
//! Given the bin statistic `s = Σ_m |z_m|² / y_m`, this module provides the
//! posterior expectation `E[1/phi | z]` consumed by the multiplicative
//! updates, the fully normalized marginal log-density, the prior density of
//! `phi` where it has a closed form, and a quadrature route to
//! `E[1/phi | z]` that works directly from the compound integral.

pub mod bessel;
pub mod quadrature;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

pub use bessel::{bessel_k_ratio, log_bessel_k};

/// Lower bound applied to `s` before the generalized-Gaussian power law.
pub const GG_STAT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("invalid variant parameter: {0}")]
    InvalidParameter(String),
    #[error("{0} has no closed-form impulse prior")]
    UnsupportedVariant(&'static str),
    #[error("Bessel K argument must be positive, got {0}")]
    NonPositiveBesselArgument(f64),
    #[error("bin statistic must be finite and non-negative, got {0}")]
    InvalidStatistic(f64),
    #[error("quadrature did not converge (achieved relative error {achieved:.3e}, target {target:.1e})")]
    Quadrature { achieved: f64, target: f64 },
}

/// Choice of impulse prior together with its tail-index parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GsmVariant {
    /// `phi = 1` almost surely.
    Gaussian,
    /// `phi ~ IG(nu/2, nu/2)`.
    #[serde(rename = "t")]
    StudentT { nu: f64 },
    /// Leptokurtic generalized Gaussian, `beta ∈ (0, 2]`.
    #[serde(rename = "gg")]
    LeptokurticGg { beta: f64 },
    /// `phi ~ GIG(gamma, rho, eta)`.
    #[serde(rename = "gh")]
    Gh { gamma: f64, rho: f64, eta: f64 },
    /// Generalized hyperbolic with `gamma = -1/2`.
    #[serde(rename = "nig")]
    Nig { rho: f64, eta: f64 },
}

impl GsmVariant {
    /// Builds a GH variant from the `(a, b) = (rho/eta, rho*eta)` parametrization.
    pub fn gh_from_ab(gamma: f64, a: f64, b: f64) -> Self {
        GsmVariant::Gh {
            gamma,
            rho: (a * b).sqrt(),
            eta: (b / a).sqrt(),
        }
    }

    /// Short lowercase name used in reports and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            GsmVariant::Gaussian => "gaussian",
            GsmVariant::StudentT { .. } => "t",
            GsmVariant::LeptokurticGg { .. } => "gg",
            GsmVariant::Gh { .. } => "gh",
            GsmVariant::Nig { .. } => "nig",
        }
    }

    /// `(gamma, rho, eta)` for the GIG-mixed variants.
    pub fn gh_params(&self) -> Option<(f64, f64, f64)> {
        match *self {
            GsmVariant::Gh { gamma, rho, eta } => Some((gamma, rho, eta)),
            GsmVariant::Nig { rho, eta } => Some((-0.5, rho, eta)),
            _ => None,
        }
    }

    /// `(a, b)` for the GIG-mixed variants.
    pub fn ab(&self) -> Option<(f64, f64)> {
        self.gh_params().map(|(_, rho, eta)| (rho / eta, rho * eta))
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        let bad = |msg: String| Err(PriorError::InvalidParameter(msg));
        match *self {
            GsmVariant::Gaussian => Ok(()),
            GsmVariant::StudentT { nu } => {
                if nu > 0.0 && nu.is_finite() {
                    Ok(())
                } else {
                    bad(format!("nu must be > 0, got {nu}"))
                }
            }
            GsmVariant::LeptokurticGg { beta } => {
                if beta > 0.0 && beta <= 2.0 {
                    Ok(())
                } else {
                    bad(format!("beta must lie in (0, 2], got {beta}"))
                }
            }
            GsmVariant::Gh { gamma, rho, eta } => {
                if !gamma.is_finite() {
                    bad(format!("gamma must be finite, got {gamma}"))
                } else if !(rho > 0.0 && rho.is_finite()) {
                    bad(format!("rho must be > 0, got {rho}"))
                } else if !(eta > 0.0 && eta.is_finite()) {
                    bad(format!("eta must be > 0, got {eta}"))
                } else {
                    Ok(())
                }
            }
            GsmVariant::Nig { rho, eta } => GsmVariant::Gh {
                gamma: -0.5,
                rho,
                eta,
            }
            .validate(),
        }
    }
}

/// `s = Σ_m z̃_m / ỹ_m` for one bin, together with the channel count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStatistic {
    pub s: f64,
    pub m_dims: usize,
}

impl BinStatistic {
    pub fn new(s: f64, m_dims: usize) -> Result<Self, PriorError> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(PriorError::InvalidStatistic(s));
        }
        Ok(Self { s, m_dims })
    }

    pub fn from_pairs(z_tilde: &[f64], y_tilde: &[f64]) -> Result<Self, PriorError> {
        assert_eq!(z_tilde.len(), y_tilde.len(), "z̃ and ỹ lengths differ");
        let s = z_tilde.iter().zip(y_tilde).map(|(z, y)| z / y).sum();
        Self::new(s, z_tilde.len())
    }
}

/// `E[1/phi | z]` for one bin.
pub fn posterior_inv_phi(stat: BinStatistic, variant: GsmVariant) -> Result<f64, PriorError> {
    let m = stat.m_dims as f64;
    let s = stat.s;
    match variant {
        GsmVariant::Gaussian => Ok(1.0),
        GsmVariant::StudentT { nu } => Ok((0.5 * nu + m) / (0.5 * nu + s)),
        GsmVariant::LeptokurticGg { beta } => {
            let s = s.max(GG_STAT_FLOOR);
            Ok(0.5 * beta * s.powf(0.5 * (beta - 2.0)))
        }
        GsmVariant::Gh { .. } | GsmVariant::Nig { .. } => {
            let (gamma, rho, eta) = variant.gh_params().unwrap();
            let b = rho * eta;
            let u2 = 1.0 + 2.0 * s / b;
            let u = u2.sqrt();
            let ratio = bessel_k_ratio(gamma - m, rho * u)?;
            Ok(2.0 * (m - gamma) / (b * u2) + ratio / (eta * u))
        }
    }
}

/// Marginal density of an `M`-channel bin with per-variant constants precomputed.
#[derive(Debug, Clone, Copy)]
pub struct MarginalDensity {
    variant: GsmVariant,
    m_dims: usize,
    log_norm: f64,
}

impl MarginalDensity {
    pub fn new(variant: GsmVariant, m_dims: usize) -> Result<Self, PriorError> {
        variant.validate()?;
        let m = m_dims as f64;
        let log_norm = match variant {
            GsmVariant::Gaussian => -m * PI.ln(),
            GsmVariant::StudentT { nu } => {
                let half = 0.5 * nu;
                // ln Γ(M + ν/2) - ln Γ(ν/2) as a finite product
                let gamma_ratio: f64 = (0..m_dims).map(|j| (half + j as f64).ln()).sum();
                m * 2.0_f64.ln() + gamma_ratio - m * (PI * nu).ln()
            }
            GsmVariant::LeptokurticGg { beta } => {
                (0.5 * beta).ln() + ln_gamma(m) - m * PI.ln() - ln_gamma(2.0 * m / beta)
            }
            GsmVariant::Gh { .. } | GsmVariant::Nig { .. } => {
                let (gamma, rho, eta) = variant.gh_params().unwrap();
                -m * (PI * eta).ln() - log_bessel_k(gamma, rho)?
            }
        };
        Ok(Self {
            variant,
            m_dims,
            log_norm,
        })
    }

    pub fn m_dims(&self) -> usize {
        self.m_dims
    }

    /// `log p(z)` from `s = z^H Σ^{-1} z` and `log |Σ|`.
    pub fn log_density(&self, s: f64, log_det: f64) -> Result<f64, PriorError> {
        let m = self.m_dims as f64;
        let kernel = match self.variant {
            GsmVariant::Gaussian => -s,
            GsmVariant::StudentT { nu } => -(m + 0.5 * nu) * (2.0 * s / nu).ln_1p(),
            GsmVariant::LeptokurticGg { beta } => -s.powf(0.5 * beta),
            GsmVariant::Gh { .. } | GsmVariant::Nig { .. } => {
                let (gamma, rho, eta) = self.variant.gh_params().unwrap();
                let x = 2.0 * s / (rho * eta);
                let u = (1.0 + x).sqrt();
                0.5 * (gamma - m) * x.ln_1p() + log_bessel_k(gamma - m, rho * u)?
            }
        };
        Ok(self.log_norm + kernel - log_det)
    }
}

/// Fully normalized `log p(z)` for `Σ = Diag(ỹ)`, given `z̃_m = |z_m|²`.
pub fn log_marginal_density(
    z_tilde: &[f64],
    y_tilde: &[f64],
    variant: GsmVariant,
) -> Result<f64, PriorError> {
    let stat = BinStatistic::from_pairs(z_tilde, y_tilde)?;
    let log_det: f64 = y_tilde.iter().map(|y| y.ln()).sum();
    MarginalDensity::new(variant, z_tilde.len())?.log_density(stat.s, log_det)
}

/// Normalized log-density of the impulse prior `p(phi)`.
pub fn prior_log_pdf(phi: f64, variant: GsmVariant) -> Result<f64, PriorError> {
    variant.validate()?;
    if !(phi > 0.0) {
        return Err(PriorError::InvalidParameter(format!("phi must be > 0, got {phi}")));
    }
    match variant {
        GsmVariant::Gaussian => Err(PriorError::UnsupportedVariant("Gaussian (Dirac prior)")),
        GsmVariant::LeptokurticGg { .. } => Err(PriorError::UnsupportedVariant(
            "leptokurtic generalized Gaussian",
        )),
        GsmVariant::StudentT { nu } => {
            let a = 0.5 * nu;
            Ok(a * a.ln() - ln_gamma(a) - (a + 1.0) * phi.ln() - a / phi)
        }
        GsmVariant::Gh { .. } | GsmVariant::Nig { .. } => {
            let (gamma, rho, eta) = variant.gh_params().unwrap();
            Ok(-(2.0_f64.ln()) - gamma * eta.ln() - log_bessel_k(gamma, rho)?
                + (gamma - 1.0) * phi.ln()
                - 0.5 * rho * (phi / eta + eta / phi))
        }
    }
}

/// Relative accuracy targeted by [`quadrature_posterior_inv_phi`].
pub const QUADRATURE_REL_TOL: f64 = 1e-8;

/// `E[1/phi | z]` by direct numerical integration of the compound model.
///
/// Works in `t = ln phi`, integrating `p(z | e^t) p(e^t) e^t` with and
/// without the extra `e^{-t}` factor. Only variants with a closed-form prior
/// are accepted.
pub fn quadrature_posterior_inv_phi(
    z_tilde: &[f64],
    y_tilde: &[f64],
    variant: GsmVariant,
) -> Result<f64, PriorError> {
    variant.validate()?;
    // surface unsupported variants before integrating
    prior_log_pdf(1.0, variant)?;
    let stat = BinStatistic::from_pairs(z_tilde, y_tilde)?;
    let m = stat.m_dims as f64;
    let log_det: f64 = y_tilde.iter().map(|y| y.ln()).sum();
    let log_joint = |t: f64| -> f64 {
        let phi = t.exp();
        let cond = -m * PI.ln() - m * t - log_det - stat.s * (-t).exp();
        cond + prior_log_pdf(phi, variant).unwrap_or(f64::NEG_INFINITY) + t
    };
    let tol = QUADRATURE_REL_TOL * 1e-4;
    let search = (-60.0, 60.0);
    let log_den = quadrature::log_integrate_unimodal(log_joint, search, tol)?;
    let log_num = quadrature::log_integrate_unimodal(|t| log_joint(t) - t, search, tol)?;
    Ok((log_num - log_den).exp())
}
