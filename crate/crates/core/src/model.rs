//! The hierarchical model description: likelihood, covariates, projector,
//! priors, and the hyperparameter vector with its transformations.

use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::likelihood::Likelihood;
use crate::project::Projector;

/// Default precision of the independent Gaussian priors on the intercept
/// and covariate coefficients.
pub const DEFAULT_FIXED_EFFECT_PRECISION: f64 = 0.001;

/// Prior variance of the transform `log((1+rho)/(1-rho))` of the AR(1)
/// coefficient.
const RHO_TRANSFORM_PRIOR_VARIANCE: f64 = 1.0 / 0.15;

/// Prior on the spatial hyperparameters, on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialPrior {
    /// `log tau, log kappa ~ N(0, 1)` (the stationary-model default).
    Default,
    /// Gaussians with unit standard deviation centered at the
    /// `(kappa, tau)` implied by a range (km) and marginal variance.
    RangeSigma { r_km: f64, sigma2: f64 },
}

impl SpatialPrior {
    /// `(mean log kappa, mean log tau)` of the prior.
    pub fn centers(&self) -> Result<(f64, f64)> {
        match self {
            SpatialPrior::Default => Ok((0.0, 0.0)),
            SpatialPrior::RangeSigma { r_km, sigma2 } => {
                let (kappa, tau) = crate::spde::kappa_tau_from_range_sigma(
                    *r_km,
                    *sigma2,
                    crate::geo::EARTH_RADIUS_KM,
                )?;
                Ok((kappa.ln(), tau.ln()))
            }
        }
    }
}

/// Hyperparameters in unconstrained coordinates.
///
/// `rho_transformed = log((1+rho)/(1-rho))`, so `rho = tanh(. / 2)`;
/// the observation-noise variance is `exp(-log_noise_precision)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypers {
    pub log_kappa: f64,
    pub log_tau: f64,
    pub rho_transformed: f64,
    pub log_noise_precision: f64,
}

impl Hypers {
    pub fn new(kappa: f64, tau: f64, rho: f64) -> Self {
        Hypers {
            log_kappa: kappa.ln(),
            log_tau: tau.ln(),
            rho_transformed: ((1.0 + rho) / (1.0 - rho)).ln(),
            log_noise_precision: 0.0,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.log_kappa.exp()
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn rho(&self) -> f64 {
        (self.rho_transformed / 2.0).tanh()
    }

    pub fn noise_variance(&self) -> f64 {
        (-self.log_noise_precision).exp()
    }

    pub fn is_finite(&self) -> bool {
        self.log_kappa.is_finite()
            && self.log_tau.is_finite()
            && self.rho_transformed.is_finite()
            && self.log_noise_precision.is_finite()
    }
}

/// Which hyperparameter coordinates are free in a given model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveHypers {
    /// `rho` is free only with two or more time slices.
    pub rho: bool,
    /// The noise precision is free only when the observation-noise term
    /// is enabled.
    pub noise: bool,
}

impl ActiveHypers {
    pub fn dim(&self) -> usize {
        2 + usize::from(self.rho) + usize::from(self.noise)
    }

    /// Packs the active coordinates into a vector for the optimizer.
    pub fn pack(&self, h: &Hypers) -> Vec<f64> {
        let mut v = vec![h.log_kappa, h.log_tau];
        if self.rho {
            v.push(h.rho_transformed);
        }
        if self.noise {
            v.push(h.log_noise_precision);
        }
        v
    }

    /// Unpacks optimizer coordinates, keeping inactive ones from `base`.
    pub fn unpack(&self, v: &[f64], base: &Hypers) -> Hypers {
        assert_eq!(v.len(), self.dim());
        let mut h = *base;
        h.log_kappa = v[0];
        h.log_tau = v[1];
        let mut k = 2;
        if self.rho {
            h.rho_transformed = v[k];
            k += 1;
        }
        if self.noise {
            h.log_noise_precision = v[k];
        }
        h
    }

    /// Names of the active coordinates, in pack order.
    pub fn names(&self) -> Vec<&'static str> {
        let mut n = vec!["log_kappa", "log_tau"];
        if self.rho {
            n.push("rho_transformed");
        }
        if self.noise {
            n.push("log_noise_precision");
        }
        n
    }
}

/// Full model specification for a fit.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub likelihood: Likelihood,
    /// Standardized covariate columns (each mean 0, sd 1), column-major.
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    pub y: Vec<f64>,
    /// Space-time observation projector (columns = n_vertices * t_len).
    pub projector: Projector,
    pub fem: FemMatrices,
    pub n_vertices: usize,
    pub t_len: usize,
    pub prior: SpatialPrior,
    pub fixed_effect_precision: f64,
    /// Include the observation-level Gaussian noise term in the linear
    /// predictor. Off by default for Bernoulli and Poisson fits.
    pub noise_term: bool,
}

impl ModelSpec {
    /// Validates responses, standardization, and projector dimensions.
    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.projector.n_rows() != n {
            return Err(Error::domain(format!(
                "projector has {} rows for {} observations",
                self.projector.n_rows(),
                n
            )));
        }
        if self.projector.n_cols != self.n_vertices * self.t_len {
            return Err(Error::domain(
                "projector columns do not match mesh-time dimensions".to_string(),
            ));
        }
        if self.covariates.len() != self.covariate_names.len() {
            return Err(Error::domain("covariate names/columns mismatch".to_string()));
        }
        match self.likelihood {
            Likelihood::BernoulliLogit => {
                if self.y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::domain(
                        "Bernoulli responses must be 0 or 1".to_string(),
                    ));
                }
            }
            Likelihood::PoissonLog => {
                if self
                    .y
                    .iter()
                    .any(|&v| v < 0.0 || v.fract() != 0.0 || !v.is_finite())
                {
                    return Err(Error::domain(
                        "Poisson responses must be nonnegative integers".to_string(),
                    ));
                }
            }
            Likelihood::Gaussian { sd } => {
                if !(sd > 0.0) {
                    return Err(Error::domain("Gaussian sd must be positive".to_string()));
                }
            }
        }
        for (name, col) in self.covariate_names.iter().zip(self.covariates.iter()) {
            if col.len() != n {
                return Err(Error::domain(format!(
                    "covariate {name} has {} values for {} observations",
                    col.len(),
                    n
                )));
            }
            if n >= 2 {
                let mean = col.iter().sum::<f64>() / n as f64;
                let var =
                    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
                if mean.abs() > 1e-8 {
                    return Err(Error::domain(format!(
                        "covariate {name} is not centered (mean {mean:e})"
                    )));
                }
                if (var.sqrt() - 1.0).abs() > 1e-6 {
                    return Err(Error::domain(format!(
                        "covariate {name} is not scaled (sd {})",
                        var.sqrt()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn active_hypers(&self) -> ActiveHypers {
        ActiveHypers {
            rho: self.t_len > 1,
            noise: self.noise_term,
        }
    }

    /// Log prior density of the hyperparameters (transformed scale),
    /// including normalization constants.
    pub fn log_prior_hypers(&self, h: &Hypers) -> Result<f64> {
        let (c_kappa, c_tau) = self.prior.centers()?;
        let mut lp = gaussian_logpdf(h.log_kappa, c_kappa, 1.0)
            + gaussian_logpdf(h.log_tau, c_tau, 1.0);
        let active = self.active_hypers();
        if active.rho {
            lp += gaussian_logpdf(h.rho_transformed, 0.0, RHO_TRANSFORM_PRIOR_VARIANCE);
        }
        if active.noise {
            lp += gaussian_logpdf(h.log_noise_precision, 0.0, 1.0);
        }
        Ok(lp)
    }
}

fn gaussian_logpdf(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * r * r / variance - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hyper_transforms_round_trip() {
        let h = Hypers::new(3.0, 0.2, 0.91);
        assert_relative_eq!(h.kappa(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(h.tau(), 0.2, epsilon = 1e-12);
        assert_relative_eq!(h.rho(), 0.91, epsilon = 1e-12);
    }

    #[test]
    fn active_pack_unpack_round_trip() {
        let h = Hypers {
            log_kappa: 0.3,
            log_tau: -0.7,
            rho_transformed: 1.1,
            log_noise_precision: 0.4,
        };
        for active in [
            ActiveHypers { rho: false, noise: false },
            ActiveHypers { rho: true, noise: false },
            ActiveHypers { rho: true, noise: true },
        ] {
            let v = active.pack(&h);
            assert_eq!(v.len(), active.dim());
            let back = active.unpack(&v, &h);
            assert_eq!(back, h);
        }
    }

    #[test]
    fn range_sigma_prior_centers_match_conversion() {
        let prior = SpatialPrior::RangeSigma {
            r_km: 500.0,
            sigma2: 50.0,
        };
        let (ck, ct) = prior.centers().unwrap();
        let (kappa, tau) =
            crate::spde::kappa_tau_from_range_sigma(500.0, 50.0, crate::geo::EARTH_RADIUS_KM)
                .unwrap();
        assert_relative_eq!(ck, kappa.ln(), epsilon = 1e-14);
        assert_relative_eq!(ct, tau.ln(), epsilon = 1e-14);
    }
}
