//! Observation likelihoods: log-density and derivatives in the linear
//! predictor.

use serde::{Deserialize, Serialize};

/// Likelihood family of the response given the linear predictor `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Likelihood {
    /// `y in {0,1}`, `logit(pi) = eta`.
    BernoulliLogit,
    /// Nonnegative integer counts, `log(mu) = eta`.
    PoissonLog,
    /// Gaussian response with known standard deviation; the conjugate
    /// special case used by validation tests, where the Laplace
    /// approximation is exact.
    Gaussian { sd: f64 },
}

impl Likelihood {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, Likelihood::Gaussian { .. })
    }

    /// Inverse link: response-scale mean from `eta`.
    pub fn link_inverse(&self, eta: f64) -> f64 {
        match self {
            Likelihood::BernoulliLogit => sigmoid(eta),
            Likelihood::PoissonLog => eta.exp(),
            Likelihood::Gaussian { .. } => eta,
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^eta)` without overflow.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// `ln(y!)` by direct summation for small arguments and a Stirling tail
/// for large ones.
fn ln_factorial(y: f64) -> f64 {
    let n = y.round() as u64;
    if n < 128 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        let x = n as f64 + 1.0;
        // Stirling series for ln Gamma(x).
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}

/// Smallest magnitude allowed for the negated curvature; saturating
/// exponentials would otherwise round `d2` to zero at extreme `eta`.
const CURVATURE_FLOOR: f64 = 1e-300;

/// Log-density of `y` given `eta` and its first two derivatives in `eta`.
/// The curvature `d2` is strictly negative for every family.
pub fn loglik_terms(likelihood: Likelihood, eta: f64, y: f64) -> (f64, f64, f64) {
    match likelihood {
        Likelihood::BernoulliLogit => {
            let p = sigmoid(eta);
            let value = y * eta - log1p_exp(eta);
            let d1 = y - p;
            // p(1-p) in log space: exp(-|eta| - 2 ln(1 + e^{-|eta|})).
            let a = -eta.abs() - 2.0 * (-eta.abs()).exp().ln_1p();
            let d2 = -a.exp().max(CURVATURE_FLOOR);
            (value, d1, d2)
        }
        Likelihood::PoissonLog => {
            // Saturate the rate at e^700 so derivatives stay finite.
            let mu = eta.min(700.0).exp();
            let value = y * eta - mu - ln_factorial(y);
            let d1 = y - mu;
            let d2 = -mu.max(CURVATURE_FLOOR);
            (value, d1, d2)
        }
        Likelihood::Gaussian { sd } => {
            let prec = 1.0 / (sd * sd);
            let r = y - eta;
            let value = -0.5 * r * r * prec - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            (value, r * prec, -prec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn bernoulli_symmetric_point() {
        let (v, d1, d2) = loglik_terms(Likelihood::BernoulliLogit, 0.0, 1.0);
        assert_relative_eq!(v, -(2.0f64.ln()), epsilon = 1e-15);
        assert_relative_eq!(d1, 0.5, epsilon = 1e-15);
        assert_relative_eq!(d2, -0.25, epsilon = 1e-15);
    }

    #[test]
    fn poisson_unit_point() {
        let (v, d1, d2) = loglik_terms(Likelihood::PoissonLog, 0.0, 1.0);
        assert_relative_eq!(v, -1.0, epsilon = 1e-15);
        assert_relative_eq!(d1, 0.0, epsilon = 1e-15);
        assert_relative_eq!(d2, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn curvature_strictly_negative_at_extremes() {
        for &eta in &[-800.0, -50.0, 0.0, 50.0, 800.0] {
            let (_, _, d2b) = loglik_terms(Likelihood::BernoulliLogit, eta, 1.0);
            assert!(d2b < 0.0, "bernoulli d2 at eta={eta}");
            let (_, _, d2p) = loglik_terms(Likelihood::PoissonLog, eta, 3.0);
            assert!(d2p < 0.0, "poisson d2 at eta={eta}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = crate::rng::stream_rng(17, "lik-fd");
        let h = 1e-5;
        for trial in 0..1000 {
            let eta: f64 = rng.random_range(-6.0..6.0);
            let (lik, y) = if trial % 2 == 0 {
                (Likelihood::BernoulliLogit, f64::from(rng.random_range(0..2)))
            } else {
                (Likelihood::PoissonLog, f64::from(rng.random_range(0..30)))
            };
            let (_, d1, d2) = loglik_terms(lik, eta, y);
            let (vp, d1p, _) = loglik_terms(lik, eta + h, y);
            let (vm, d1m, _) = loglik_terms(lik, eta - h, y);
            let fd1 = (vp - vm) / (2.0 * h);
            let fd2 = (d1p - d1m) / (2.0 * h);
            let scale1 = d1.abs().max(1e-2);
            let scale2 = d2.abs().max(1e-2);
            assert!(
                ((d1 - fd1) / scale1).abs() < 1e-6,
                "{lik:?} d1 at eta={eta}, y={y}: {d1} vs {fd1}"
            );
            assert!(
                ((d2 - fd2) / scale2).abs() < 1e-6,
                "{lik:?} d2 at eta={eta}, y={y}: {d2} vs {fd2}"
            );
        }
    }

    #[test]
    fn gaussian_terms_are_quadratic() {
        let (v0, d1, d2) = loglik_terms(Likelihood::Gaussian { sd: 2.0 }, 1.0, 3.0);
        assert_relative_eq!(d1, 0.5, epsilon = 1e-15);
        assert_relative_eq!(d2, -0.25, epsilon = 1e-15);
        let (v1, _, _) = loglik_terms(Likelihood::Gaussian { sd: 2.0 }, 3.0, 3.0);
        assert_relative_eq!(v1 - v0, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ln_factorial_continuity_at_threshold() {
        // Direct sum vs Stirling across the switch.
        let direct: f64 = (2..=127u64).map(|k| (k as f64).ln()).sum();
        let (v_lo, _, _) = loglik_terms(Likelihood::PoissonLog, 0.0, 127.0);
        assert_relative_eq!(-v_lo - 1.0, direct, max_relative = 1e-12);
        let (v128, _, _) = loglik_terms(Likelihood::PoissonLog, 0.0, 128.0);
        let expected = direct + 128.0f64.ln();
        assert_relative_eq!(-v128 - 1.0, expected, max_relative = 1e-12);
    }
}
