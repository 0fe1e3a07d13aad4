use crate::data::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Exponential-family node model with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    BinomialLogit,
    GaussianIdentity,
    PoissonLog,
}

impl From<Distribution> for Family {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Binomial => Family::BinomialLogit,
            Distribution::Gaussian => Family::GaussianIdentity,
            Distribution::Poisson => Family::PoissonLog,
        }
    }
}

/// `log(1 + exp(x))` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Family {
    pub fn has_precision(self) -> bool {
        self == Family::GaussianIdentity
    }

    /// Inverse link.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Family::BinomialLogit => expit(eta),
            Family::GaussianIdentity => eta,
            Family::PoissonLog => eta.exp(),
        }
    }

    /// Variance function at the mean; equals the IRLS weight for canonical links.
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::BinomialLogit => mu * (1.0 - mu),
            Family::GaussianIdentity => 1.0,
            Family::PoissonLog => mu,
        }
    }

    /// Log-density of one observation. `log_precision` is only read for
    /// the gaussian family.
    pub fn log_density(self, y: f64, eta: f64, log_precision: f64) -> f64 {
        match self {
            Family::BinomialLogit => y * eta - softplus(eta),
            Family::PoissonLog => y * eta - eta.exp() - ln_gamma(y + 1.0),
            Family::GaussianIdentity => {
                let r = y - eta;
                0.5 * log_precision - 0.5 * (2.0 * PI).ln() - 0.5 * log_precision.exp() * r * r
            }
        }
    }

    /// A safe starting linear predictor for the intercept.
    pub(crate) fn start_intercept(self, mean_y: f64) -> f64 {
        match self {
            Family::BinomialLogit => {
                let p = mean_y.clamp(0.01, 0.99);
                (p / (1.0 - p)).ln()
            }
            Family::GaussianIdentity => mean_y,
            Family::PoissonLog => (mean_y + 0.1).ln(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((expit(-800.0)).is_finite());
    }

    #[test]
    fn densities_normalize() {
        // binomial: p(0) + p(1) = 1
        let eta = 0.7;
        let s: f64 = [0.0, 1.0]
            .iter()
            .map(|&y| Family::BinomialLogit.log_density(y, eta, 0.0).exp())
            .sum();
        assert!((s - 1.0).abs() < 1e-14);
        // poisson, truncated sum
        let s: f64 = (0..100)
            .map(|y| Family::PoissonLog.log_density(f64::from(y), 1.3, 0.0).exp())
            .sum();
        assert!((s - 1.0).abs() < 1e-12);
        // gaussian at the mean with unit precision
        let v = Family::GaussianIdentity.log_density(2.0, 2.0, 0.0);
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }
}
