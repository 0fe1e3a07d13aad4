use super::{FitMethod, FitResult};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Grid half-width in posterior standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangePolicy {
    pub sd_multiple: f64,
}

impl Default for RangePolicy {
    fn default() -> Self {
        RangePolicy { sd_multiple: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDensity {
    pub name: String,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Trapezoidal area of the density before renormalization.
    pub raw_area: f64,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Gaussian marginals of the Laplace approximation, tabulated on
/// `mode ± r·sd` and renormalized to unit trapezoidal area.
pub fn marginal_densities(
    fit: &FitResult,
    n_grid: usize,
    policy: &RangePolicy,
) -> Result<Vec<MarginalDensity>> {
    if fit.method != FitMethod::Bayes {
        return Err(Error::ScoreMismatch("marginal densities need a bayes fit".into()));
    }
    let n_grid = n_grid.max(3);
    let r = policy.sd_multiple;
    let sds = fit.standard_errors()?;
    let mut out = Vec::new();
    for ((name, mode), sd) in fit.parameter_names().into_iter().zip(fit.parameters()).zip(sds) {
        let gauss = |t: f64| (-(t - mode).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt());
        let peak = gauss(mode);
        if gauss(mode + r * sd) > 1e-3 * peak {
            return Err(Error::RangeTooNarrow(format!(
                "{name}: density at ±{r} sd exceeds 1e-3 of the peak"
            )));
        }
        let step = 2.0 * r * sd / (n_grid - 1) as f64;
        let grid: Vec<f64> = (0..n_grid).map(|k| mode - r * sd + k as f64 * step).collect();
        let raw: Vec<f64> = grid.iter().map(|&t| gauss(t)).collect();
        let raw_area = trapezoid(&grid, &raw);
        out.push(MarginalDensity {
            name,
            density: raw.iter().map(|d| d / raw_area).collect(),
            grid,
            raw_area,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{fit_node, Family, PriorSpec};
    use super::*;

    #[test]
    fn areas_near_one() {
        for fam in [Family::BinomialLogit, Family::GaussianIdentity, Family::PoissonLog] {
            let d = simulate(fam, 120, &[0.2, 0.6], 9);
            let f = fit_node(&d, fam, FitMethod::Bayes, &PriorSpec::default()).unwrap();
            for m in marginal_densities(&f, 200, &RangePolicy::default()).unwrap() {
                assert!((0.99..=1.01).contains(&m.raw_area), "{}", m.raw_area);
                assert!((trapezoid(&m.grid, &m.density) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_posterior_density_is_exact() {
        let d = simulate(Family::GaussianIdentity, 40, &[1.0, -0.5], 3);
        let priors = PriorSpec {
            fixed_precision: Some(2.0),
            ..PriorSpec::default()
        };
        let f = fit_node(&d, Family::GaussianIdentity, FitMethod::Bayes, &priors).unwrap();
        // exact posterior covariance of the conjugate model
        let x = &d.predictors;
        let prec = x.transpose() * x * 2.0 + nalgebra::DMatrix::identity(2, 2) / 1000.0;
        let cov = prec.try_inverse().unwrap();
        let xty = x.transpose() * &d.response * 2.0;
        let mean = &cov * xty;
        let ms = marginal_densities(&f, 401, &RangePolicy::default()).unwrap();
        for (k, m) in ms.iter().enumerate() {
            let sd = cov[(k, k)].sqrt();
            let area = m.raw_area;
            for (t, dens) in m.grid.iter().zip(&m.density) {
                let exact = (-(t - mean[k]).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt());
                assert!((dens * area - exact).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn narrow_range_rejected() {
        let d = simulate(Family::PoissonLog, 60, &[0.5], 1);
        let f = fit_node(&d, Family::PoissonLog, FitMethod::Bayes, &PriorSpec::default()).unwrap();
        let e = marginal_densities(&f, 50, &RangePolicy { sd_multiple: 2.0 });
        assert!(matches!(e, Err(Error::RangeTooNarrow(_))));
    }
}
