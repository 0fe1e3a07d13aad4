//! Posterior mode and Laplace-approximate marginal likelihood.

use super::family::Family;
use super::{
    linear_predictor, weighted_gram, xt_vec, FitMethod, FitOptions, FitResult, PriorSpec,
};
use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

const MAX_NEWTON: usize = 200;
const MAX_COORDINATE: usize = 10_000;

fn log_coef_prior(beta: &[f64], priors: &PriorSpec) -> f64 {
    let v = priors.coef_variance;
    beta.iter()
        .map(|b| -0.5 * (2.0 * PI * v).ln() - (b - priors.coef_mean).powi(2) / (2.0 * v))
        .sum()
}

/// Gamma(shape, rate) prior on the precision, expressed as a density over
/// the log-precision (Jacobian included).
fn log_precision_prior(psi: f64, priors: &PriorSpec) -> f64 {
    let (a, b) = (priors.precision_shape, priors.precision_rate);
    a * b.ln() - ln_gamma(a) + a * psi - b * psi.exp()
}

fn loglik(family: Family, y: &[f64], eta: &[f64], psi: f64) -> f64 {
    y.iter()
        .zip(eta)
        .map(|(&y, &e)| family.log_density(y, e, psi))
        .sum()
}

/// Unnormalized log posterior at `(beta, psi)`; `psi` is ignored unless the
/// family has an estimated precision.
pub(crate) fn log_posterior(
    design: &DesignMatrix,
    family: Family,
    priors: &PriorSpec,
    beta: &[f64],
    log_precision: Option<f64>,
) -> f64 {
    let eta = linear_predictor(&design.predictors, &DVector::from_column_slice(beta));
    let y = design.response.as_slice();
    let mut f = log_coef_prior(beta, priors);
    match (family.has_precision(), priors.fixed_precision) {
        (true, Some(tau)) => f += loglik(family, y, &eta, tau.ln()),
        (true, None) => {
            let psi = log_precision.expect("gaussian fit carries a log precision");
            f += loglik(family, y, &eta, psi) + log_precision_prior(psi, priors);
        }
        (false, _) => f += loglik(family, y, &eta, 0.0),
    }
    f
}

fn mode_glm(
    design: &DesignMatrix,
    family: Family,
    priors: &PriorSpec,
    opts: &FitOptions,
) -> Result<(DVector<f64>, DMatrix<f64>, usize)> {
    let x = &design.predictors;
    let y = design.response.as_slice();
    let (n, p) = x.shape();
    let v = priors.coef_variance;
    let mut beta = DVector::zeros(p);
    let mean = y.iter().sum::<f64>() / n as f64;
    beta[0] = family.start_intercept(mean);
    let objective = |b: &DVector<f64>| {
        let eta = linear_predictor(x, b);
        loglik(family, y, &eta, 0.0) + log_coef_prior(b.as_slice(), priors)
    };
    let mut current = objective(&beta);
    for it in 1..=MAX_NEWTON.max(opts.max_iterations) {
        let eta = linear_predictor(x, &beta);
        let mut resid = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mu = family.mean(eta[i]);
            resid[i] = y[i] - mu;
            w[i] = family.variance(mu);
        }
        let mut neg_h = weighted_gram(x, &w);
        for k in 0..p {
            neg_h[(k, k)] += 1.0 / v;
        }
        let grad = xt_vec(x, &resid) - beta.map(|b| (b - priors.coef_mean) / v);
        let chol = neg_h.clone().cholesky().ok_or(Error::NonPositiveDefiniteHessian)?;
        let mut step = chol.solve(&grad);
        let mut cand = &beta + &step;
        let mut value = objective(&cand);
        let mut halvings = 0;
        while (!value.is_finite() || value < current) && halvings < 40 {
            step /= 2.0;
            cand = &beta + &step;
            value = objective(&cand);
            halvings += 1;
        }
        if !value.is_finite() {
            return Err(Error::FitFailed("posterior mode search left the finite region".into()));
        }
        let gain = value - current;
        if value >= current {
            beta = cand;
            current = value;
        }
        if step.amax() < 1e-10 || gain.abs() < 1e-13 * (1.0 + current.abs()) {
            let eta = linear_predictor(x, &beta);
            let w: Vec<f64> = eta.iter().map(|&e| family.variance(family.mean(e))).collect();
            let mut neg_h = weighted_gram(x, &w);
            for k in 0..p {
                neg_h[(k, k)] += 1.0 / v;
            }
            return Ok((beta, neg_h, it));
        }
    }
    Err(Error::FitFailed("posterior mode search did not converge".into()))
}

/// Gaussian node: block coordinate ascent over coefficients (closed form
/// given the precision) and log-precision (closed form given the
/// coefficients), then the joint negative Hessian.
fn mode_gaussian(
    design: &DesignMatrix,
    priors: &PriorSpec,
) -> Result<(DVector<f64>, Option<f64>, DMatrix<f64>, usize)> {
    let x = &design.predictors;
    let y = design.response.as_slice();
    let (n, p) = x.shape();
    let v = priors.coef_variance;
    let gram = weighted_gram(x, &vec![1.0; n]);
    let xty = xt_vec(x, y);
    let solve_beta = |tau: f64| -> Result<DVector<f64>> {
        let mut a = &gram * tau;
        for k in 0..p {
            a[(k, k)] += 1.0 / v;
        }
        let rhs = &xty * tau + DVector::from_element(p, priors.coef_mean / v);
        Ok(a.cholesky().ok_or(Error::NonPositiveDefiniteHessian)?.solve(&rhs))
    };
    let rss_of = |b: &DVector<f64>| -> f64 {
        linear_predictor(x, b)
            .iter()
            .zip(y)
            .map(|(e, y)| (y - e).powi(2))
            .sum()
    };

    if let Some(tau) = priors.fixed_precision {
        let beta = solve_beta(tau)?;
        let mut neg_h = &gram * tau;
        for k in 0..p {
            neg_h[(k, k)] += 1.0 / v;
        }
        return Ok((beta, None, neg_h, 1));
    }

    let (a, b) = (priors.precision_shape, priors.precision_rate);
    let mean = y.iter().sum::<f64>() / n as f64;
    let var0 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let mut tau = 1.0 / var0.max(1e-12);
    let mut beta = solve_beta(tau)?;
    let mut iterations = 0;
    for it in 1..=MAX_COORDINATE {
        iterations = it;
        let rss = rss_of(&beta);
        let tau_new = (n as f64 / 2.0 + a) / (rss / 2.0 + b);
        let beta_new = solve_beta(tau_new)?;
        let d_psi = (tau_new.ln() - tau.ln()).abs();
        let d_beta = (&beta_new - &beta).amax();
        tau = tau_new;
        beta = beta_new;
        if d_psi < 1e-13 && d_beta < 1e-12 {
            break;
        }
    }
    let psi = tau.ln();
    if !psi.is_finite() {
        return Err(Error::FitFailed("gaussian precision is not finite".into()));
    }
    let resid: Vec<f64> = linear_predictor(x, &beta)
        .iter()
        .zip(y)
        .map(|(e, y)| y - e)
        .collect();
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let cross = xt_vec(x, &resid) * tau;
    let mut neg_h = DMatrix::zeros(p + 1, p + 1);
    neg_h.view_mut((0, 0), (p, p)).copy_from(&(&gram * tau));
    for k in 0..p {
        neg_h[(k, k)] += 1.0 / v;
        neg_h[(k, p)] = -cross[k];
        neg_h[(p, k)] = -cross[k];
    }
    neg_h[(p, p)] = tau * rss / 2.0 + b * tau;
    Ok((beta, Some(psi), neg_h, iterations))
}

pub(super) fn fit(
    design: &DesignMatrix,
    family: Family,
    priors: &PriorSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    let (beta, psi, neg_h, iterations) = if family.has_precision() {
        mode_gaussian(design, priors)?
    } else {
        let (b, h, it) = mode_glm(design, family, priors, opts)?;
        (b, None, h, it)
    };
    let y = design.response.as_slice();
    let eta = linear_predictor(&design.predictors, &beta);
    let ll_psi = match (family.has_precision(), priors.fixed_precision) {
        (true, Some(t)) => t.ln(),
        (true, None) => psi.expect("estimated"),
        _ => 0.0,
    };
    let mut result = FitResult {
        child: design.child.clone(),
        family,
        method: FitMethod::Bayes,
        labels: design.labels.clone(),
        coefficients: beta.iter().copied().collect(),
        log_precision: if family.has_precision() {
            Some(ll_psi)
        } else {
            None
        },
        neg_hessian: neg_h,
        log_likelihood: loglik(family, y, &eta, ll_psi),
        mlik: None,
        dropped_predictors: Vec::new(),
        used_firth: false,
        iterations,
        n_obs: y.len(),
    };
    result.mlik = Some(laplace_marginal_likelihood(&result, design, family, priors)?);
    Ok(result)
}

/// Laplace approximation to the log marginal likelihood at a posterior mode:
/// `log p(y, θ̂) + (d/2) log 2π − ½ log det(−H)`, where `d` counts every free
/// parameter (including the log-precision of a gaussian node).
pub fn laplace_marginal_likelihood(
    fit: &FitResult,
    design: &DesignMatrix,
    family: Family,
    priors: &PriorSpec,
) -> Result<f64> {
    if fit.method != FitMethod::Bayes {
        return Err(Error::ScoreMismatch(
            "Laplace marginal likelihood needs a bayes fit".into(),
        ));
    }
    let design = fit.design_for(design)?;
    let chol = fit
        .neg_hessian
        .clone()
        .cholesky()
        .ok_or(Error::NonPositiveDefiniteHessian)?;
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let d = fit.neg_hessian.nrows() as f64;
    let psi = if family.has_precision() && priors.fixed_precision.is_none() {
        fit.log_precision
    } else {
        None
    };
    let lp = log_posterior(&design, family, priors, &fit.coefficients, psi);
    Ok(lp + 0.5 * d * (2.0 * PI).ln() - 0.5 * logdet)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{fit_node, FitMethod, PriorSpec};
    use super::*;

    /// Exact log evidence of y ~ N(X m, τ⁻¹ I + v X Xᵀ) by an n×n Cholesky.
    fn conjugate_log_evidence(d: &DesignMatrix, tau: f64, v: f64, m: f64) -> f64 {
        let x = &d.predictors;
        let n = x.nrows();
        let cov = DMatrix::identity(n, n) / tau + (x * x.transpose()) * v;
        let mean = x * DVector::from_element(x.ncols(), m);
        let r = &d.response - mean;
        let chol = cov.cholesky().unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let quad = r.dot(&chol.solve(&r));
        -0.5 * (n as f64 * (2.0 * PI).ln() + logdet + quad)
    }

    #[test]
    fn laplace_exact_for_gaussian_with_known_precision() {
        for seed in 0..5 {
            let d = simulate(Family::GaussianIdentity, 30, &[0.3, 1.0, -0.5], seed);
            let priors = PriorSpec {
                fixed_precision: Some(1.7),
                coef_variance: 2.5,
                coef_mean: 0.1,
                ..PriorSpec::default()
            };
            let f = fit_node(&d, Family::GaussianIdentity, FitMethod::Bayes, &priors).unwrap();
            let exact = conjugate_log_evidence(&d, 1.7, 2.5, 0.1);
            assert!((f.mlik.unwrap() - exact).abs() < 1e-6, "{} vs {exact}", f.mlik.unwrap());
        }
    }

    #[test]
    fn flat_prior_limit_recovers_least_squares() {
        let d = simulate(Family::GaussianIdentity, 50, &[1.0, 2.0, -1.0], 4);
        let priors = PriorSpec {
            fixed_precision: Some(1.0),
            coef_variance: 1e12,
            ..PriorSpec::default()
        };
        let f = fit_node(&d, Family::GaussianIdentity, FitMethod::Bayes, &priors).unwrap();
        let x = &d.predictors;
        let ls = (x.transpose() * x).lu().solve(&(x.transpose() * &d.response)).unwrap();
        for (a, b) in f.coefficients.iter().zip(ls.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn bayes_tends_to_mle_as_prior_widens() {
        for fam in [Family::BinomialLogit, Family::PoissonLog] {
            let d = simulate(fam, 200, &[0.2, 0.8, -0.4], 11);
            let wide = PriorSpec {
                coef_variance: 1e8,
                ..PriorSpec::default()
            };
            let b = fit_node(&d, fam, FitMethod::Bayes, &wide).unwrap();
            let m = fit_node(&d, fam, FitMethod::Mle, &wide).unwrap();
            for (x, y) in b.coefficients.iter().zip(&m.coefficients) {
                assert!((x - y).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn gaussian_unknown_precision_mode_is_stationary() {
        let d = simulate(Family::GaussianIdentity, 100, &[0.5, 1.5], 8);
        let priors = PriorSpec::default();
        let f = fit_node(&d, Family::GaussianIdentity, FitMethod::Bayes, &priors).unwrap();
        let psi = f.log_precision.unwrap();
        let lp = |b0: f64, b1: f64, s: f64| log_posterior(&d, Family::GaussianIdentity, &priors, &[b0, b1], Some(s));
        let (b0, b1) = (f.coefficients[0], f.coefficients[1]);
        let h = 1e-5;
        let g_psi = (lp(b0, b1, psi + h) - lp(b0, b1, psi - h)) / (2.0 * h);
        let g_b1 = (lp(b0, b1 + h, psi) - lp(b0, b1 - h, psi)) / (2.0 * h);
        assert!(g_psi.abs() < 1e-4 && g_b1.abs() < 1e-4);
        // negative Hessian against central second differences
        let d2 = (lp(b0, b1, psi + h) - 2.0 * lp(b0, b1, psi) + lp(b0, b1, psi - h)) / (h * h);
        assert!((f.neg_hessian[(2, 2)] + d2).abs() / f.neg_hessian[(2, 2)] < 1e-3);
        assert_eq!(f.n_params(), 3);
    }

    #[test]
    fn laplace_requires_bayes_fit() {
        let d = simulate(Family::PoissonLog, 50, &[0.2, 0.3], 2);
        let m = fit_node(&d, Family::PoissonLog, FitMethod::Mle, &PriorSpec::default()).unwrap();
        assert!(laplace_marginal_likelihood(&m, &d, Family::PoissonLog, &PriorSpec::default()).is_err());
    }
}
