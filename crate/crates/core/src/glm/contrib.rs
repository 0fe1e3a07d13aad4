use super::{hat_diagonal, linear_predictor, FitMethod, FitResult};
use super::family::Family;
use crate::data::DesignMatrix;
use crate::error::Result;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Per-observation log-likelihood terms and leverages at the fitted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreContribution {
    pub log_likelihood: Vec<f64>,
    pub hat_diagonal: Vec<f64>,
}

pub fn score_contribution(
    fit: &FitResult,
    design: &DesignMatrix,
    family: Family,
) -> Result<ScoreContribution> {
    let design = fit.design_for(design)?;
    let beta = DVector::from_column_slice(&fit.coefficients);
    let eta = linear_predictor(&design.predictors, &beta);
    let psi = fit.log_precision.unwrap_or(0.0);
    let y = design.response.as_slice();
    let log_likelihood: Vec<f64> = y
        .iter()
        .zip(&eta)
        .map(|(&y, &e)| family.log_density(y, e, psi))
        .collect();
    let w: Vec<f64> = eta.iter().map(|&e| family.variance(family.mean(e))).collect();
    let hat = hat_diagonal(&design.predictors, &w)
        .ok_or(crate::error::Error::NonPositiveDefiniteHessian)?
        .into_iter()
        .map(|h| h.clamp(0.0, 1.0))
        .collect();
    Ok(ScoreContribution {
        log_likelihood,
        hat_diagonal: hat,
    })
}

/// Penalized-likelihood scores, larger is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequentistScores {
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub mdl: f64,
}

fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `k` counts coefficients plus the gaussian variance. The MDL structure
/// term encodes which `n_parents` of `n_candidates` possible parents were
/// chosen.
pub fn frequentist_scores(fit: &FitResult, n_obs: usize, n_candidates: usize) -> FrequentistScores {
    debug_assert_eq!(fit.method, FitMethod::Mle);
    let k = fit.n_params() as f64;
    let ll = fit.log_likelihood;
    let bic = ll - 0.5 * k * (n_obs as f64).ln();
    let n_parents = fit.coefficients.len().saturating_sub(1);
    FrequentistScores {
        loglik: ll,
        aic: ll - k,
        bic,
        mdl: bic - ln_choose(n_candidates, n_parents),
    }
}
