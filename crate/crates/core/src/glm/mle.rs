//! Maximum likelihood: IRLS, Firth fallback for binomial separation, and
//! greedy predictor removal for designs that will not fit.

use super::family::Family;
use super::{linear_predictor, weighted_gram, xt_vec, FitMethod, FitOptions, FitResult};
use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Fitted probabilities closer than this to 0 or 1 mark a separated fit.
const SEPARATION_EPS: f64 = 1e-8;
/// Ridge used only to rank candidate predictor removals.
const RANKING_RIDGE: f64 = 1e-4;

#[derive(Debug)]
enum Status {
    Converged,
    NotConverged,
    Unbounded,
    Singular,
    Separated,
}

struct Outcome {
    beta: DVector<f64>,
    status: Status,
    iterations: usize,
}

fn deviance(family: Family, y: &[f64], eta: &[f64]) -> f64 {
    y.iter()
        .zip(eta)
        .map(|(&y, &e)| match family {
            Family::BinomialLogit => -2.0 * family.log_density(y, e, 0.0),
            Family::PoissonLog => {
                let mu = e.exp();
                let t = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (t - (y - mu))
            }
            Family::GaussianIdentity => (y - e).powi(2),
        })
        .sum()
}

fn start(x: &DMatrix<f64>, y: &[f64], family: Family) -> DVector<f64> {
    let mut beta = DVector::zeros(x.ncols());
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    beta[0] = family.start_intercept(mean);
    beta
}

fn irls(x: &DMatrix<f64>, y: &[f64], family: Family, opts: &FitOptions, ridge: f64) -> Outcome {
    let n = y.len();
    let mut beta = start(x, y, family);
    let mut eta = linear_predictor(x, &beta);
    let mut dev_old = deviance(family, y, &eta);
    for it in 1..=opts.max_iterations {
        let mut w = vec![0.0; n];
        let mut work = vec![0.0; n];
        for i in 0..n {
            let mu = family.mean(eta[i]);
            w[i] = family.variance(mu).max(1e-300);
            // W z = W eta + (y - mu)
            work[i] = w[i] * eta[i] + (y[i] - mu);
        }
        let mut g = weighted_gram(x, &w);
        for k in 0..g.nrows() {
            g[(k, k)] += ridge;
        }
        let Some(chol) = g.cholesky() else {
            return Outcome {
                beta,
                status: Status::Singular,
                iterations: it,
            };
        };
        let target = chol.solve(&xt_vec(x, &work));
        let mut step = &target - &beta;
        let mut cand = &beta + &step;
        let mut new_eta = linear_predictor(x, &cand);
        let mut dev = deviance(family, y, &new_eta);
        let mut halvings = 0;
        while (!dev.is_finite() || dev > dev_old * (1.0 + 1e-12) + 1e-12) && halvings < 30 {
            step /= 2.0;
            cand = &beta + &step;
            new_eta = linear_predictor(x, &cand);
            dev = deviance(family, y, &new_eta);
            halvings += 1;
        }
        beta = cand;
        eta = new_eta;
        if family != Family::GaussianIdentity && beta.amax() > opts.max_abs_coefficient {
            return Outcome {
                beta,
                status: Status::Unbounded,
                iterations: it,
            };
        }
        if (dev - dev_old).abs() / (dev.abs() + 0.1) < opts.tolerance {
            let separated = family == Family::BinomialLogit
                && ridge == 0.0
                && eta.iter().any(|&e| {
                    let p = family.mean(e);
                    !(SEPARATION_EPS..=1.0 - SEPARATION_EPS).contains(&p)
                });
            return Outcome {
                beta,
                status: if separated {
                    Status::Separated
                } else {
                    Status::Converged
                },
                iterations: it,
            };
        }
        dev_old = dev;
    }
    Outcome {
        beta,
        status: Status::NotConverged,
        iterations: opts.max_iterations,
    }
}

fn loglik(family: Family, y: &[f64], eta: &[f64], log_precision: f64) -> f64 {
    y.iter()
        .zip(eta)
        .map(|(&y, &e)| family.log_density(y, e, log_precision))
        .sum()
}

/// Firth-penalized logistic regression (Jeffreys-prior penalty).
fn firth(x: &DMatrix<f64>, y: &[f64], opts: &FitOptions) -> Outcome {
    let family = Family::BinomialLogit;
    let n = y.len();
    let mut beta = start(x, y, family);
    let penalized = |beta: &DVector<f64>| -> Option<f64> {
        let eta = linear_predictor(x, beta);
        let w: Vec<f64> = eta
            .iter()
            .map(|&e| family.variance(family.mean(e)))
            .collect();
        let chol = weighted_gram(x, &w).cholesky()?;
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        Some(loglik(family, y, &eta, 0.0) + 0.5 * logdet)
    };
    let Some(mut current) = penalized(&beta) else {
        return Outcome {
            beta,
            status: Status::Singular,
            iterations: 0,
        };
    };
    let max_iter = opts.max_iterations.max(200);
    for it in 1..=max_iter {
        let eta = linear_predictor(x, &beta);
        let mu: Vec<f64> = eta.iter().map(|&e| family.mean(e)).collect();
        let w: Vec<f64> = mu.iter().map(|&m| family.variance(m)).collect();
        let Some(chol) = weighted_gram(x, &w).cholesky() else {
            return Outcome {
                beta,
                status: Status::Singular,
                iterations: it,
            };
        };
        let mut adj = vec![0.0; n];
        for i in 0..n {
            let xi = x.row(i).transpose();
            let h = w[i] * xi.dot(&chol.solve(&xi));
            adj[i] = y[i] - mu[i] + h * (0.5 - mu[i]);
        }
        let mut step = chol.solve(&xt_vec(x, &adj));
        let mut cand = &beta + &step;
        let mut value = penalized(&cand);
        let mut halvings = 0;
        while value.is_none_or(|v| !v.is_finite() || v < current - 1e-12 * current.abs())
            && halvings < 30
        {
            step /= 2.0;
            cand = &beta + &step;
            value = penalized(&cand);
            halvings += 1;
        }
        let Some(v) = value else {
            return Outcome {
                beta,
                status: Status::Singular,
                iterations: it,
            };
        };
        beta = cand;
        current = v;
        if beta.amax() > opts.max_abs_coefficient {
            return Outcome {
                beta,
                status: Status::Unbounded,
                iterations: it,
            };
        }
        if step.amax() < 1e-9 {
            return Outcome {
                beta,
                status: Status::Converged,
                iterations: it,
            };
        }
    }
    Outcome {
        beta,
        status: Status::NotConverged,
        iterations: max_iter,
    }
}

fn rank_deficient(x: &DMatrix<f64>) -> bool {
    let p = x.ncols();
    let g = weighted_gram(x, &vec![1.0; x.nrows()]);
    let d: Vec<f64> = (0..p).map(|k| g[(k, k)]).collect();
    if d.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return true;
    }
    let scaled = DMatrix::from_fn(p, p, |a, b| g[(a, b)] / (d[a] * d[b]).sqrt());
    let eig = scaled.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    !(min > max * 1e-10)
}

fn build(
    design: &DesignMatrix,
    family: Family,
    beta: DVector<f64>,
    iterations: usize,
    used_firth: bool,
) -> Result<FitResult> {
    let x = &design.predictors;
    let y = design.response.as_slice();
    let n = y.len();
    let eta = linear_predictor(x, &beta);
    let (log_precision, neg_hessian, ll) = if family.has_precision() {
        let rss: f64 = y.iter().zip(&eta).map(|(a, b)| (a - b).powi(2)).sum();
        let psi = (n as f64 / rss).ln();
        if !psi.is_finite() {
            return Err(Error::FitFailed("gaussian residual variance is zero".into()));
        }
        let p = beta.len();
        let mut h = DMatrix::zeros(p + 1, p + 1);
        let tau = psi.exp();
        h.view_mut((0, 0), (p, p))
            .copy_from(&(weighted_gram(x, &vec![1.0; n]) * tau));
        h[(p, p)] = n as f64 / 2.0;
        (Some(psi), h, loglik(family, y, &eta, psi))
    } else {
        let w: Vec<f64> = eta
            .iter()
            .map(|&e| family.variance(family.mean(e)))
            .collect();
        (None, weighted_gram(x, &w), loglik(family, y, &eta, 0.0))
    };
    if !ll.is_finite() || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFiniteData);
    }
    Ok(FitResult {
        child: design.child.clone(),
        family,
        method: FitMethod::Mle,
        labels: design.labels.clone(),
        coefficients: beta.iter().copied().collect(),
        log_precision,
        neg_hessian,
        log_likelihood: ll,
        mlik: None,
        dropped_predictors: Vec::new(),
        used_firth,
        iterations,
        n_obs: n,
    })
}

fn try_fit(design: &DesignMatrix, family: Family, opts: &FitOptions) -> Result<FitResult> {
    let x = &design.predictors;
    let y = design.response.as_slice();
    if rank_deficient(x) {
        return Err(Error::FitFailed("design matrix is rank deficient".into()));
    }
    let out = irls(x, y, family, opts, 0.0);
    match out.status {
        Status::Converged => build(design, family, out.beta, out.iterations, false),
        _ if family == Family::BinomialLogit => {
            let f = firth(x, y, opts);
            match f.status {
                Status::Converged => build(design, family, f.beta, out.iterations + f.iterations, true),
                s => Err(Error::FitFailed(format!("firth refit: {s:?}"))),
            }
        }
        s => Err(Error::FitFailed(format!("irls: {s:?}"))),
    }
}

/// Log-likelihood of a lightly ridged fit; finite even for singular or
/// separated designs, used only to order predictor removals.
fn ranking_loglik(design: &DesignMatrix, family: Family, opts: &FitOptions) -> f64 {
    let x = &design.predictors;
    let y = design.response.as_slice();
    let out = irls(x, y, family, opts, RANKING_RIDGE);
    let eta = linear_predictor(x, &out.beta);
    let psi = if family.has_precision() {
        let rss: f64 = y.iter().zip(&eta).map(|(a, b)| (a - b).powi(2)).sum();
        (y.len() as f64 / rss.max(1e-300)).ln()
    } else {
        0.0
    };
    let ll = loglik(family, y, &eta, psi);
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

pub(super) fn fit(design: &DesignMatrix, family: Family, opts: &FitOptions) -> Result<FitResult> {
    let mut keep: Vec<usize> = (0..design.width()).collect();
    let mut dropped = Vec::new();
    loop {
        let current = design.select(&keep);
        match try_fit(&current, family, opts) {
            Ok(mut r) => {
                r.dropped_predictors = dropped;
                return Ok(r);
            }
            Err(e) if keep.len() <= 1 => return Err(e),
            Err(_) => {
                // drop the predictor whose removal costs the least likelihood
                let mut best: Option<(usize, f64)> = None;
                for pos in 1..keep.len() {
                    let mut reduced = keep.clone();
                    reduced.remove(pos);
                    let ll = ranking_loglik(&design.select(&reduced), family, opts);
                    let better = match best {
                        None => true,
                        Some((bp, bl)) => {
                            ll > bl
                                || (ll == bl
                                    && design.labels[keep[pos]] < design.labels[keep[bp]])
                        }
                    };
                    if better {
                        best = Some((pos, ll));
                    }
                }
                let (pos, _) = best.expect("at least one predictor");
                dropped.push(design.labels[keep[pos]].clone());
                keep.remove(pos);
            }
        }
    }
}
