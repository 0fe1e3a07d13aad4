//! Per-node GLM fitting and scoring.
//!
//! Two estimation routes share one result type:
//!
//! * `mle`: IRLS to convergence; binomial nodes that diverge (separation)
//!   are refit with Firth's bias-reduced score; designs that stay singular or
//!   non-finite lose predictors one at a time until they fit.
//! * `bayes`: Newton ascent to the posterior mode under independent
//!   gaussian coefficient priors and a Gamma prior on the gaussian precision,
//!   which is optimized on the log scale. The Laplace approximation at the
//!   mode gives the log marginal likelihood used as the network score.

mod bayes;
mod contrib;
mod density;
mod family;
mod mle;

pub use bayes::laplace_marginal_likelihood;
pub use contrib::{frequentist_scores, score_contribution, FrequentistScores, ScoreContribution};
pub use density::{marginal_densities, MarginalDensity, RangePolicy};
pub use family::Family;

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Estimation route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Bayes,
    Mle,
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::Bayes => "bayes",
            FitMethod::Mle => "mle",
        })
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes" => Ok(FitMethod::Bayes),
            "mle" => Ok(FitMethod::Mle),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

/// Parameter priors for the bayes route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub coef_mean: f64,
    pub coef_variance: f64,
    /// Gamma shape for the gaussian precision.
    pub precision_shape: f64,
    /// Gamma rate for the gaussian precision.
    pub precision_rate: f64,
    /// Treat the gaussian precision as known instead of estimating it.
    pub fixed_precision: Option<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            coef_mean: 0.0,
            coef_variance: 1000.0,
            precision_shape: 0.001,
            precision_rate: 0.001,
            fixed_precision: None,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.coef_variance > 0.0
            && self.precision_shape > 0.0
            && self.precision_rate > 0.0
            && self.fixed_precision.is_none_or(|t| t > 0.0 && t.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Parse("prior variance, shape, rate and precision must be positive".into()))
        }
    }
}

/// Convergence controls. Defaults: relative deviance change below 1e-8,
/// at most 100 iterations, |coefficient| above 500 counts as unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_abs_coefficient: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-8,
            max_iterations: 100,
            max_abs_coefficient: 500.0,
        }
    }
}

/// A fitted node model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub child: String,
    pub family: Family,
    pub method: FitMethod,
    /// Labels of the retained predictors (`(Intercept)` first).
    pub labels: Vec<String>,
    /// Posterior modes (bayes) or MLEs, aligned with `labels`.
    pub coefficients: Vec<f64>,
    /// Log of the gaussian precision (gaussian family only).
    pub log_precision: Option<f64>,
    /// Negative Hessian of the log posterior (bayes) or log-likelihood
    /// (mle) at the optimum, over coefficients then log-precision when it is
    /// estimated.
    pub neg_hessian: DMatrix<f64>,
    pub log_likelihood: f64,
    /// Laplace log marginal likelihood (bayes only).
    pub mlik: Option<f64>,
    pub dropped_predictors: Vec<String>,
    pub used_firth: bool,
    pub iterations: usize,
    pub n_obs: usize,
}

impl FitResult {
    /// Coefficient names in `child|label` form.
    pub fn coefficient_names(&self) -> Vec<String> {
        self.labels
            .iter()
            .map(|l| format!("{}|{}", self.child, l))
            .collect()
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|k| self.coefficients[k])
    }

    /// Total number of free parameters (coefficients plus an estimated precision).
    pub fn n_params(&self) -> usize {
        self.neg_hessian.nrows()
    }

    /// Posterior (or asymptotic) standard deviations from the inverse
    /// negative Hessian.
    pub fn standard_errors(&self) -> Result<Vec<f64>> {
        let inv = self
            .neg_hessian
            .clone()
            .cholesky()
            .ok_or(Error::NonPositiveDefiniteHessian)?
            .inverse();
        Ok((0..inv.nrows()).map(|k| inv[(k, k)].sqrt()).collect())
    }

    /// Parameter labels including the log-precision if present.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = self.coefficient_names();
        if self.n_params() > self.coefficients.len() {
            names.push(format!("{}|log.precision", self.child));
        }
        names
    }

    /// Parameter values aligned with [`FitResult::parameter_names`].
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = self.coefficients.clone();
        if self.n_params() > v.len() {
            v.push(self.log_precision.expect("estimated precision"));
        }
        v
    }

    pub(crate) fn design_for(&self, design: &DesignMatrix) -> Result<DesignMatrix> {
        let keep: Vec<usize> = self
            .labels
            .iter()
            .map(|l| {
                design
                    .labels
                    .iter()
                    .position(|d| d == l)
                    .ok_or_else(|| Error::UnknownName(l.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(design.select(&keep))
    }

    /// Plain-text table of coefficients, standard deviations and scores.
    pub fn to_text(&self) -> String {
        let se = self.standard_errors().unwrap_or_else(|_| vec![f64::NAN; self.n_params()]);
        let mut s = format!(
            "node {} family {} method {}\n",
            self.child,
            match self.family {
                Family::BinomialLogit => "binomial",
                Family::GaussianIdentity => "gaussian",
                Family::PoissonLog => "poisson",
            },
            self.method
        );
        for ((name, v), sd) in self
            .parameter_names()
            .iter()
            .zip(self.parameters())
            .zip(se)
        {
            s.push_str(&format!("{name} {v:.6} {sd:.6}\n"));
        }
        s.push_str(&format!("loglik {:.6}\n", self.log_likelihood));
        if let Some(m) = self.mlik {
            s.push_str(&format!("mlik {m:.6}\n"));
        }
        if !self.dropped_predictors.is_empty() {
            s.push_str(&format!("dropped {}\n", self.dropped_predictors.join(",")));
        }
        if self.used_firth {
            s.push_str("firth true\n");
        }
        s
    }
}

pub(crate) fn check_finite(design: &DesignMatrix) -> Result<()> {
    if design.n_obs() == 0 {
        return Err(Error::NoObservations);
    }
    if design.width() == 0 {
        return Err(Error::FitFailed("empty design".into()));
    }
    if design.response.iter().any(|v| !v.is_finite())
        || design.predictors.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteData);
    }
    Ok(())
}

/// `X' diag(w) X`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut g = DMatrix::zeros(p, p);
    for a in 0..p {
        let xa = x.column(a);
        for b in 0..=a {
            let xb = x.column(b);
            let mut s = 0.0;
            for i in 0..n {
                s += w[i] * xa[i] * xb[i];
            }
            g[(a, b)] = s;
            g[(b, a)] = s;
        }
    }
    g
}

/// `X' v`.
pub(crate) fn xt_vec(x: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        x.ncols(),
        x.column_iter()
            .map(|c| c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()),
    )
}

/// Diagonal of the weighted projection `W^½ X (X'WX)⁻¹ X' W^½`.
pub(crate) fn hat_diagonal(x: &DMatrix<f64>, w: &[f64]) -> Option<Vec<f64>> {
    let chol = weighted_gram(x, w).cholesky()?;
    let n = x.nrows();
    let mut h = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.row(i).transpose();
        let sol = chol.solve(&xi);
        h.push(w[i] * xi.dot(&sol));
    }
    Some(h)
}

pub(crate) fn linear_predictor(x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (x * beta).iter().copied().collect()
}

/// Gradient of the log-likelihood with respect to the coefficients (and the
/// log-precision when `log_precision` is given for a gaussian node).
pub fn score_vector(
    design: &DesignMatrix,
    family: Family,
    coefficients: &[f64],
    log_precision: Option<f64>,
) -> Vec<f64> {
    let x = &design.predictors;
    let eta = linear_predictor(x, &DVector::from_column_slice(coefficients));
    let y = design.response.as_slice();
    let tau = log_precision.map_or(1.0, f64::exp);
    let resid: Vec<f64> = y
        .iter()
        .zip(&eta)
        .map(|(&y, &e)| tau * (y - family.mean(e)))
        .collect();
    let mut g: Vec<f64> = xt_vec(x, &resid).iter().copied().collect();
    if let (true, Some(_)) = (family.has_precision(), log_precision) {
        let rss: f64 = y.iter().zip(&eta).map(|(y, e)| (y - e).powi(2)).sum();
        g.push(0.5 * y.len() as f64 - 0.5 * tau * rss);
    }
    g
}

/// Fits one node with default convergence options.
pub fn fit_node(
    design: &DesignMatrix,
    family: Family,
    method: FitMethod,
    priors: &PriorSpec,
) -> Result<FitResult> {
    fit_node_with(design, family, method, priors, &FitOptions::default())
}

pub fn fit_node_with(
    design: &DesignMatrix,
    family: Family,
    method: FitMethod,
    priors: &PriorSpec,
    options: &FitOptions,
) -> Result<FitResult> {
    check_finite(design)?;
    match method {
        FitMethod::Mle => mle::fit(design, family, options),
        FitMethod::Bayes => {
            priors.validate()?;
            bayes::fit(design, family, priors, options)
        }
    }
}

/// Fits every node of `dag` on its parents, in node order.
pub fn fit_dag(
    ds: &crate::data::Dataset,
    dag: &crate::dag::Dag,
    method: FitMethod,
    priors: &PriorSpec,
) -> Result<Vec<FitResult>> {
    if ds.names() != dag.nodes() {
        return Err(Error::NodeSetMismatch);
    }
    (0..dag.n_nodes())
        .map(|i| {
            let design = crate::data::build_design(ds, i, dag.parents_of(i))?;
            fit_node(&design, ds.dists()[i].into(), method, priors)
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn errors_on_bad_input() {
        let d = design(&[], vec![]);
        assert_eq!(
            fit_node(&d, Family::GaussianIdentity, FitMethod::Mle, &PriorSpec::default()),
            Err(Error::NoObservations)
        );
        let d = design(&[vec![1.0, f64::NAN]], vec![0.0, 1.0]);
        assert_eq!(
            fit_node(&d, Family::GaussianIdentity, FitMethod::Mle, &PriorSpec::default()),
            Err(Error::NonFiniteData)
        );
    }

    #[test]
    fn hat_diagonal_is_projection_trace() {
        let d = simulate(Family::GaussianIdentity, 40, &[0.5, 1.0, -1.0], 3);
        let h = hat_diagonal(&d.predictors, &[1.0; 40]).unwrap();
        assert!((h.iter().sum::<f64>() - 3.0).abs() < 1e-10);
        assert!(h.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn text_report_names() {
        let d = simulate(Family::BinomialLogit, 200, &[0.0, 1.0], 1);
        let f = fit_node(&d, Family::BinomialLogit, FitMethod::Bayes, &PriorSpec::default())
            .unwrap();
        let t = f.to_text();
        assert!(t.contains("y|x1 "));
        assert!(t.contains("mlik "));
    }

    #[test]
    fn score_vector_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for case in 0..100u64 {
            let fam = [Family::BinomialLogit, Family::PoissonLog, Family::GaussianIdentity][case as usize % 3];
            let d = simulate(fam, 25, &[0.2, 0.5, -0.4], case);
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let psi = fam.has_precision().then(|| rng.random_range(-1.0..1.0));
            let ll = |b: &[f64], s: Option<f64>| -> f64 {
                let eta = linear_predictor(&d.predictors, &DVector::from_column_slice(b));
                d.response.iter().zip(&eta).map(|(&y, &e)| fam.log_density(y, e, s.unwrap_or(0.0))).sum()
            };
            let g = score_vector(&d, fam, &beta, psi);
            let h = 1e-6;
            let mut params = beta.clone();
            params.extend(psi);
            for k in 0..params.len() {
                let mut up = params.clone();
                let mut dn = params.clone();
                up[k] += h;
                dn[k] -= h;
                let split = |v: &[f64]| (v[..3].to_vec(), psi.map(|_| v[3]));
                let (bu, su) = split(&up);
                let (bd, sd) = split(&dn);
                let fd = (ll(&bu, su) - ll(&bd, sd)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-4 * g[k].abs().max(1.0), "case {case} k {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn bayes_and_mle_agree_with_enough_data() {
        for (seed, fam) in [Family::BinomialLogit, Family::PoissonLog, Family::GaussianIdentity].into_iter().enumerate() {
            let d = simulate(fam, 400, &[0.3, 0.7, -0.5], seed as u64);
            let b = fit_node(&d, fam, FitMethod::Bayes, &PriorSpec::default()).unwrap();
            let m = fit_node(&d, fam, FitMethod::Mle, &PriorSpec::default()).unwrap();
            for (x, y) in b.coefficients.iter().zip(&m.coefficients) {
                assert!((x - y).abs() < 0.05);
            }
        }
    }

    #[test]
    fn laplace_invariant_to_column_order() {
        for fam in [Family::BinomialLogit, Family::PoissonLog, Family::GaussianIdentity] {
            let d = simulate(fam, 150, &[0.1, 0.4, -0.3, 0.2], 6);
            let perm = d.select(&[0, 3, 1, 2]);
            let a = fit_node(&d, fam, FitMethod::Bayes, &PriorSpec::default()).unwrap();
            let b = fit_node(&perm, fam, FitMethod::Bayes, &PriorSpec::default()).unwrap();
            assert!((a.mlik.unwrap() - b.mlik.unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn laplace_near_quadrature_for_intercept_only_binomial() {
        // ∫ L(θ) π(θ) dθ by the trapezoid rule on [-30, 30]
        let quad = |y: &[f64]| -> f64 {
            let n_pts = 600_001;
            let h = 60.0 / (n_pts - 1) as f64;
            let v = 1000.0;
            let mut acc = 0.0;
            for k in 0..n_pts {
                let t = -30.0 + k as f64 * h;
                let ones: f64 = y.iter().sum();
                let lp = ones * t - y.len() as f64 * family::softplus(t)
                    - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
                    - t * t / (2.0 * v);
                let w = if k == 0 || k == n_pts - 1 { 0.5 } else { 1.0 };
                acc += w * lp.exp();
            }
            (acc * h).ln()
        };
        for (ones, n) in [(40, 100), (70, 200), (500, 1000)] {
            let y: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i < ones))).collect();
            let d = design(&[], y.clone());
            let f = fit_node(&d, Family::BinomialLogit, FitMethod::Bayes, &PriorSpec::default()).unwrap();
            assert!((f.mlik.unwrap() - quad(&y)).abs() < 5e-3, "n={n}");
        }
        // two observations: Laplace misses the logistic tails by ln(√π/2)
        let d = design(&[], vec![0.0, 1.0]);
        let f = fit_node(&d, Family::BinomialLogit, FitMethod::Bayes, &PriorSpec::default()).unwrap();
        let gap = f.mlik.unwrap() - quad(&[0.0, 1.0]);
        assert!((gap - (std::f64::consts::PI.sqrt() / 2.0).ln()).abs() < 2e-3, "{gap}");
    }

    #[test]
    fn firth_finite_on_separated_suite() {
        use rand::{Rng, SeedableRng};
        for case in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(case);
            let n = rng.random_range(6..60);
            let p = rng.random_range(1..4);
            let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let cut = rng.random_range(-0.5..0.5);
            let mut y: Vec<f64> = (0..n).map(|i| f64::from(u8::from(cols[0][i] > cut))).collect();
            if y.iter().all(|&v| v == y[0]) {
                y[0] = 1.0 - y[0];
            }
            let d = design(&cols, y);
            let f = fit_node(&d, Family::BinomialLogit, FitMethod::Mle, &PriorSpec::default()).unwrap();
            assert!(f.coefficients.iter().all(|c| c.is_finite()), "case {case}");
        }
    }
}
