//! Random DAGs, grid-posterior parameter draws and ancestral data simulation.

use crate::dag::{bit, Dag};
use crate::data::{Dataset, Distribution, INTERCEPT};
use crate::error::{Error, Result};
use crate::glm::{FitResult, MarginalDensity};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest poisson rate that will be sampled.
pub const MAX_POISSON_RATE: f64 = 1e9;

/// Random DAG over nodes `X1..Xn`: a uniformly random node order, then each
/// forward arc independently with probability `arc_probability`.
pub fn simulate_dag(n_nodes: usize, arc_probability: f64, seed: u64) -> Result<Dag> {
    if !(0.0..=1.0).contains(&arc_probability) {
        return Err(Error::Parse("arc probability must lie in [0, 1]".into()));
    }
    if n_nodes > crate::dag::MAX_NODES {
        return Err(Error::TooManyNodes(n_nodes));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_nodes).collect();
    order.shuffle(&mut rng);
    let mut parents = vec![0u64; n_nodes];
    for b in 0..n_nodes {
        for a in 0..b {
            if rng.random::<f64>() < arc_probability {
                parents[order[b]] |= bit(order[a]);
            }
        }
    }
    let names = (1..=n_nodes).map(|i| format!("X{i}")).collect();
    Dag::new(names, parents)
}

/// A discretized marginal posterior for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub name: String,
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub params: Vec<ParamGrid>,
}

impl GridPosterior {
    /// Normalizes tabulated densities into categorical distributions.
    pub fn from_densities(densities: &[MarginalDensity]) -> Result<Self> {
        let params = densities
            .iter()
            .map(|d| ParamGrid::new(d.name.clone(), d.grid.clone(), d.density.clone()))
            .collect::<Result<_>>()?;
        Ok(GridPosterior { params })
    }
}

impl ParamGrid {
    pub fn new(name: String, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if values.is_empty()
            || values.len() != weights.len()
            || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || !(total > 0.0)
        {
            return Err(Error::Parse(format!("invalid grid for `{name}`")));
        }
        Ok(ParamGrid {
            name,
            values,
            probabilities: weights.iter().map(|w| w / total).collect(),
        })
    }
}

/// One independent categorical draw per parameter.
pub fn sample_posterior_params<R: Rng + ?Sized>(grids: &GridPosterior, rng: &mut R) -> Result<Vec<f64>> {
    grids
        .params
        .iter()
        .map(|g| {
            if g.values.len() == 1 {
                return Ok(g.values[0]);
            }
            let idx = WeightedIndex::new(&g.probabilities)
                .map_err(|e| Error::Parse(format!("grid `{}`: {e}", g.name)))?;
            Ok(g.values[idx.sample(rng)])
        })
        .collect()
}

/// Generating model of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub distribution: Distribution,
    pub intercept: f64,
    /// Coefficient per parent name.
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    /// Residual standard deviation (gaussian nodes only).
    #[serde(default)]
    pub sd: Option<f64>,
}

/// A complete generating model plus sample size and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_obs: usize,
    pub seed: u64,
    #[serde(rename = "node")]
    pub nodes: Vec<NodeSpec>,
}

impl SimSpec {
    pub fn names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    /// The DAG implied by the coefficient keys.
    pub fn dag(&self) -> Result<Dag> {
        let names = self.names();
        let mut parents = vec![0u64; names.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for p in node.coefficients.keys() {
                let j = names
                    .iter()
                    .position(|n| n == p)
                    .ok_or_else(|| Error::UnknownName(p.clone()))?;
                parents[i] |= bit(j);
            }
        }
        Dag::new(names, parents)
    }

    pub fn validate(&self) -> Result<Dag> {
        if self.n_obs == 0 {
            return Err(Error::NoObservations);
        }
        for node in &self.nodes {
            let finite = node.intercept.is_finite() && node.coefficients.values().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteData);
            }
            match (node.distribution, node.sd) {
                (Distribution::Gaussian, Some(sd)) if sd > 0.0 && sd.is_finite() => {}
                (Distribution::Gaussian, _) => {
                    return Err(Error::Parse(format!("gaussian node `{}` needs sd > 0", node.name)))
                }
                _ => {}
            }
        }
        self.dag()
    }

    /// Model built from per-node fits (in `dag` node order). Gaussian
    /// residual sd comes from the fitted log-precision.
    pub fn from_fits(dag: &Dag, fits: &[FitResult], n_obs: usize, seed: u64) -> Result<Self> {
        let params: Vec<Vec<f64>> = fits.iter().map(FitResult::parameters).collect();
        Self::from_parameters(dag, fits, &params, n_obs, seed)
    }

    /// Like [`SimSpec::from_fits`] but with replacement parameter vectors
    /// laid out as [`FitResult::parameters`].
    pub fn from_parameters(
        dag: &Dag,
        fits: &[FitResult],
        params: &[Vec<f64>],
        n_obs: usize,
        seed: u64,
    ) -> Result<Self> {
        if fits.len() != dag.n_nodes() || params.len() != fits.len() {
            return Err(Error::NodeSetMismatch);
        }
        let mut nodes = Vec::with_capacity(fits.len());
        for ((name, fit), p) in dag.nodes().iter().zip(fits).zip(params) {
            if &fit.child != name || p.len() != fit.n_params() {
                return Err(Error::NodeSetMismatch);
            }
            let mut intercept = 0.0;
            let mut coefficients = BTreeMap::new();
            for (label, &v) in fit.labels.iter().zip(p) {
                if label == INTERCEPT {
                    intercept = v;
                } else {
                    coefficients.insert(label.clone(), v);
                }
            }
            let distribution = match fit.family {
                crate::glm::Family::BinomialLogit => Distribution::Binomial,
                crate::glm::Family::GaussianIdentity => Distribution::Gaussian,
                crate::glm::Family::PoissonLog => Distribution::Poisson,
            };
            let sd = (distribution == Distribution::Gaussian).then(|| {
                let psi = if p.len() > fit.coefficients.len() {
                    p[p.len() - 1]
                } else {
                    fit.log_precision.unwrap_or(0.0)
                };
                (-0.5 * psi).exp()
            });
            nodes.push(NodeSpec {
                name: name.clone(),
                distribution,
                intercept,
                coefficients,
                sd,
            });
        }
        Ok(SimSpec { n_obs, seed, nodes })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Ancestral sampling of `spec.n_obs` rows in topological order.
pub fn simulate_data(spec: &SimSpec) -> Result<Dataset> {
    let dag = spec.validate()?;
    let n = spec.n_obs;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); dag.n_nodes()];
    for i in dag.topological_order() {
        let node = &spec.nodes[i];
        let terms: Vec<(usize, f64)> = node
            .coefficients
            .iter()
            .map(|(p, &c)| (dag.index_of(p).expect("validated"), c))
            .collect();
        let mut col = Vec::with_capacity(n);
        for row in 0..n {
            let eta = node.intercept + terms.iter().map(|&(j, c)| c * columns[j][row]).sum::<f64>();
            let v = match node.distribution {
                Distribution::Binomial => {
                    let p = crate::glm::Family::BinomialLogit.mean(eta);
                    f64::from(u8::from(rng.random::<f64>() < p))
                }
                Distribution::Gaussian => {
                    let sd = node.sd.expect("validated");
                    Normal::new(eta, sd)
                        .map_err(|e| Error::Parse(e.to_string()))?
                        .sample(&mut rng)
                }
                Distribution::Poisson => {
                    let rate = eta.exp();
                    if !(rate <= MAX_POISSON_RATE) {
                        return Err(Error::PoissonOverflow {
                            node: node.name.clone(),
                            rate,
                        });
                    }
                    if rate > 0.0 {
                        Poisson::new(rate)
                            .map_err(|e| Error::Parse(e.to_string()))?
                            .sample(&mut rng)
                    } else {
                        0.0
                    }
                }
            };
            if !v.is_finite() {
                return Err(Error::NonFiniteData);
            }
            col.push(v);
        }
        columns[i] = col;
    }
    Dataset::from_columns(
        spec.names(),
        spec.nodes.iter().map(|n| n.distribution).collect(),
        columns,
    )
}
