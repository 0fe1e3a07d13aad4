//! Parametric bootstrap of a learned structure and support-based pruning.

use crate::cache::{build_cache, ScoreType};
use crate::dag::{ConstraintSet, Dag};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exact::{exact_search, StructuralPrior};
use crate::glm::{marginal_densities, FitMethod, FitResult, PriorSpec, RangePolicy};
use crate::heuristic::majority_consensus;
use crate::simulate::{sample_posterior_params, simulate_data, GridPosterior, SimSpec};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Share of failed replicates above which the run is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SupportMode {
    #[default]
    Directed,
    Undirected,
}

impl fmt::Display for SupportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SupportMode::Directed => "directed",
            SupportMode::Undirected => "undirected",
        })
    }
}

impl std::str::FromStr for SupportMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(SupportMode::Directed),
            "undirected" => Ok(SupportMode::Undirected),
            other => Err(Error::Parse(format!("unknown support mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_replicates: usize,
    pub seed: u64,
    pub priors: PriorSpec,
    pub structural_prior: StructuralPrior,
    /// Grid points per parameter for the posterior draws.
    pub n_grid: usize,
    pub range: RangePolicy,
    pub threshold: f64,
    pub mode: SupportMode,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_replicates: 200,
            seed: 0,
            priors: PriorSpec::default(),
            structural_prior: StructuralPrior::Koivisto,
            n_grid: 200,
            range: RangePolicy::default(),
            threshold: 0.5,
            mode: SupportMode::Directed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub index: usize,
    pub dag: Option<Dag>,
    pub n_arcs: Option<usize>,
    pub score: Option<f64>,
    pub error: Option<String>,
}

/// Directed and undirected arc frequencies, `[child][parent]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcSupport {
    pub nodes: Vec<String>,
    pub directed: Vec<Vec<f64>>,
    pub undirected: Vec<Vec<f64>>,
}

impl ArcSupport {
    pub fn get(&self, mode: SupportMode, parent: usize, child: usize) -> f64 {
        match mode {
            SupportMode::Directed => self.directed[child][parent],
            SupportMode::Undirected => self.undirected[child][parent],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub n_replicates: usize,
    pub n_failed: usize,
    pub replicates: Vec<ReplicateSummary>,
    pub support: ArcSupport,
    pub original: Dag,
    pub pruned: Dag,
    pub threshold: f64,
    pub mode: SupportMode,
}

impl BootstrapReport {
    /// Arc counts of the successful replicates.
    pub fn arc_counts(&self) -> Vec<usize> {
        self.replicates.iter().filter_map(|r| r.n_arcs).collect()
    }

    pub fn median_arc_count(&self) -> f64 {
        let mut c = self.arc_counts();
        if c.is_empty() {
            return f64::NAN;
        }
        c.sort_unstable();
        let m = c.len() / 2;
        if c.len() % 2 == 1 {
            c[m] as f64
        } else {
            (c[m - 1] + c[m]) as f64 / 2.0
        }
    }
}

pub fn arc_support_matrix(dags: &[Dag]) -> Result<ArcSupport> {
    let c = majority_consensus(dags, 1.0, true)?;
    let n = c.nodes.len();
    let mut undirected = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            undirected[i][j] = c.frequencies[i][j] + c.frequencies[j][i];
        }
    }
    Ok(ArcSupport {
        nodes: c.nodes,
        directed: c.frequencies,
        undirected,
    })
}

/// Keeps the arcs of `original` whose support reaches `threshold`.
pub fn prune_by_support(original: &Dag, support: &ArcSupport, threshold: f64, mode: SupportMode) -> Result<Dag> {
    if support.nodes != original.nodes() {
        return Err(Error::NodeSetMismatch);
    }
    let mut parents = vec![0u64; original.n_nodes()];
    for (p, c) in original.arcs() {
        if support.get(mode, p, c) >= threshold {
            parents[c] |= 1u64 << p;
        }
    }
    original.with_parents(parents)
}

fn replicate(
    index: usize,
    fits: &[FitResult],
    grids: Option<&[GridPosterior]>,
    dag: &Dag,
    ds: &Dataset,
    constraints: &ConstraintSet,
    config: &BootstrapConfig,
) -> Result<(Dag, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let params: Vec<Vec<f64>> = match grids {
        Some(g) => g
            .iter()
            .map(|g| sample_posterior_params(g, &mut rng))
            .collect::<Result<_>>()?,
        None => fits.iter().map(FitResult::parameters).collect(),
    };
    let spec = SimSpec::from_parameters(dag, fits, &params, ds.n_obs(), rng.next_u64())?;
    let sim = simulate_data(&spec)?;
    let method = fits[0].method;
    let cache = build_cache(&sim, constraints, method, &config.priors)?;
    if let Some(i) = (0..cache.n_nodes()).find(|&i| {
        cache.entries(i).iter().all(|e| e.diagnostic.is_some())
    }) {
        return Err(Error::FitFailed(format!("every parent set of `{}` failed", cache.nodes[i])));
    }
    let scores = cache.local_scores(ScoreType::default_for(method))?;
    let r = exact_search(&scores, config.structural_prior)?;
    Ok((r.dag, r.total))
}

/// Simulates `n_replicates` datasets of the original size from the fitted
/// model, re-learns the structure of each by exact search under the same
/// constraints, and prunes `dag` by the resulting arc support.
///
/// Bayes fits contribute fresh parameters per replicate, drawn from grids
/// over their marginal posteriors; MLE fits are used as point values.
pub fn run_bootstrap(
    fits: &[FitResult],
    dag: &Dag,
    ds: &Dataset,
    constraints: &ConstraintSet,
    config: &BootstrapConfig,
) -> Result<BootstrapReport> {
    if config.n_replicates == 0 {
        return Err(Error::Parse("need at least one replicate".into()));
    }
    if ds.names() != dag.nodes() || fits.len() != dag.n_nodes() {
        return Err(Error::NodeSetMismatch);
    }
    constraints.validate(dag.nodes())?;
    let grids: Option<Vec<GridPosterior>> = if fits.iter().all(|f| f.method == FitMethod::Bayes) {
        Some(
            fits.iter()
                .map(|f| GridPosterior::from_densities(&marginal_densities(f, config.n_grid, &config.range)?))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let replicates: Vec<ReplicateSummary> = (0..config.n_replicates)
        .into_par_iter()
        .map(|index| match replicate(index, fits, grids.as_deref(), dag, ds, constraints, config) {
            Ok((d, score)) => ReplicateSummary {
                index,
                n_arcs: Some(d.n_arcs()),
                dag: Some(d),
                score: Some(score),
                error: None,
            },
            Err(e) => {
                log::warn!("bootstrap replicate {index} failed: {e}");
                ReplicateSummary {
                    index,
                    dag: None,
                    n_arcs: None,
                    score: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let n_failed = replicates.iter().filter(|r| r.error.is_some()).count();
    if n_failed as f64 > MAX_FAILURE_RATE * config.n_replicates as f64 || n_failed == config.n_replicates {
        return Err(Error::TooManyReplicateFailures {
            failed: n_failed,
            total: config.n_replicates,
        });
    }
    let dags: Vec<Dag> = replicates.iter().filter_map(|r| r.dag.clone()).collect();
    let support = arc_support_matrix(&dags)?;
    let pruned = prune_by_support(dag, &support, config.threshold, config.mode)?;
    Ok(BootstrapReport {
        n_replicates: config.n_replicates,
        n_failed,
        replicates,
        support,
        original: dag.clone(),
        pruned,
        threshold: config.threshold,
        mode: config.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::fit_dag;
    use crate::simulate::NodeSpec;
    use crate::data::Distribution;
    use std::collections::BTreeMap;

    fn model(n_obs: usize, seed: u64) -> SimSpec {
        let node = |name: &str, d: Distribution, b0: f64, parents: &[(&str, f64)], sd: Option<f64>| NodeSpec {
            name: name.into(),
            distribution: d,
            intercept: b0,
            coefficients: parents.iter().map(|(p, v)| (p.to_string(), *v)).collect::<BTreeMap<_, _>>(),
            sd,
        };
        SimSpec {
            n_obs,
            seed,
            nodes: vec![
                node("a", Distribution::Gaussian, 0.0, &[], Some(1.0)),
                node("b", Distribution::Binomial, 0.0, &[("a", 1.5)], None),
                node("c", Distribution::Poisson, 0.5, &[("a", 0.6)], None),
                node("d", Distribution::Gaussian, 0.0, &[], Some(1.0)),
            ],
        }
    }

    fn setup(n: usize) -> (Dataset, Dag, Vec<FitResult>, ConstraintSet) {
        let ds = simulate_data(&model(n, 5)).unwrap();
        let cache = build_cache(&ds, &ConstraintSet::unconstrained(4, 2), FitMethod::Bayes, &PriorSpec::default()).unwrap();
        let dag = exact_search(&cache.local_scores(ScoreType::Mlik).unwrap(), StructuralPrior::Koivisto).unwrap().dag;
        let fits = fit_dag(&ds, &dag, FitMethod::Bayes, &PriorSpec::default()).unwrap();
        (ds, dag, fits, ConstraintSet::unconstrained(4, 2))
    }

    #[test]
    fn support_of_opposite_arcs() {
        let names: Vec<String> = vec!["a".into(), "b".into()];
        let ab = Dag::new(names.clone(), vec![0, 1]).unwrap();
        let ba = Dag::new(names.clone(), vec![2, 0]).unwrap();
        let s = arc_support_matrix(&[ab.clone(), ba]).unwrap();
        assert_eq!(s.directed[1][0], 0.5);
        assert_eq!(s.directed[0][1], 0.5);
        assert_eq!(s.undirected[1][0], 1.0);
        let single = arc_support_matrix(std::slice::from_ref(&ab)).unwrap();
        assert_eq!(single.directed, vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(prune_by_support(&ab, &s, 0.6, SupportMode::Directed).unwrap().n_arcs(), 0);
        assert_eq!(prune_by_support(&ab, &s, 0.6, SupportMode::Undirected).unwrap().n_arcs(), 1);
    }

    #[test]
    fn pipeline_is_deterministic_and_prunes_monotonically() {
        let (ds, dag, fits, c) = setup(300);
        let config = BootstrapConfig {
            n_replicates: 12,
            seed: 7,
            ..BootstrapConfig::default()
        };
        let a = run_bootstrap(&fits, &dag, &ds, &c, &config).unwrap();
        let b = run_bootstrap(&fits, &dag, &ds, &c, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.arc_counts().len() + a.n_failed, 12);
        assert!(a.support.directed.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        let zero = prune_by_support(&dag, &a.support, 0.0, SupportMode::Directed).unwrap();
        assert_eq!(zero, dag);
        let mut last = usize::MAX;
        for t in [0.0, 0.25, 0.5, 0.75, 1.0, 1.0 + 1e-9] {
            let p = prune_by_support(&dag, &a.support, t, SupportMode::Directed).unwrap();
            assert!(p.n_arcs() <= last);
            for (pp, cc) in p.arcs() {
                assert!(dag.has_arc(pp, cc));
            }
            last = p.n_arcs();
        }
        assert_eq!(last, 0);
    }

    #[test]
    fn single_replicate_support_is_its_adjacency() {
        let (ds, dag, fits, c) = setup(200);
        let config = BootstrapConfig {
            n_replicates: 1,
            seed: 3,
            ..BootstrapConfig::default()
        };
        let r = run_bootstrap(&fits, &dag, &ds, &c, &config).unwrap();
        let d = r.replicates[0].dag.as_ref().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if d.has_arc(j, i) { 1.0 } else { 0.0 };
                assert_eq!(r.support.directed[i][j], expect);
            }
        }
    }

    #[test]
    fn banned_child_has_no_support() {
        let (ds, dag, fits, mut c) = setup(200);
        c.banned[3] = 0b0111;
        let config = BootstrapConfig {
            n_replicates: 6,
            seed: 1,
            ..BootstrapConfig::default()
        };
        let r = run_bootstrap(&fits, &dag, &ds, &c, &config).unwrap();
        assert!(r.support.directed[3].iter().all(|&v| v == 0.0));
    }
}
