//! Additive Bayesian network (ABN) structure learning.
//!
//! Each node of an ABN is a generalized linear model whose covariates are its
//! parents. This crate scores candidate parent sets per node, searches for
//! optimal DAGs (exact subset dynamic programming or heuristics), estimates
//! effect sizes and their marginal densities, quantifies arc strength with
//! information-theoretic measures, and controls over-fitting with a
//! parametric bootstrap.

pub mod bootstrap;
pub mod cache;
pub mod dag;
pub mod data;
pub mod error;
pub mod exact;
pub mod glm;
pub mod heuristic;
pub mod simulate;
pub mod strength;

pub use dag::{compare_dags, info_metrics, ConstraintSet, Dag, DagComparison, DagMetrics};
pub use data::{build_design, load_dataset, Dataset, DesignMatrix, DistSpec, Distribution};
pub use error::{Error, Result};
pub use glm::{fit_dag, fit_node, Family, FitMethod, FitResult, PriorSpec};
pub use cache::{build_cache, enumerate_parent_sets, LocalScores, ScoreCache, ScoreType};
pub use exact::{exact_search, most_probable_dag, BestParentTable, ExactResult, StructuralPrior};
pub use heuristic::{heuristic_search, majority_consensus, repair_to_dag, Algorithm, Consensus, HeuristicConfig, SearchTrace};
pub use simulate::{sample_posterior_params, simulate_dag, simulate_data, GridPosterior, NodeSpec, SimSpec};
pub use strength::{discretize, empirical_entropy, mutual_information, pls_matrix, BinRule, DiscretizedData};
pub use bootstrap::{arc_support_matrix, prune_by_support, run_bootstrap, BootstrapConfig, BootstrapReport, SupportMode};
