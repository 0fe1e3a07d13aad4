//! `abnkit`: learn additive Bayesian network models from CSV data.

mod commands;
mod util;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "abnkit", version, about = "Additive Bayesian network structure learning")]
struct Cli {
    /// Worker threads for cache building, restarts and replicates (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log progress (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Distribution spec: one `column = binomial|gaussian|poisson` per line
    #[arg(long)]
    pub dists: PathBuf,
    /// Center and scale gaussian columns to unit sample variance
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ConstraintArgs {
    /// Banned arcs: a formula such as `~a|b:c` or an adjacency CSV file
    #[arg(long)]
    pub ban: Option<String>,
    /// Retained arcs: a formula or an adjacency CSV file
    #[arg(long)]
    pub retain: Option<String>,
    /// Maximum number of parents per node
    #[arg(long, default_value_t = 4)]
    pub max_parents: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ScoreArgs {
    /// Estimation route: bayes (Laplace marginal likelihood) or mle
    #[arg(long, default_value = "bayes")]
    pub method: String,
    /// Score: mlik for bayes; loglik, aic, bic or mdl for mle (default: mlik / bic)
    #[arg(long)]
    pub score: Option<String>,
    /// Structural prior for exact search: koivisto or uninformative
    #[arg(long, default_value = "koivisto")]
    pub prior: String,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory (created if missing)
    #[arg(long, default_value = "abnkit-out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score every admissible parent set of every node
    BuildCache {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        constraints: ConstraintArgs,
        /// Estimation route: bayes or mle
        #[arg(long, default_value = "bayes")]
        method: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Structure search over a score cache
    Search {
        #[command(subcommand)]
        kind: SearchKind,
    },
    /// Fit the node models of a DAG
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// DAG as adjacency CSV file
        #[arg(long, conflicts_with = "formula")]
        dag: Option<PathBuf>,
        /// DAG as formula, e.g. `~b|a + c|a:b`
        #[arg(long)]
        formula: Option<String>,
        /// Estimation route: bayes or mle
        #[arg(long, default_value = "bayes")]
        method: String,
        /// Grid points for marginal posterior densities (bayes only; 0 = none)
        #[arg(long, default_value_t = 0)]
        marginals: usize,
        /// Marginal grid half-width in posterior standard deviations
        #[arg(long, default_value_t = 6.0)]
        range: f64,
        /// Also write per-observation log-likelihood terms and leverages
        #[arg(long)]
        contributions: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Optimal network score for each parent limit 1..=max
    SweepParents {
        #[command(flatten)]
        data: DataArgs,
        /// Banned arcs: formula or adjacency CSV file
        #[arg(long)]
        ban: Option<String>,
        /// Retained arcs: formula or adjacency CSV file
        #[arg(long)]
        retain: Option<String>,
        /// Largest parent limit
        #[arg(long, default_value_t = 7)]
        max: usize,
        #[command(flatten)]
        score: ScoreArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Random DAGs and data from a generating model
    Simulate {
        #[command(subcommand)]
        kind: SimulateKind,
    },
    /// Parametric bootstrap of a DAG and pruning by arc support
    Bootstrap {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        constraints: ConstraintArgs,
        /// DAG to assess, as adjacency CSV file
        #[arg(long)]
        dag: PathBuf,
        /// Estimation route for the fitted model and the replicate caches
        #[arg(long, default_value = "bayes")]
        method: String,
        /// Structural prior for replicate searches
        #[arg(long, default_value = "koivisto")]
        prior: String,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        /// Seed (generated and printed when absent)
        #[arg(long)]
        seed: Option<u64>,
        /// Minimum support for an arc to survive pruning
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// directed or undirected support
        #[arg(long, default_value = "directed")]
        mode: String,
        /// Grid points per parameter for posterior draws
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Percentage link strength and mutual information of each arc
    Strength {
        #[command(flatten)]
        data: DataArgs,
        /// DAG as adjacency CSV file
        #[arg(long)]
        dag: PathBuf,
        /// Binning rule: fixed_k:K (default fixed_k:8), sturges, scott or fd
        #[arg(long, default_value = "fixed_k:8")]
        rule: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compare a candidate DAG against a reference DAG
    Compare {
        reference: PathBuf,
        candidate: PathBuf,
    },
    /// Structural summary of a DAG
    Info {
        dag: PathBuf,
        /// Print the Markov blanket of this node
        #[arg(long)]
        markov_blanket: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum SearchKind {
    /// Exact MAP DAG by dynamic programming over node subsets
    Exact {
        /// Score cache written by build-cache
        #[arg(long)]
        cache: PathBuf,
        /// Optional dataset: checks the cache fingerprint and fits the selected DAG
        #[arg(long, requires = "dists")]
        data: Option<PathBuf>,
        #[arg(long)]
        dists: Option<PathBuf>,
        #[arg(long)]
        standardize: bool,
        /// Score (default: mlik for bayes caches, bic for mle caches)
        #[arg(long)]
        score: Option<String>,
        /// Structural prior: koivisto or uninformative
        #[arg(long, default_value = "koivisto")]
        prior: String,
        /// Memory budget for the DP tables, in MiB
        #[arg(long, default_value_t = 8192)]
        memory_mb: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Hill-climbing, tabu or simulated annealing search
    Heuristic {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, requires = "dists")]
        data: Option<PathBuf>,
        #[arg(long)]
        dists: Option<PathBuf>,
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        score: Option<String>,
        /// hill_climb, tabu or simulated_annealing
        #[arg(long, default_value = "hill_climb")]
        algorithm: String,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
        #[arg(long, default_value_t = 10)]
        tabu_length: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0.995)]
        cooling: f64,
        /// Share of admissible arcs tried when seeding each restart
        #[arg(long, default_value_t = 0.1)]
        density: f64,
        /// Consensus threshold over restarts
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Seed (generated and printed when absent)
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Subcommand, Debug)]
enum SimulateKind {
    /// Random DAG: random node order, each forward arc with probability --prob
    Dag {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        prob: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Ancestral sampling from a TOML model spec
    Data {
        /// Model spec (TOML)
        #[arg(long)]
        spec: PathBuf,
        /// Override the spec's sample size
        #[arg(long)]
        n_obs: Option<usize>,
        /// Override the spec's seed
        #[arg(long)]
        seed: Option<u64>,
        /// Accepted for compatibility with MCMC workflows; draws are independent
        #[arg(long)]
        thinning: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()?;
    }
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match cli.command {
        Command::BuildCache {
            data,
            constraints,
            method,
            out,
        } => commands::build_cache(&data, &constraints, &method, &out.out, &argv),
        Command::Search { kind } => match kind {
            SearchKind::Exact {
                cache,
                data,
                dists,
                standardize,
                score,
                prior,
                memory_mb,
                out,
            } => commands::search_exact(
                &cache,
                util::optional_data(data, dists, standardize),
                score.as_deref(),
                &prior,
                memory_mb,
                &out.out,
                &argv,
            ),
            SearchKind::Heuristic {
                cache,
                data,
                dists,
                standardize,
                score,
                algorithm,
                restarts,
                max_steps,
                tabu_length,
                temperature,
                cooling,
                density,
                threshold,
                seed,
                out,
            } => {
                let config = abnkit::HeuristicConfig {
                    algorithm: algorithm.parse()?,
                    restarts,
                    max_steps,
                    tabu_length,
                    initial_temperature: temperature,
                    cooling_factor: cooling,
                    initial_density: density,
                    seed: util::seed_or_generate(seed),
                };
                commands::search_heuristic(
                    &cache,
                    util::optional_data(data, dists, standardize),
                    score.as_deref(),
                    config,
                    threshold,
                    &out.out,
                    &argv,
                )
            }
        },
        Command::Fit {
            data,
            dag,
            formula,
            method,
            marginals,
            range,
            contributions,
            out,
        } => commands::fit(
            &data,
            dag.as_deref(),
            formula.as_deref(),
            &method,
            marginals,
            range,
            contributions,
            &out.out,
            &argv,
        ),
        Command::SweepParents {
            data,
            ban,
            retain,
            max,
            score,
            out,
        } => commands::sweep_parents(&data, ban, retain, max, &score, &out.out, &argv),
        Command::Simulate { kind } => match kind {
            SimulateKind::Dag {
                nodes,
                prob,
                seed,
                out,
            } => commands::simulate_dag(nodes, prob, util::seed_or_generate(seed), &out.out, &argv),
            SimulateKind::Data {
                spec,
                n_obs,
                seed,
                thinning,
                out,
            } => commands::simulate_data(&spec, n_obs, seed, thinning, &out.out, &argv),
        },
        Command::Bootstrap {
            data,
            constraints,
            dag,
            method,
            prior,
            replicates,
            seed,
            threshold,
            mode,
            grid,
            out,
        } => {
            let config = abnkit::BootstrapConfig {
                n_replicates: replicates,
                seed: util::seed_or_generate(seed),
                structural_prior: prior.parse()?,
                n_grid: grid,
                threshold,
                mode: mode.parse()?,
                ..abnkit::BootstrapConfig::default()
            };
            commands::bootstrap(&data, &constraints, &dag, &method, config, &out.out, &argv)
        }
        Command::Strength {
            data,
            dag,
            rule,
            out,
        } => commands::strength(&data, &dag, &rule, &out.out, &argv),
        Command::Compare {
            reference,
            candidate,
        } => commands::compare(&reference, &candidate),
        Command::Info {
            dag,
            markov_blanket,
        } => commands::info(&dag, markov_blanket.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let text: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(|l| l.trim_start_matches("error: ").trim())
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error[UsageError]: {}", text.join(" "));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e
                .downcast_ref::<abnkit::Error>()
                .map(abnkit::Error::class)
                .or_else(|| e.downcast_ref::<std::io::Error>().map(|_| "IoError"))
                .unwrap_or("Error");
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{class}]: {msg}");
            ExitCode::FAILURE
        }
    }
}
