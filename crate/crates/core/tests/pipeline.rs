use abnkit::{
    build_cache, exact_search, fit_dag, heuristic_search, run_bootstrap, simulate_data, Algorithm, BootstrapConfig,
    ConstraintSet, Dag, FitMethod, HeuristicConfig, PriorSpec, ScoreCache, ScoreType, SimSpec, StructuralPrior,
};
use std::io::BufReader;

const SPEC: &str = r#"
n_obs = 2000
seed = 17

[[node]]
name = "a"
distribution = "binomial"
intercept = -0.2

[[node]]
name = "b"
distribution = "gaussian"
intercept = 0.0
sd = 1.0
coefficients = { a = 1.2 }

[[node]]
name = "c"
distribution = "poisson"
intercept = 0.3
coefficients = { b = 0.4 }

[[node]]
name = "d"
distribution = "binomial"
intercept = 0.0
coefficients = { b = -1.0, c = 0.3 }

[[node]]
name = "e"
distribution = "gaussian"
intercept = 1.0
sd = 0.5
"#;

fn spec() -> SimSpec {
    SimSpec::from_toml(SPEC).unwrap()
}

fn skeleton(dag: &Dag) -> Vec<(usize, usize)> {
    let mut s: Vec<_> = dag.arcs().into_iter().map(|(p, c)| (p.min(c), p.max(c))).collect();
    s.sort();
    s
}

#[test]
fn exact_search_recovers_the_generating_skeleton() {
    let spec = spec();
    let truth = spec.dag().unwrap();
    let ds = simulate_data(&spec).unwrap();
    let cs = ConstraintSet::unconstrained(ds.n_vars(), 2);
    for (method, score) in [(FitMethod::Mle, ScoreType::Bic), (FitMethod::Bayes, ScoreType::Mlik)] {
        let cache = build_cache(&ds, &cs, method, &PriorSpec::default()).unwrap();
        let res = exact_search(&cache.local_scores(score).unwrap(), StructuralPrior::Koivisto).unwrap();
        assert_eq!(skeleton(&res.dag), skeleton(&truth), "{score}");
    }
}

#[test]
fn cache_file_round_trip_gives_the_same_optimum() {
    let ds = simulate_data(&spec()).unwrap();
    let cs = ConstraintSet::unconstrained(ds.n_vars(), 2);
    let cache = build_cache(&ds, &cs, FitMethod::Mle, &PriorSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.txt");
    cache.write(std::fs::File::create(&path).unwrap()).unwrap();
    let back = ScoreCache::read_for(BufReader::new(std::fs::File::open(&path).unwrap()), &ds).unwrap();
    for st in [ScoreType::LogLik, ScoreType::Aic, ScoreType::Bic, ScoreType::Mdl] {
        let a = exact_search(&cache.local_scores(st).unwrap(), StructuralPrior::Uninformative).unwrap();
        let b = exact_search(&back.local_scores(st).unwrap(), StructuralPrior::Uninformative).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn heuristic_restarts_reach_the_exact_optimum() {
    let ds = simulate_data(&spec()).unwrap();
    let cs = ConstraintSet::unconstrained(ds.n_vars(), 2);
    let cache = build_cache(&ds, &cs, FitMethod::Mle, &PriorSpec::default()).unwrap();
    let scores = cache.local_scores(ScoreType::Bic).unwrap();
    let exact = exact_search(&scores, StructuralPrior::Uninformative).unwrap();
    for algorithm in [Algorithm::HillClimb, Algorithm::Tabu] {
        let config = HeuristicConfig {
            algorithm,
            restarts: 30,
            seed: 4,
            ..HeuristicConfig::default()
        };
        let trace = heuristic_search(&scores, &cs, &config).unwrap();
        let best = trace.best().score;
        assert!((best - exact.data_score).abs() < 1e-9, "{algorithm}: {best} vs {}", exact.data_score);
    }
}

#[test]
fn fitted_coefficients_match_the_generating_model() {
    let mut spec = spec();
    spec.n_obs = 20_000;
    let ds = simulate_data(&spec).unwrap();
    let dag = spec.dag().unwrap();
    let fits = fit_dag(&ds, &dag, FitMethod::Mle, &PriorSpec::default()).unwrap();
    for (node, fit) in spec.nodes.iter().zip(&fits) {
        assert!((fit.coefficient("(Intercept)").unwrap() - node.intercept).abs() < 0.1, "{}", node.name);
        for (parent, want) in &node.coefficients {
            let got = fit.coefficient(parent).unwrap();
            assert!((got - want).abs() < 0.06, "{}|{parent}: {got} vs {want}", node.name);
        }
    }
}

#[test]
fn bootstrap_prunes_to_a_subset_of_the_original() {
    let mut spec = spec();
    spec.n_obs = 150;
    let ds = simulate_data(&spec).unwrap().standardize().unwrap();
    let dag = spec.dag().unwrap();
    let fits = fit_dag(&ds, &dag, FitMethod::Bayes, &PriorSpec::default()).unwrap();
    let cs = ConstraintSet::unconstrained(ds.n_vars(), 2);
    let config = BootstrapConfig {
        n_replicates: 6,
        seed: 3,
        n_grid: 60,
        ..BootstrapConfig::default()
    };
    let rep = run_bootstrap(&fits, &dag, &ds, &cs, &config).unwrap();
    assert_eq!(rep.n_replicates, 6);
    for (p, c) in rep.pruned.arcs() {
        assert!(dag.has_arc(p, c));
    }
}
